#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "admmopf/netdata.hpp"

namespace admmopf {

using Vec4 = Eigen::Vector4d;
using Vec8 = Eigen::Matrix<double, 8, 1>;

// Generator block: boxed scalar quadratics in p and q.
struct GenSubproblem {
  double c2 = 0, c1 = 0;
  double pmin = 0, pmax = 0, qmin = 0, qmax = 0;
  double xbar_p = 0, y_p = 0, rho_p = 1;
  double xbar_q = 0, y_q = 0, rho_q = 1;
};

std::pair<double, double> solve_generator(const GenSubproblem& sub);

// Branch block: 4 free variables u = (w_i, w_j, theta_i, theta_j); the 8
// consensus quantities z(u) = (p_ij, q_ij, p_ji, q_ji, w_i, w_j, th_i, th_j)
// follow from the polar substitution wR = sqrt(w_i w_j) cos(th_i - th_j),
// wI = sqrt(w_i w_j) sin(th_i - th_j).
struct BranchSubproblem {
  Admittance adm;
  double rate = 0.0;  // per-unit apparent-power limit; 0 = none
  double wi_min = 0.5, wi_max = 2.0;
  double wj_min = 0.5, wj_max = 2.0;
  Vec8 xbar = Vec8::Zero();
  Vec8 y = Vec8::Zero();
  Vec8 rho = Vec8::Ones();
  Vec4 warm = Vec4::Zero();  // (w_i, w_j, theta_i, theta_j); clamped if outside
  double mu = 1e3;           // smooth quartic limit-penalty weight
  double tol = 1e-8;
  int max_iter = 200;
};

struct BranchSolution {
  Vec4 u;
  Vec8 z;
  double f = 0;
  double projected_gradient_norm = 0;
  int iterations = 0;
  double limit_penalty = 0;  // value of the quartic penalty at u*
};

Vec8 branch_quantities(const Admittance& adm, const Vec4& u);
double branch_objective(const BranchSubproblem& sub, const Vec4& u);
Vec4 branch_gradient(const BranchSubproblem& sub, const Vec4& u);
BranchSolution solve_branch(const BranchSubproblem& sub);

// Bus block: diagonal QP over the bus-side copies subject to the two power
// balance equalities. Each variable carries its balance-row coefficients
// (a for the P row, b for the Q row) and the consensus terms incident to it.
struct BusTerm {
  double xhat = 0;  // component-side value
  double y = 0;
  double rho = 0;
};

struct BusVariable {
  double a = 0, b = 0;
  double prev = 0;  // held when no consensus term is incident
  std::vector<BusTerm> terms;
};

struct BusSubproblem {
  double pd = 0, qd = 0;
  bool slack = false;
  int theta_index = -1;  // excluded from the balances; pinned to 0 when slack
  std::vector<BusVariable> vars;
};

Eigen::VectorXd solve_bus(const BusSubproblem& sub);

}  // namespace admmopf
