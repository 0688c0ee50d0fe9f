#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "admmopf/netdata.hpp"

namespace admmopf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Category { PQ, VTheta };

// Quantity tags in the fixed per-component ordering: generators contribute
// (Pg, Qg); branches contribute (Pij, Qij, Pji, Qji, Wi, Wj, ThetaI, ThetaJ).
enum class Quantity { Pg, Qg, Pij, Qij, Pji, Qji, Wi, Wj, ThetaI, ThetaJ };

struct Owner {
  enum class Kind { Generator, Branch };
  Kind kind = Kind::Generator;
  int index = 0;  // generator or branch index in the NetworkModel
};

// One consensus equality x[x_slot] - xbar[xbar_slot] = 0 (A has +1, B has -1).
struct CouplingConstraint {
  int id = 0;
  Category category = Category::PQ;
  int x_slot = 0;
  int xbar_slot = 0;
  Owner owner;
  Quantity quantity = Quantity::Pg;
};

// Slot maps realizing A and B. Components own contiguous x ranges
// (2 per generator, 8 per branch); buses own contiguous xbar ranges
// (per-bus: generator copies, flow copies, then w and theta).
struct Layout {
  int n_x = 0, n_xbar = 0, n_constraints = 0;
  int n_pq = 0, n_vtheta = 0;

  std::vector<int> gen_x0;     // first of 2 x slots per generator (-1 if out)
  std::vector<int> branch_x0;  // first of 8 x slots per branch (-1 if out)

  std::vector<int> gen_xbar0;          // first of 2 xbar slots (-1 if out)
  std::vector<int> branch_from_xbar0;  // flow copies at the from bus
  std::vector<int> branch_to_xbar0;    // flow copies at the to bus
  std::vector<int> bus_w_slot;         // xbar slot of w_i
  std::vector<int> bus_theta_slot;     // xbar slot of theta_i

  std::vector<int> pq_ids, vtheta_ids;  // constraint ids per category
};

struct Decomposition {
  Layout layout;
  std::vector<CouplingConstraint> constraints;
};

// Per-constraint penalties rho_i > 0; Omega_ii = rho_i / 2.
struct RhoVector {
  Vector values;

  Vector pq_view(const Layout& l) const;
  Vector vtheta_view(const Layout& l) const;
};

RhoVector make_rho(const Layout& l, double rho_pq, double rho_vtheta);

// Deterministic constraint ordering: generators in input order, then branches
// in input order, quantities in the tag order above. Out-of-service elements
// contribute nothing.
Decomposition build_decomposition(const NetworkModel& m);

// r_p[i] = x[x_slot(i)] - xbar[xbar_slot(i)]
Vector residual_primal(const Vector& x, const Vector& xbar,
                       const Decomposition& d);

// r_d[i] = -rho_i * (xbar_now[xbar_slot(i)] - xbar_prev[xbar_slot(i)])
Vector residual_dual(const Vector& xbar_now, const Vector& xbar_prev,
                     const RhoVector& rho, const Decomposition& d);

// Debug dump: id, category, owner, quantity.
std::string registry_csv(const Decomposition& d);

const char* category_name(Category c);
const char* quantity_name(Quantity q);

}  // namespace admmopf
