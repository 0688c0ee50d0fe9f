#include "admmopf/subsolvers.hpp"

#include <cmath>

#include "admmopf/errors.hpp"
#include "admmopf/trustregion.hpp"

namespace admmopf {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}
}  // namespace

std::pair<double, double> solve_generator(const GenSubproblem& sub) {
  const double denom = 2.0 * sub.c2 + sub.rho_p;
  if (!(denom > 0)) throw SolverError("generator subproblem: 2*c2 + rho <= 0");
  if (!(sub.rho_q > 0)) throw SolverError("generator subproblem: rho_q <= 0");
  const double p =
      clamp((sub.rho_p * sub.xbar_p - sub.y_p - sub.c1) / denom, sub.pmin, sub.pmax);
  const double q =
      clamp((sub.rho_q * sub.xbar_q - sub.y_q) / sub.rho_q, sub.qmin, sub.qmax);
  return {p, q};
}

Vec8 branch_quantities(const Admittance& a, const Vec4& u) {
  const double wi = u[0], wj = u[1];
  const double s = std::sqrt(wi * wj);
  const double dth = u[2] - u[3];
  const double wR = s * std::cos(dth);
  const double wI = s * std::sin(dth);
  Vec8 z;
  z[0] = a.g_ii * wi + a.g_ij * wR + a.b_ij * wI;   // p_ij
  z[1] = -a.b_ii * wi - a.b_ij * wR + a.g_ij * wI;  // q_ij
  z[2] = a.g_jj * wj + a.g_ji * wR - a.b_ji * wI;   // p_ji
  z[3] = -a.b_jj * wj - a.b_ji * wR - a.g_ji * wI;  // q_ji
  z[4] = wi;
  z[5] = wj;
  z[6] = u[2];
  z[7] = u[3];
  return z;
}

double branch_objective(const BranchSubproblem& sub, const Vec4& u) {
  const Vec8 z = branch_quantities(sub.adm, u);
  double f = 0;
  for (int m = 0; m < 8; ++m) {
    const double d = z[m] - sub.xbar[m];
    f += sub.y[m] * d + 0.5 * sub.rho[m] * d * d;
  }
  if (sub.rate > 0) {
    const double r2 = sub.rate * sub.rate;
    const double vf = z[0] * z[0] + z[1] * z[1] - r2;
    const double vt = z[2] * z[2] + z[3] * z[3] - r2;
    if (vf > 0) f += sub.mu * vf * vf;
    if (vt > 0) f += sub.mu * vt * vt;
  }
  return f;
}

Vec4 branch_gradient(const BranchSubproblem& sub, const Vec4& u) {
  const Admittance& a = sub.adm;
  const double wi = u[0], wj = u[1];
  const double s = std::sqrt(wi * wj);
  const double dth = u[2] - u[3];
  const double c = std::cos(dth), sn = std::sin(dth);
  const double wR = s * c, wI = s * sn;

  const Vec8 z = branch_quantities(a, u);
  Vec8 dz;  // dF/dz
  for (int m = 0; m < 8; ++m)
    dz[m] = sub.y[m] + sub.rho[m] * (z[m] - sub.xbar[m]);
  if (sub.rate > 0) {
    const double r2 = sub.rate * sub.rate;
    const double vf = z[0] * z[0] + z[1] * z[1] - r2;
    const double vt = z[2] * z[2] + z[3] * z[3] - r2;
    if (vf > 0) {
      dz[0] += sub.mu * 4.0 * vf * z[0];
      dz[1] += sub.mu * 4.0 * vf * z[1];
    }
    if (vt > 0) {
      dz[2] += sub.mu * 4.0 * vt * z[2];
      dz[3] += sub.mu * 4.0 * vt * z[3];
    }
  }

  // Jacobian of (wR, wI) w.r.t. u.
  const double dwR_dwi = wj * c / (2.0 * s), dwR_dwj = wi * c / (2.0 * s);
  const double dwI_dwi = wj * sn / (2.0 * s), dwI_dwj = wi * sn / (2.0 * s);
  // d/d theta_i: dwR = -wI, dwI = +wR; theta_j negates both.

  Vec4 g = Vec4::Zero();
  // p_ij
  g[0] += dz[0] * (a.g_ii + a.g_ij * dwR_dwi + a.b_ij * dwI_dwi);
  g[1] += dz[0] * (a.g_ij * dwR_dwj + a.b_ij * dwI_dwj);
  g[2] += dz[0] * (a.g_ij * -wI + a.b_ij * wR);
  g[3] += dz[0] * (a.g_ij * wI + a.b_ij * -wR);
  // q_ij
  g[0] += dz[1] * (-a.b_ii - a.b_ij * dwR_dwi + a.g_ij * dwI_dwi);
  g[1] += dz[1] * (-a.b_ij * dwR_dwj + a.g_ij * dwI_dwj);
  g[2] += dz[1] * (-a.b_ij * -wI + a.g_ij * wR);
  g[3] += dz[1] * (-a.b_ij * wI + a.g_ij * -wR);
  // p_ji
  g[0] += dz[2] * (a.g_ji * dwR_dwi - a.b_ji * dwI_dwi);
  g[1] += dz[2] * (a.g_jj + a.g_ji * dwR_dwj - a.b_ji * dwI_dwj);
  g[2] += dz[2] * (a.g_ji * -wI - a.b_ji * wR);
  g[3] += dz[2] * (a.g_ji * wI - a.b_ji * -wR);
  // q_ji
  g[0] += dz[3] * (-a.b_ji * dwR_dwi - a.g_ji * dwI_dwi);
  g[1] += dz[3] * (-a.b_jj - a.b_ji * dwR_dwj - a.g_ji * dwI_dwj);
  g[2] += dz[3] * (-a.b_ji * -wI - a.g_ji * wR);
  g[3] += dz[3] * (-a.b_ji * wI - a.g_ji * -wR);
  // direct terms
  g[0] += dz[4];
  g[1] += dz[5];
  g[2] += dz[6];
  g[3] += dz[7];
  return g;
}

BranchSolution solve_branch(const BranchSubproblem& sub) {
  const Vec4 lb(sub.wi_min, sub.wj_min, -kTwoPi, -kTwoPi);
  const Vec4 ub(sub.wi_max, sub.wj_max, kTwoPi, kTwoPi);
  Vec4 u0 = sub.warm.cwiseMax(lb).cwiseMin(ub);
  if (!std::isfinite(branch_objective(sub, u0))) {
    // Retry once from the box center.
    u0 = 0.5 * (lb + ub);
    u0[2] = u0[3] = 0.0;
    if (!std::isfinite(branch_objective(sub, u0)))
      throw SolverError("branch subproblem: non-finite objective at warm start");
  }

  TrustRegionOptions opts;
  opts.tol = sub.tol;
  opts.max_iter = sub.max_iter;
  opts.initial_radius = 0.1;
  const auto res = trust_region_newton<4>(
      [&](const Vec4& u) { return branch_objective(sub, u); },
      [&](const Vec4& u) { return branch_gradient(sub, u); }, lb, ub, u0, opts);

  BranchSolution out;
  out.u = res.u;
  out.z = branch_quantities(sub.adm, res.u);
  out.f = res.f;
  out.projected_gradient_norm = res.projected_gradient_norm;
  out.iterations = res.iterations;
  if (sub.rate > 0) {
    const double r2 = sub.rate * sub.rate;
    const double vf = out.z[0] * out.z[0] + out.z[1] * out.z[1] - r2;
    const double vt = out.z[2] * out.z[2] + out.z[3] * out.z[3] - r2;
    out.limit_penalty = sub.mu * ((vf > 0 ? vf * vf : 0) + (vt > 0 ? vt * vt : 0));
  }
  return out;
}

Eigen::VectorXd solve_bus(const BusSubproblem& sub) {
  const int nv = static_cast<int>(sub.vars.size());
  Eigen::VectorXd v(nv), vhat(nv), rho_bar(nv);

  for (int m = 0; m < nv; ++m) {
    const auto& var = sub.vars[m];
    double sr = 0, srxy = 0;
    for (const auto& t : var.terms) {
      sr += t.rho;
      srxy += t.rho * t.xhat + t.y;
    }
    rho_bar[m] = sr;
    if (sr > 0) {
      vhat[m] = srxy / sr;
    } else {
      if (var.a != 0 || var.b != 0)
        throw ModelError("bus subproblem: balance variable without penalty");
      vhat[m] = var.prev;
    }
  }
  if (sub.slack && sub.theta_index >= 0) vhat[sub.theta_index] = 0.0;

  // 2x2 SPD system for the balance multipliers.
  double S_aa = 0, S_ab = 0, S_bb = 0, rhs_p = sub.pd, rhs_q = sub.qd;
  for (int m = 0; m < nv; ++m) {
    const auto& var = sub.vars[m];
    rhs_p -= var.a * vhat[m];
    rhs_q -= var.b * vhat[m];
    if (rho_bar[m] > 0) {
      S_aa += var.a * var.a / rho_bar[m];
      S_ab += var.a * var.b / rho_bar[m];
      S_bb += var.b * var.b / rho_bar[m];
    }
  }
  const double det = S_aa * S_bb - S_ab * S_ab;
  if (!(det > 1e-300))
    throw ModelError("bus subproblem: singular balance system (isolated bus)");
  const double nu_p = (S_bb * rhs_p - S_ab * rhs_q) / det;
  const double nu_q = (S_aa * rhs_q - S_ab * rhs_p) / det;

  for (int m = 0; m < nv; ++m) {
    const auto& var = sub.vars[m];
    if (rho_bar[m] > 0)
      v[m] = vhat[m] + (var.a * nu_p + var.b * nu_q) / rho_bar[m];
    else
      v[m] = vhat[m];
  }
  if (sub.theta_index >= 0) {
    v[sub.theta_index] = sub.slack ? 0.0 : vhat[sub.theta_index];
  }
  return v;
}

}  // namespace admmopf
