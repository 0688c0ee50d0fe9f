#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace admmopf {

struct TrustRegionOptions {
  double tol = 1e-8;           // projected-gradient 2-norm target
  int max_iter = 200;
  double initial_radius = 1.0;
  double min_radius = 1e-12;   // radius collapse also certifies stationarity
  double fd_step = 1e-6;       // Hessian: central differences of the gradient
};

template <int N>
struct TrustRegionResult {
  Eigen::Matrix<double, N, 1> u;
  double f = 0.0;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;  // pg <= tol, or the radius collapsed below min_radius
  bool failed = false;     // max_iter reached with pg > 1e3 * tol
};

namespace tr_detail {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int N>
using Mat = Eigen::Matrix<double, N, N>;

template <int N>
Vec<N> clamp(const Vec<N>& u, const Vec<N>& lb, const Vec<N>& ub) {
  return u.cwiseMax(lb).cwiseMin(ub);
}

// Gradient with bound-active components zeroed when they point outward.
template <int N>
Vec<N> projected_gradient(const Vec<N>& u, const Vec<N>& g, const Vec<N>& lb,
                          const Vec<N>& ub) {
  Vec<N> pg = g;
  for (int i = 0; i < N; ++i) {
    if (u[i] <= lb[i] && g[i] > 0) pg[i] = 0;
    if (u[i] >= ub[i] && g[i] < 0) pg[i] = 0;
  }
  return pg;
}

// Near-exact solution of min g's + s'Hs/2 subject to |s| <= radius via an
// eigendecomposition (the subproblem is tiny), covering the indefinite and
// hard cases.
inline Eigen::VectorXd tr_subproblem(const Eigen::MatrixXd& H,
                                     const Eigen::VectorXd& g, double radius) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const Eigen::VectorXd lam = es.eigenvalues();
  const Eigen::MatrixXd Q = es.eigenvectors();
  const Eigen::VectorXd gh = Q.transpose() * g;
  const int k = static_cast<int>(g.size());

  auto step_norm = [&](double shift) {
    double s2 = 0;
    for (int i = 0; i < k; ++i) {
      const double den = lam[i] + shift;
      if (den > 0) s2 += (gh[i] / den) * (gh[i] / den);
    }
    return std::sqrt(s2);
  };
  auto build = [&](double shift) {
    Eigen::VectorXd sh(k);
    for (int i = 0; i < k; ++i) {
      const double den = lam[i] + shift;
      sh[i] = den > 0 ? -gh[i] / den : 0.0;
    }
    return Eigen::VectorXd(Q * sh);
  };

  const double lam_min = lam.minCoeff();
  if (lam_min > 0 && step_norm(0.0) <= radius) return build(0.0);

  double lo = std::max(0.0, -lam_min);
  double hi = std::max(1.0, 2.0 * lo + 1.0);
  while (step_norm(hi) > radius && hi < 1e18) hi *= 4.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (step_norm(mid) > radius) lo = mid;
    else hi = mid;
  }
  Eigen::VectorXd s = build(hi);
  const double sn = s.norm();
  if (sn < 0.9 * radius) {
    // Hard case: pad along the most-negative eigendirection to the boundary.
    Eigen::Index arg = 0;
    lam.minCoeff(&arg);
    s += std::sqrt(std::max(0.0, radius * radius - sn * sn)) * Q.col(arg);
  }
  return s;
}

}  // namespace tr_detail

// Bound-constrained minimization of a smooth f: R^N -> R given its analytic
// gradient. Active-set trust-region Newton: variables pinned at a bound with
// an outward gradient are frozen, the trust-region model (Hessian from
// central finite differences of the gradient, step fd_step*max(1,|u_j|)) is
// solved on the free subspace, and trial points are clamped into the box.
// A backtracking projected-gradient step guarantees descent whenever the
// model step fails, so accepted iterates are strictly decreasing in f.
// The gradient callback must be evaluable in a fd_step-neighborhood of the
// box.
template <int N, class Func, class Grad>
TrustRegionResult<N> trust_region_newton(Func&& f, Grad&& grad,
                                         const Eigen::Matrix<double, N, 1>& lb,
                                         const Eigen::Matrix<double, N, 1>& ub,
                                         const Eigen::Matrix<double, N, 1>& u0,
                                         const TrustRegionOptions& opts = {}) {
  using tr_detail::clamp;
  using Vec = tr_detail::Vec<N>;
  using Mat = tr_detail::Mat<N>;

  TrustRegionResult<N> res;
  Vec u = clamp<N>(u0, lb, ub);
  double fu = f(u);
  double radius = opts.initial_radius;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    res.iterations = iter;
    const Vec g = grad(u);
    const Vec pg = tr_detail::projected_gradient<N>(u, g, lb, ub);
    res.projected_gradient_norm = pg.norm();
    if (res.projected_gradient_norm <= opts.tol) {
      res.converged = true;
      break;
    }

    // Free set: everything not pinned at a bound by the gradient sign.
    int free_idx[N];
    int nf = 0;
    for (int i = 0; i < N; ++i) {
      const bool pinned = (u[i] <= lb[i] && g[i] > 0) || (u[i] >= ub[i] && g[i] < 0);
      if (!pinned) free_idx[nf++] = i;
    }

    Mat H;
    for (int j = 0; j < N; ++j) {
      const double h = opts.fd_step * std::max(1.0, std::abs(u[j]));
      Vec up = u, um = u;
      up[j] += h;
      um[j] -= h;
      H.col(j) = (grad(up) - grad(um)) / (2.0 * h);
    }
    H = 0.5 * (H + H.transpose()).eval();

    Eigen::MatrixXd Hf(nf, nf);
    Eigen::VectorXd gf(nf);
    for (int a = 0; a < nf; ++a) {
      gf[a] = g[free_idx[a]];
      for (int b = 0; b < nf; ++b) Hf(a, b) = H(free_idx[a], free_idx[b]);
    }
    const Eigen::VectorXd sf = tr_detail::tr_subproblem(Hf, gf, radius);
    Vec s = Vec::Zero();
    for (int a = 0; a < nf; ++a) s[free_idx[a]] = sf[a];
    s = clamp<N>(u + s, lb, ub) - u;

    const double pred = -(g.dot(s) + 0.5 * s.dot(H * s));
    const double ft = f(u + s);
    const double sn = s.norm();
    const double fu_before = fu;
    const double f_resolution = 1e-13 * (std::abs(fu) + 1.0);

    bool accepted = false;
    if (ft < fu) {
      u += s;
      fu = ft;
      accepted = true;
    } else if (pred >= 0 && pred <= f_resolution && ft <= fu + f_resolution) {
      // The model's decrease is below what f can resolve in floating point;
      // fall back to gradient evidence so the Newton step can still close in
      // on stationarity.
      const Vec g_trial = grad(u + s);
      const double pg_trial =
          tr_detail::projected_gradient<N>(u + s, g_trial, lb, ub).norm();
      if (pg_trial < 0.9 * res.projected_gradient_norm) {
        u += s;
        fu = std::min(fu, ft);
        accepted = true;
      }
    }
    if (pred > f_resolution) {
      const double ratio = (fu_before - ft) / pred;
      if (ratio < 0.25) radius = std::max(0.25 * radius, 0.5 * opts.min_radius);
      else if (ratio > 0.75 && sn >= 0.8 * radius)
        radius = std::min(radius * 2.0, 1e8);
    } else if (!accepted) {
      radius = std::max(0.25 * radius, 0.5 * opts.min_radius);
    }

    if (!accepted) {
      // Safeguard: backtracking projected-gradient descent.
      double t = 1.0 / std::max(pg.norm(), 1.0);
      for (int bt = 0; bt < 60; ++bt) {
        const Vec sc = clamp<N>(u - t * g, lb, ub) - u;
        const double fc = f(u + sc);
        if (fc < fu) {
          u += sc;
          fu = fc;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
    }
    if (radius < opts.min_radius) {
      // Radius collapse: no descent direction left at floating-point scale.
      res.converged = true;
      break;
    }
  }

  const Vec g = grad(u);
  res.projected_gradient_norm =
      tr_detail::projected_gradient<N>(u, g, lb, ub).norm();
  if (res.projected_gradient_norm <= opts.tol) res.converged = true;
  res.failed = !res.converged && res.projected_gradient_norm > 1e3 * opts.tol;
  res.u = u;
  res.f = fu;
  return res;
}

}  // namespace admmopf
