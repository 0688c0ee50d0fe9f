#include "admmopf/engine.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "admmopf/errors.hpp"

namespace admmopf {

double norm2_fixed(const Vector& v) {
  double s = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

bool check_convergence(const Vector& r_p, const Vector& r_d,
                       const Tolerances& tol) {
  return norm2_fixed(r_p) <= tol.eps_primal && norm2_fixed(r_d) <= tol.eps_dual;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nw = std::min(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (int w = 0; w < nw; ++w) {
    const int lo = static_cast<int>(static_cast<long long>(n) * w / nw);
    const int hi = static_cast<int>(static_cast<long long>(n) * (w + 1) / nw);
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

AdmmProblem::AdmmProblem(NetworkModel model, EngineOptions opts)
    : model_(std::move(model)), opts_(opts) {
  validate(model_);
  dec_ = build_decomposition(model_);
  const Layout& l = dec_.layout;
  const int nb = static_cast<int>(model_.buses.size());

  // Constraint ids grouped per component; they are assigned in x-slot order,
  // so each component's ids are contiguous starting at its first quantity.
  std::vector<std::vector<int>> w_cons(nb), th_cons(nb);
  std::vector<int> gen_c0(model_.generators.size(), -1);
  std::vector<int> branch_c0(model_.branches.size(), -1);
  for (const auto& c : dec_.constraints) {
    if (c.owner.kind == Owner::Kind::Generator) {
      if (c.quantity == Quantity::Pg) gen_c0[c.owner.index] = c.id;
    } else {
      if (c.quantity == Quantity::Pij) branch_c0[c.owner.index] = c.id;
      if (c.quantity == Quantity::Wi)
        w_cons[model_.branches[c.owner.index].from].push_back(c.id);
      if (c.quantity == Quantity::Wj)
        w_cons[model_.branches[c.owner.index].to].push_back(c.id);
      if (c.quantity == Quantity::ThetaI)
        th_cons[model_.branches[c.owner.index].from].push_back(c.id);
      if (c.quantity == Quantity::ThetaJ)
        th_cons[model_.branches[c.owner.index].to].push_back(c.id);
    }
  }

  for (std::size_t g = 0; g < model_.generators.size(); ++g) {
    if (l.gen_x0[g] < 0) continue;
    gens_.push_back({static_cast<int>(g), l.gen_x0[g], gen_c0[g]});
  }
  for (std::size_t b = 0; b < model_.branches.size(); ++b) {
    if (l.branch_x0[b] < 0) continue;
    branches_.push_back({static_cast<int>(b), l.branch_x0[b], branch_c0[b]});
  }

  for (int i = 0; i < nb; ++i) {
    BusWork bw;
    bw.bus = i;
    bw.slack = model_.buses[i].btype == BusType::Slack;
    bw.pd = model_.buses[i].pd;
    bw.qd = model_.buses[i].qd;
    // same slot order as the xbar layout: generator copies, flow copies, w, theta
    for (std::size_t g = 0; g < model_.generators.size(); ++g) {
      if (l.gen_xbar0[g] < 0 || model_.generators[g].bus != i) continue;
      bw.vars.push_back({+1.0, 0.0, l.gen_xbar0[g] + 0, {gen_c0[g] + 0}});
      bw.vars.push_back({0.0, +1.0, l.gen_xbar0[g] + 1, {gen_c0[g] + 1}});
    }
    for (std::size_t b = 0; b < model_.branches.size(); ++b) {
      if (l.branch_x0[b] < 0) continue;
      if (model_.branches[b].from == i) {
        bw.vars.push_back({-1.0, 0.0, l.branch_from_xbar0[b] + 0, {branch_c0[b] + 0}});
        bw.vars.push_back({0.0, -1.0, l.branch_from_xbar0[b] + 1, {branch_c0[b] + 1}});
      }
      if (model_.branches[b].to == i) {
        bw.vars.push_back({-1.0, 0.0, l.branch_to_xbar0[b] + 0, {branch_c0[b] + 2}});
        bw.vars.push_back({0.0, -1.0, l.branch_to_xbar0[b] + 1, {branch_c0[b] + 3}});
      }
    }
    bw.vars.push_back({-model_.buses[i].gs, model_.buses[i].bs, l.bus_w_slot[i],
                       std::move(w_cons[i])});
    bw.theta_index = static_cast<int>(bw.vars.size());
    bw.vars.push_back({0.0, 0.0, l.bus_theta_slot[i], std::move(th_cons[i])});
    buses_.push_back(std::move(bw));
  }
}

IterateState cold_start(const AdmmProblem& p, const RhoVector& rho0) {
  const Layout& l = p.dec().layout;
  IterateState st;
  st.x = Vector::Zero(l.n_x);
  st.xbar = Vector::Zero(l.n_xbar);
  st.y = Vector::Zero(l.n_constraints);
  st.rho = rho0;
  st.history = ResidualHistory(p.options().history_length);

  const auto& m = p.model();
  for (const auto& gw : p.gens()) {
    const auto& g = m.generators[gw.gen];
    st.x[gw.x0 + 0] = 0.5 * (g.pmin + g.pmax);
    st.x[gw.x0 + 1] = 0.5 * (g.qmin + g.qmax);
    st.xbar[l.gen_xbar0[gw.gen] + 0] = st.x[gw.x0 + 0];
    st.xbar[l.gen_xbar0[gw.gen] + 1] = st.x[gw.x0 + 1];
  }
  for (const auto& bw : p.branch_work()) {
    st.x[bw.x0 + 4] = 1.0;  // w copies
    st.x[bw.x0 + 5] = 1.0;
    // flows and theta copies stay 0
  }
  for (std::size_t i = 0; i < m.buses.size(); ++i) {
    st.xbar[l.bus_w_slot[i]] = 1.0;
    st.xbar[l.bus_theta_slot[i]] = 0.0;
  }
  st.xbar_prev = st.xbar;
  return st;
}

void admm_step(IterateState& state, const RhoVector& rho, const AdmmProblem& p,
               const Tolerances& tol, int workers, StepDiagnostics* diag) {
  const auto& m = p.model();
  const Layout& l = p.dec().layout;
  state.rho = rho;
  if (diag) {
    diag->branch_ids.assign(p.branch_work().size(), 0);
    diag->branch_iterations.assign(p.branch_work().size(), 0);
    diag->branch_limit_penalty.assign(p.branch_work().size(), 0.0);
    diag->bus_ids.assign(p.buses().size(), 0);
    diag->bus_balance_p.assign(p.buses().size(), 0.0);
    diag->bus_balance_q.assign(p.buses().size(), 0.0);
  }

  // (5a) component updates; disjoint x slots.
  const Vector& xbar = state.xbar;
  const Vector& y = state.y;
  const Vector& rv = rho.values;

  std::atomic<int> failed_gen{-1};
  const auto& gens = p.gens();
  parallel_for(static_cast<int>(gens.size()), workers, [&](int gi) {
    const auto& gw = gens[gi];
    const auto& g = m.generators[gw.gen];
    GenSubproblem sub;
    sub.c2 = g.c2;
    sub.c1 = g.c1;
    sub.pmin = g.pmin;
    sub.pmax = g.pmax;
    sub.qmin = g.qmin;
    sub.qmax = g.qmax;
    sub.xbar_p = xbar[l.gen_xbar0[gw.gen] + 0];
    sub.y_p = y[gw.c0 + 0];
    sub.rho_p = rv[gw.c0 + 0];
    sub.xbar_q = xbar[l.gen_xbar0[gw.gen] + 1];
    sub.y_q = y[gw.c0 + 1];
    sub.rho_q = rv[gw.c0 + 1];
    try {
      auto [pv, qv] = solve_generator(sub);
      state.x[gw.x0 + 0] = pv;
      state.x[gw.x0 + 1] = qv;
    } catch (const std::exception&) {
      failed_gen.store(gw.gen);
    }
  });
  if (failed_gen.load() >= 0)
    throw SolverError("admm_step: generator subproblem failed, generator " +
                      std::to_string(failed_gen.load()));

  std::atomic<int> failed_branch{-1};
  const auto& brs = p.branch_work();
  parallel_for(static_cast<int>(brs.size()), workers, [&](int bi) {
    const auto& bw = brs[bi];
    const auto& br = m.branches[bw.branch];
    BranchSubproblem sub;
    sub.adm = br.adm;
    sub.rate = br.rate;
    sub.wi_min = m.buses[br.from].vmin2;
    sub.wi_max = m.buses[br.from].vmax2;
    sub.wj_min = m.buses[br.to].vmin2;
    sub.wj_max = m.buses[br.to].vmax2;
    for (int q = 0; q < 8; ++q) {
      sub.xbar[q] = xbar[p.dec().constraints[bw.c0 + q].xbar_slot];
      sub.y[q] = y[bw.c0 + q];
      sub.rho[q] = rv[bw.c0 + q];
    }
    sub.warm = Vec4(state.x[bw.x0 + 4], state.x[bw.x0 + 5], state.x[bw.x0 + 6],
                    state.x[bw.x0 + 7]);
    sub.mu = p.options().mu_limit;
    sub.tol = p.options().branch_tol;
    sub.max_iter = p.options().branch_max_iter;
    try {
      const BranchSolution sol = solve_branch(sub);
      for (int q = 0; q < 8; ++q) state.x[bw.x0 + q] = sol.z[q];
      if (diag) {
        diag->branch_ids[bi] = bw.branch;
        diag->branch_iterations[bi] = sol.iterations;
        diag->branch_limit_penalty[bi] = sol.limit_penalty;
      }
    } catch (const std::exception&) {
      failed_branch.store(bw.branch);
    }
  });
  if (failed_branch.load() >= 0)
    throw SolverError("admm_step: branch subproblem failed, branch " +
                      std::to_string(failed_branch.load()));

  // (5b) bus updates; disjoint xbar slots.
  state.xbar_prev = state.xbar;
  std::atomic<int> failed_bus{-1};
  const auto& buses = p.buses();
  const Vector& x = state.x;
  parallel_for(static_cast<int>(buses.size()), workers, [&](int ui) {
    const auto& bw = buses[ui];
    BusSubproblem sub;
    sub.pd = bw.pd;
    sub.qd = bw.qd;
    sub.slack = bw.slack;
    sub.theta_index = bw.theta_index;
    sub.vars.reserve(bw.vars.size());
    for (const auto& vt : bw.vars) {
      BusVariable var;
      var.a = vt.a;
      var.b = vt.b;
      var.prev = state.xbar_prev[vt.xbar_slot];
      var.terms.reserve(vt.cons.size());
      for (int cid : vt.cons)
        var.terms.push_back({x[p.dec().constraints[cid].x_slot], y[cid], rv[cid]});
      sub.vars.push_back(std::move(var));
    }
    try {
      const Eigen::VectorXd v = solve_bus(sub);
      for (std::size_t mv = 0; mv < bw.vars.size(); ++mv)
        state.xbar[bw.vars[mv].xbar_slot] = v[mv];
      if (diag) {
        double bp = -bw.pd, bq = -bw.qd;
        for (std::size_t mv = 0; mv < bw.vars.size(); ++mv) {
          bp += bw.vars[mv].a * v[mv];
          bq += bw.vars[mv].b * v[mv];
        }
        diag->bus_ids[ui] = bw.bus;
        diag->bus_balance_p[ui] = bp;
        diag->bus_balance_q[ui] = bq;
      }
    } catch (const std::exception&) {
      failed_bus.store(bw.bus);
    }
  });
  if (failed_bus.load() >= 0)
    throw SolverError("admm_step: bus subproblem failed, bus " +
                      std::to_string(failed_bus.load()));

  // (5c) multiplier ascent with step rho_i, then residuals.
  Vector r_p = residual_primal(state.x, state.xbar, p.dec());
  for (Eigen::Index i = 0; i < r_p.size(); ++i) state.y[i] += rv[i] * r_p[i];
  Vector r_d = residual_dual(state.xbar, state.xbar_prev, rho, p.dec());

  state.k += 1;
  state.converged = check_convergence(r_p, r_d, tol);
  state.diverged = norm2_fixed(r_p) > tol.divergence_norm;
  state.history.push(std::move(r_p), std::move(r_d));
}

double objective_value(const AdmmProblem& p, const Vector& x) {
  double f = 0;
  for (const auto& gw : p.gens()) {
    const auto& g = p.model().generators[gw.gen];
    const double pv = x[gw.x0];
    f += g.c2 * pv * pv + g.c1 * pv + g.c0;
  }
  return f;
}

namespace {
std::atomic<std::uint64_t> g_snapshot_counter{0};
}

Snapshot snapshot(const IterateState& state) {
  return Snapshot{state, ++g_snapshot_counter};
}

IterateState restore(const Snapshot& snap) { return snap.state; }

RhoVector residual_balancing_update(const Vector& r_p, const Vector& r_d,
                                    const RhoVector& current, const Layout& l,
                                    double tau, double mu_rb, double rho0_pq,
                                    double rho0_vtheta) {
  RhoVector out = current;
  auto apply = [&](const std::vector<int>& ids, double rho0) {
    double sp = 0, sd = 0;
    for (int id : ids) {
      sp += r_p[id] * r_p[id];
      sd += r_d[id] * r_d[id];
    }
    const double np = std::sqrt(sp), nd = std::sqrt(sd);
    double factor = 1.0;
    if (np > mu_rb * nd) factor = tau;
    else if (nd > mu_rb * np) factor = 1.0 / tau;
    for (int id : ids) {
      double v = out.values[id] * factor;
      v = std::min(std::max(v, 1e-2 * rho0), 1e2 * rho0);
      out.values[id] = v;
    }
  };
  apply(l.pq_ids, rho0_pq);
  apply(l.vtheta_ids, rho0_vtheta);
  return out;
}

RhoVector ResidualBalancingPolicy::choose(const IterateState& state,
                                          const AdmmProblem& p) {
  const Layout& l = p.dec().layout;
  if (state.history.size() == 0) return make_rho(l, rho0_pq_, rho0_vtheta_);
  return residual_balancing_update(state.history.latest_rp(),
                                   state.history.latest_rd(), state.rho, l,
                                   tau_, mu_rb_, rho0_pq_, rho0_vtheta_);
}

EpisodeResult run_episode(const AdmmProblem& p, RhoPolicy& policy,
                          const Tolerances& tol, TraceSink sink, int workers,
                          DiagnosticsSink diag_sink) {
  const Layout& l = p.dec().layout;
  IterateState state = cold_start(p, policy.choose(IterateState{}, p));
  const auto t0 = std::chrono::steady_clock::now();
  StepDiagnostics diag;

  while (true) {
    const RhoVector rho = policy.choose(state, p);
    admm_step(state, rho, p, tol, workers, diag_sink ? &diag : nullptr);
    if (diag_sink) diag_sink(state.k, diag);
    if (sink) {
      TraceRow row;
      row.k = state.k;
      row.norm_rp = norm2_fixed(state.history.latest_rp());
      row.norm_rd = norm2_fixed(state.history.latest_rd());
      row.mean_rho_pq = l.n_pq ? rho.pq_view(l).mean() : 0.0;
      row.mean_rho_vtheta = l.n_vtheta ? rho.vtheta_view(l).mean() : 0.0;
      row.objective = objective_value(p, state.x);
      row.wall_time = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      sink(row);
    }
    if (state.converged || state.diverged || state.k >= tol.max_iter) break;
  }

  EpisodeResult res;
  res.iterations = state.k;
  res.converged = state.converged;
  res.objective = objective_value(p, state.x);
  res.final_state = std::move(state);
  return res;
}

}  // namespace admmopf
