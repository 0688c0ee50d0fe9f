#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "admmopf/decomp.hpp"
#include "admmopf/netdata.hpp"
#include "admmopf/subsolvers.hpp"

namespace admmopf {

struct Tolerances {
  double eps_primal = 1e-4;
  double eps_dual = 1e-4;
  int max_iter = 3000;
  double divergence_norm = 1e8;
};

// 2-norm by fixed-index-order summation: reproducible across runs and
// worker counts.
double norm2_fixed(const Vector& v);

// Convergence test on the latest residual pair; both bounds are inclusive.
bool check_convergence(const Vector& r_p, const Vector& r_d,
                       const Tolerances& tol);

// Ring buffer of the last n per-constraint residual pairs (r_p, r_d),
// oldest first.
class ResidualHistory {
 public:
  explicit ResidualHistory(int capacity = 20) : capacity_(capacity) {}

  void push(Vector rp, Vector rd) {
    if (static_cast<int>(entries_.size()) == capacity_) entries_.pop_front();
    entries_.emplace_back(std::move(rp), std::move(rd));
  }
  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  // index 0 = oldest retained entry
  const Vector& rp(int i) const { return entries_[i].first; }
  const Vector& rd(int i) const { return entries_[i].second; }
  const Vector& latest_rp() const { return entries_.back().first; }
  const Vector& latest_rd() const { return entries_.back().second; }

 private:
  int capacity_;
  std::deque<std::pair<Vector, Vector>> entries_;
};

struct IterateState {
  int k = 0;
  Vector x, xbar, xbar_prev, y;
  RhoVector rho;
  ResidualHistory history{20};
  bool converged = false;
  bool diverged = false;
};

struct Snapshot {
  IterateState state;
  std::uint64_t id = 0;
};

struct EngineOptions {
  double mu_limit = 1e3;     // branch line-limit penalty weight
  double branch_tol = 1e-8;  // branch stationarity tolerance
  int branch_max_iter = 200;
  int history_length = 20;
};

// Immutable per-model data: the decomposition plus the prebuilt subproblem
// wiring (constraint ids per component, per-bus variable templates).
class AdmmProblem {
 public:
  explicit AdmmProblem(NetworkModel model, EngineOptions opts = {});

  const NetworkModel& model() const { return model_; }
  const Decomposition& dec() const { return dec_; }
  const EngineOptions& options() const { return opts_; }

  struct GenWork {
    int gen = 0;     // index into model.generators
    int x0 = 0;      // 2 x slots
    int c0 = 0;      // 2 constraint ids (p, q)
  };
  struct BranchWork {
    int branch = 0;
    int x0 = 0;  // 8 x slots
    int c0 = 0;  // 8 constraint ids
  };
  struct BusVarTemplate {
    double a = 0, b = 0;
    int xbar_slot = 0;
    std::vector<int> cons;  // incident constraint ids
  };
  struct BusWork {
    int bus = 0;
    bool slack = false;
    double pd = 0, qd = 0;
    int theta_index = -1;
    std::vector<BusVarTemplate> vars;
  };

  const std::vector<GenWork>& gens() const { return gens_; }
  const std::vector<BranchWork>& branch_work() const { return branches_; }
  const std::vector<BusWork>& buses() const { return buses_; }

 private:
  NetworkModel model_;
  Decomposition dec_;
  EngineOptions opts_;
  std::vector<GenWork> gens_;
  std::vector<BranchWork> branches_;
  std::vector<BusWork> buses_;
};

// Flat start: w = 1, theta = 0, generator injections at box midpoints,
// flow copies at 0, multipliers at 0.
IterateState cold_start(const AdmmProblem& p, const RhoVector& rho0);

// Optional per-iteration subsolver diagnostics (filled when a collector is
// passed to admm_step): branch inner-iteration counts and limit-penalty
// magnitudes, bus balance (KKT feasibility) residuals after the bus solves.
struct StepDiagnostics {
  std::vector<int> branch_ids;
  std::vector<int> branch_iterations;
  std::vector<double> branch_limit_penalty;
  std::vector<int> bus_ids;
  std::vector<double> bus_balance_p;
  std::vector<double> bus_balance_q;
};

// One full iteration: component solves (5a), bus solves (5b), multiplier
// ascent (5c), residuals, history, convergence/divergence flags.
void admm_step(IterateState& state, const RhoVector& rho, const AdmmProblem& p,
               const Tolerances& tol, int workers = 1,
               StepDiagnostics* diag = nullptr);

double objective_value(const AdmmProblem& p, const Vector& x);

Snapshot snapshot(const IterateState& state);
IterateState restore(const Snapshot& snap);

class RhoPolicy {
 public:
  virtual ~RhoPolicy() = default;
  virtual RhoVector choose(const IterateState& state, const AdmmProblem& p) = 0;
  virtual std::string name() const = 0;
};

class FixedPolicy : public RhoPolicy {
 public:
  FixedPolicy(double rho_pq, double rho_vtheta)
      : rho_pq_(rho_pq), rho_vtheta_(rho_vtheta) {}
  RhoVector choose(const IterateState&, const AdmmProblem& p) override {
    return make_rho(p.dec().layout, rho_pq_, rho_vtheta_);
  }
  std::string name() const override { return "fixed"; }

 private:
  double rho_pq_, rho_vtheta_;
};

// Constant probe policy used by the relative-advantage reward.
class BaselineProbePolicy : public FixedPolicy {
 public:
  explicit BaselineProbePolicy(double rho = 500.0) : FixedPolicy(rho, rho) {}
  std::string name() const override { return "baseline500"; }
};

// Category-wise rule applied to the current rho; the result is clamped to
// [1e-2, 1e2] times the category's initial value.
RhoVector residual_balancing_update(const Vector& r_p, const Vector& r_d,
                                    const RhoVector& current, const Layout& l,
                                    double tau, double mu_rb, double rho0_pq,
                                    double rho0_vtheta);

class ResidualBalancingPolicy : public RhoPolicy {
 public:
  ResidualBalancingPolicy(double rho0_pq, double rho0_vtheta, double tau = 2.0,
                          double mu_rb = 10.0)
      : rho0_pq_(rho0_pq), rho0_vtheta_(rho0_vtheta), tau_(tau), mu_rb_(mu_rb) {}
  RhoVector choose(const IterateState& state, const AdmmProblem& p) override;
  std::string name() const override { return "residual_balancing"; }

 private:
  double rho0_pq_, rho0_vtheta_, tau_, mu_rb_;
};

struct TraceRow {
  int k = 0;
  double norm_rp = 0, norm_rd = 0;
  double mean_rho_pq = 0, mean_rho_vtheta = 0;
  double objective = 0;
  double wall_time = 0;  // seconds since episode start
};
using TraceSink = std::function<void(const TraceRow&)>;

struct EpisodeResult {
  int iterations = 0;
  bool converged = false;
  double objective = 0;
  IterateState final_state;
};

using DiagnosticsSink = std::function<void(int k, const StepDiagnostics&)>;

EpisodeResult run_episode(const AdmmProblem& p, RhoPolicy& policy,
                          const Tolerances& tol, TraceSink sink = {},
                          int workers = 1, DiagnosticsSink diag_sink = {});

// Static chunking; item i is always computed by the same arithmetic
// regardless of the worker count.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace admmopf
