#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "admmopf/engine.hpp"
#include "admmopf/mlp.hpp"
#include "admmopf/replay.hpp"

namespace admmopf {

struct MdpConfig {
  double gamma = 0.99;
  int n = 20;  // residual history length; state dimension is 2n
  std::vector<double> actions_pq = {100, 200, 300, 400, 500,
                                    600, 700, 800, 900, 1000};
  std::vector<double> actions_vtheta = {500,   2000,  5000,  10000, 20000,
                                        30000, 40000, 50000, 60000, 70000};
  double initial_rho_pq = 400.0;
  double initial_rho_vtheta = 40000.0;
  double conv_bonus = 200.0;
  double baseline_rho = 500.0;  // constant probe policy
  double z_p = 0.0, z_d = 0.0;  // optional residual-reward normalizers
  enum class Transform { Raw, SignedLog };
  Transform transform = Transform::SignedLog;
};

// The small-system action table for up to 30 buses, the compressed table
// above that.
MdpConfig default_mdp_for(const NetworkModel& m);

struct TrainConfig {
  int episodes = 1000;
  double lr = 1e-4;
  double momentum = 0.9;
  int batch = 64;
  int sync_period = 500;  // frozen-network refresh, counted in updates
  double eps0 = 1.0;
  double eps_min = 0.02;
  int eps_decay_episodes = 300;
  std::uint64_t seed = 1;
  int warmup = 1000;  // transitions per category before learning starts
  std::size_t replay_capacity = 100000;
  double alpha_per = 0.6;
  double beta0 = 0.4, beta1 = 1.0;  // importance-correction anneal
  double eps_per = 1e-3;
  double grad_clip = 10.0;
  int hidden = 256;
  Tolerances tol;
  int workers = 1;
};

double signed_log(double v);

bool state_ready(const ResidualHistory& h, int n);

// Interleaved (r_p[i], r_d[i]) pairs over the last n iterations, oldest first.
Vector build_state(const ResidualHistory& h, int constraint, int n,
                   MdpConfig::Transform transform);

double reward_conv(double rp_next_norm, double rd_next_norm,
                   const Tolerances& tol, double bonus);

double reward_res(double rp_prev, double rd_prev, double rp_next,
                  double rd_next, double z_p, double z_d);

// (|r'| - |r~|)/max(|r~|, 1e-12) summed over the primal and dual norms.
double relative_advantage(double rp_rl, double rd_rl, double rp_base,
                          double rd_base);

// Counterfactual probe: baseline step from a snapshot, rollback, then the
// committed step with rl_rho. `state` is left advanced by the rl step.
// Falls back to reward_res against the pre-step norms if the baseline step
// throws.
double reward_baseline(IterateState& state, const RhoVector& rl_rho,
                       const AdmmProblem& p, const MdpConfig& mdp,
                       const Tolerances& tol, int workers,
                       bool* baseline_failed = nullptr);

double double_q_target(const QNetwork& online, const QNetwork& frozen,
                       double reward, const Vector& s_next, bool done,
                       double gamma);

// Per-constraint epsilon-greedy selection: the argmax action with probability
// 1 - (|A|-1)eps/|A|, each other action with probability eps/|A|.
// Requires a ready history. actions_out (id-indexed) is optional.
RhoVector select_actions(const QNetwork& q_pq, const QNetwork& q_vtheta,
                         const IterateState& state, const AdmmProblem& p,
                         const MdpConfig& mdp, double eps, SplitMix64& rng,
                         std::vector<int>* actions_out = nullptr);

struct EpisodeLog {
  int episode = 0;
  int iterations = 0;
  bool converged = false;
  double cumulative_reward = 0;
  double eps = 0;
  double wall_time = 0;
};

struct TrainResult {
  QNetwork q_pq, q_vtheta;
  std::vector<EpisodeLog> log;
  bool aborted = false;  // non-finite loss; networks are the last good state
};

TrainResult train(const AdmmProblem& p, const MdpConfig& mdp,
                  const TrainConfig& tc,
                  const std::function<void(const EpisodeLog&)>& on_episode = {},
                  const QNetwork* resume_pq = nullptr,
                  const QNetwork* resume_vtheta = nullptr,
                  int first_episode = 0);

// Greedy deployment of a trained checkpoint pair; uses the initial rho while
// the history is shorter than n. Applies entry-wise, so it transfers across
// constraint counts.
class RLPolicy : public RhoPolicy {
 public:
  RLPolicy(QNetwork q_pq, QNetwork q_vtheta, MdpConfig mdp);
  RhoVector choose(const IterateState& state, const AdmmProblem& p) override;
  std::string name() const override { return "rl"; }
  const MdpConfig& mdp() const { return mdp_; }

 private:
  QNetwork q_pq_, q_vtheta_;
  MdpConfig mdp_;
};

void save_checkpoint(const QNetwork& net, Category category,
                     const MdpConfig& mdp, std::uint64_t seed,
                     const std::string& path);
QNetwork load_checkpoint(const std::string& path, Category* category = nullptr,
                         MdpConfig* mdp = nullptr);

}  // namespace admmopf
