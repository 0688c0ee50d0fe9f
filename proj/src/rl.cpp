#include "admmopf/rl.hpp"

#include <chrono>
#include <thread>
#include <cmath>
#include <fstream>
#include <iostream>

#include "admmopf/errors.hpp"
#include "json.hpp"

namespace admmopf {

MdpConfig default_mdp_for(const NetworkModel& m) {
  MdpConfig mdp;
  if (m.buses.size() > 30) {
    mdp.actions_vtheta = {500, 1000, 1500, 2000, 2500, 3000, 3500, 4000, 5500, 7000};
    mdp.initial_rho_vtheta = 4000.0;
  }
  return mdp;
}

double signed_log(double v) {
  const double s = v < 0 ? -1.0 : 1.0;
  return s * std::log10(1.0 + std::abs(v) / 1e-8);
}

bool state_ready(const ResidualHistory& h, int n) { return h.size() >= n; }

Vector build_state(const ResidualHistory& h, int constraint, int n,
                   MdpConfig::Transform transform) {
  if (h.size() < n)
    throw std::logic_error("build_state: history shorter than n");
  Vector s(2 * n);
  const int first = h.size() - n;
  for (int t = 0; t < n; ++t) {
    double rp = h.rp(first + t)[constraint];
    double rd = h.rd(first + t)[constraint];
    if (transform == MdpConfig::Transform::SignedLog) {
      rp = signed_log(rp);
      rd = signed_log(rd);
    }
    s[2 * t] = rp;
    s[2 * t + 1] = rd;
  }
  return s;
}

double reward_conv(double rp_next_norm, double rd_next_norm,
                   const Tolerances& tol, double bonus) {
  return (rp_next_norm <= tol.eps_primal && rd_next_norm <= tol.eps_dual)
             ? bonus
             : 0.0;
}

double reward_res(double rp_prev, double rd_prev, double rp_next,
                  double rd_next, double z_p, double z_d) {
  return (rp_next - rp_prev) / z_p + (rd_next - rd_prev) / z_d;
}

double relative_advantage(double rp_rl, double rd_rl, double rp_base,
                          double rd_base) {
  return (rp_rl - rp_base) / std::max(rp_base, 1e-12) +
         (rd_rl - rd_base) / std::max(rd_base, 1e-12);
}

double reward_baseline(IterateState& state, const RhoVector& rl_rho,
                       const AdmmProblem& p, const MdpConfig& mdp,
                       const Tolerances& tol, int workers,
                       bool* baseline_failed) {
  const double rp_prev = norm2_fixed(state.history.latest_rp());
  const double rd_prev = norm2_fixed(state.history.latest_rd());

  const Snapshot snap = snapshot(state);
  bool probe_ok = true;
  double rp_base = 0, rd_base = 0;
  try {
    const RhoVector base =
        make_rho(p.dec().layout, mdp.baseline_rho, mdp.baseline_rho);
    admm_step(state, base, p, tol, workers);
    rp_base = norm2_fixed(state.history.latest_rp());
    rd_base = norm2_fixed(state.history.latest_rd());
  } catch (const SolverError&) {
    probe_ok = false;
  }
  state = restore(snap);
  if (baseline_failed) *baseline_failed = !probe_ok;

  admm_step(state, rl_rho, p, tol, workers);
  const double rp_rl = norm2_fixed(state.history.latest_rp());
  const double rd_rl = norm2_fixed(state.history.latest_rd());

  if (!probe_ok)
    return reward_res(rp_prev, rd_prev, rp_rl, rd_rl,
                      std::max(rp_prev, 1e-12), std::max(rd_prev, 1e-12));
  return relative_advantage(rp_rl, rd_rl, rp_base, rd_base);
}

double double_q_target(const QNetwork& online, const QNetwork& frozen,
                       double reward, const Vector& s_next, bool done,
                       double gamma) {
  if (done) return reward;
  const Vector qo = q_forward(online, s_next);
  Eigen::Index best = 0;
  qo.maxCoeff(&best);
  const Vector qf = q_forward(frozen, s_next);
  return reward + gamma * qf[best];
}

namespace {

// Builds the (count x 2n) state matrix for one category.
Eigen::MatrixXd category_states(const IterateState& state,
                                const std::vector<int>& ids,
                                const MdpConfig& mdp) {
  Eigen::MatrixXd S(static_cast<Eigen::Index>(ids.size()), 2 * mdp.n);
  for (std::size_t r = 0; r < ids.size(); ++r)
    S.row(r) =
        build_state(state.history, ids[r], mdp.n, mdp.transform).transpose();
  return S;
}

int epsilon_greedy_pick(const Eigen::RowVectorXd& q, double eps,
                        SplitMix64& rng) {
  Eigen::Index best = 0;
  q.maxCoeff(&best);
  const int na = static_cast<int>(q.size());
  const double explore_mass = (na - 1) * eps / na;
  const double u = rng.uniform();
  if (u >= explore_mass) return static_cast<int>(best);
  int j = static_cast<int>(u / (eps / na));  // 0 .. na-2
  return j < best ? j : j + 1;               // skip the argmax slot
}

}  // namespace

RhoVector select_actions(const QNetwork& q_pq, const QNetwork& q_vtheta,
                         const IterateState& state, const AdmmProblem& p,
                         const MdpConfig& mdp, double eps, SplitMix64& rng,
                         std::vector<int>* actions_out) {
  const Layout& l = p.dec().layout;
  RhoVector rho;
  rho.values.resize(l.n_constraints);
  if (actions_out) actions_out->assign(l.n_constraints, 0);

  auto run_category = [&](const QNetwork& net, const std::vector<int>& ids,
                          const std::vector<double>& table) {
    if (ids.empty()) return;
    const Eigen::MatrixXd S = category_states(state, ids, mdp);
    const Eigen::MatrixXd Q = q_forward_batch(net, S);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const int a = epsilon_greedy_pick(Q.row(r), eps, rng);
      rho.values[ids[r]] = table[a];
      if (actions_out) (*actions_out)[ids[r]] = a;
    }
  };
  run_category(q_pq, l.pq_ids, mdp.actions_pq);
  run_category(q_vtheta, l.vtheta_ids, mdp.actions_vtheta);
  return rho;
}

RLPolicy::RLPolicy(QNetwork q_pq, QNetwork q_vtheta, MdpConfig mdp)
    : q_pq_(std::move(q_pq)), q_vtheta_(std::move(q_vtheta)), mdp_(std::move(mdp)) {
  if (q_pq_.input_dim() != 2 * mdp_.n ||
      q_pq_.output_dim() != static_cast<int>(mdp_.actions_pq.size()) ||
      q_vtheta_.input_dim() != 2 * mdp_.n ||
      q_vtheta_.output_dim() != static_cast<int>(mdp_.actions_vtheta.size()))
    throw CheckpointError("checkpoint dimensions do not match the MDP config");
}

RhoVector RLPolicy::choose(const IterateState& state, const AdmmProblem& p) {
  const Layout& l = p.dec().layout;
  if (!state_ready(state.history, mdp_.n))
    return make_rho(l, mdp_.initial_rho_pq, mdp_.initial_rho_vtheta);
  SplitMix64 rng(0);  // eps = 0: never consulted
  return select_actions(q_pq_, q_vtheta_, state, p, mdp_, 0.0, rng);
}

TrainResult train(const AdmmProblem& p, const MdpConfig& mdp,
                  const TrainConfig& tc,
                  const std::function<void(const EpisodeLog&)>& on_episode,
                  const QNetwork* resume_pq, const QNetwork* resume_vtheta,
                  int first_episode) {
  const Layout& l = p.dec().layout;
  SplitMix64 rng(tc.seed);
  const std::vector<int> dims_pq = {2 * mdp.n, tc.hidden, tc.hidden, tc.hidden,
                                    static_cast<int>(mdp.actions_pq.size())};
  const std::vector<int> dims_vt = {2 * mdp.n, tc.hidden, tc.hidden, tc.hidden,
                                    static_cast<int>(mdp.actions_vtheta.size())};

  TrainResult out;
  out.q_pq = resume_pq ? *resume_pq : QNetwork::init(dims_pq, rng);
  out.q_vtheta = resume_vtheta ? *resume_vtheta : QNetwork::init(dims_vt, rng);
  QNetwork frozen_pq = out.q_pq, frozen_vt = out.q_vtheta;
  QNetwork good_pq = out.q_pq, good_vt = out.q_vtheta;  // end of last episode
  SgdMomentum opt_pq{tc.lr, tc.momentum, tc.grad_clip},
      opt_vt{tc.lr, tc.momentum, tc.grad_clip};
  ReplayBuffer buf_pq(tc.replay_capacity, tc.alpha_per, tc.eps_per);
  ReplayBuffer buf_vt(tc.replay_capacity, tc.alpha_per, tc.eps_per);
  long updates_pq = 0, updates_vt = 0;

  const RhoVector rho_init =
      make_rho(l, mdp.initial_rho_pq, mdp.initial_rho_vtheta);

  auto learn = [&](QNetwork& online, QNetwork& frozen, SgdMomentum& opt,
                   ReplayBuffer& buf, long& updates, double beta,
                   SplitMix64& sample_rng) {
    if (buf.size() < static_cast<std::size_t>(std::max(tc.warmup, tc.batch)))
      return;
    const auto batch = buf.sample(tc.batch, beta, sample_rng);
    const int B = tc.batch;
    Eigen::MatrixXd S(B, 2 * mdp.n), Sn(B, 2 * mdp.n);
    std::vector<int> actions(B);
    Eigen::VectorXd targets(B);
    for (int i = 0; i < B; ++i) {
      const Transition& t = buf.at(batch.indices[i]);
      S.row(i) = t.s.transpose();
      Sn.row(i) = t.s_next.transpose();
      actions[i] = t.action;
    }
    // Double-Q targets: online network selects, frozen network evaluates.
    const Eigen::MatrixXd Qn_online = q_forward_batch(online, Sn);
    const Eigen::MatrixXd Qn_frozen = q_forward_batch(frozen, Sn);
    for (int i = 0; i < B; ++i) {
      const Transition& t = buf.at(batch.indices[i]);
      if (t.done) {
        targets[i] = t.reward;
      } else {
        Eigen::Index best = 0;
        Qn_online.row(i).maxCoeff(&best);
        targets[i] = t.reward + mdp.gamma * Qn_frozen(i, best);
      }
    }
    Eigen::VectorXd td;
    const QGrad grad =
        q_backward_batch(online, S, actions, targets, batch.weights, &td);
    opt.step(online, grad);
    for (int i = 0; i < B; ++i)
      buf.update_priority(batch.indices[i], std::abs(td[i]));
    ++updates;
    if (updates % tc.sync_period == 0) frozen = online;
  };

  for (int ep = 0; ep < tc.episodes; ++ep) {
    const int ep_abs = first_episode + ep;
    const double eps =
        ep_abs >= tc.eps_decay_episodes
            ? tc.eps_min
            : tc.eps0 * std::pow(tc.eps_min / tc.eps0,
                                 static_cast<double>(ep_abs) /
                                     tc.eps_decay_episodes);
    const double beta =
        tc.episodes <= 1 ? tc.beta1
                         : tc.beta0 + (tc.beta1 - tc.beta0) *
                                          (static_cast<double>(ep) /
                                           (tc.episodes - 1));

    IterateState state = cold_start(p, rho_init);
    double ep_reward = 0;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> actions;

    while (true) {
      if (state_ready(state.history, mdp.n)) {
        const Eigen::MatrixXd S_pq = category_states(state, l.pq_ids, mdp);
        const Eigen::MatrixXd S_vt = category_states(state, l.vtheta_ids, mdp);
        const RhoVector rho = select_actions(out.q_pq, out.q_vtheta, state, p,
                                             mdp, eps, rng, &actions);
        bool probe_failed = false;
        const double r_b = reward_baseline(state, rho, p, mdp, tc.tol,
                                           tc.workers, &probe_failed);
        if (probe_failed)
          std::cerr << "train: baseline probe failed at episode " << ep_abs
                    << " k=" << state.k << "; used the residual reward\n";
        const double r_c =
            reward_conv(norm2_fixed(state.history.latest_rp()),
                        norm2_fixed(state.history.latest_rd()), tc.tol,
                        mdp.conv_bonus);
        // The advantage enters the maximized return oriented so that beating
        // the probe is positive; r_b itself is negative when the committed
        // step leaves smaller residuals than the probe step.
        const double reward = r_c - r_b;
        ep_reward += reward;
        const bool done = state.converged || state.diverged ||
                          state.k >= tc.tol.max_iter;

        for (std::size_t r = 0; r < l.pq_ids.size(); ++r) {
          Transition t;
          t.s = S_pq.row(r).transpose();
          t.action = actions[l.pq_ids[r]];
          t.reward = reward;
          t.s_next = build_state(state.history, l.pq_ids[r], mdp.n, mdp.transform);
          t.done = done;
          buf_pq.push(std::move(t));
        }
        for (std::size_t r = 0; r < l.vtheta_ids.size(); ++r) {
          Transition t;
          t.s = S_vt.row(r).transpose();
          t.action = actions[l.vtheta_ids[r]];
          t.reward = reward;
          t.s_next =
              build_state(state.history, l.vtheta_ids[r], mdp.n, mdp.transform);
          t.done = done;
          buf_vt.push(std::move(t));
        }

        // The two category networks are independent; update them on two
        // threads. Sampling seeds are drawn from the main stream in a fixed
        // order, so the result does not depend on thread timing.
        SplitMix64 rng_pq(rng.next()), rng_vt(rng.next());
        std::exception_ptr worker_error, main_error;
        std::thread worker([&] {
          try {
            learn(out.q_vtheta, frozen_vt, opt_vt, buf_vt, updates_vt, beta,
                  rng_vt);
          } catch (...) {
            worker_error = std::current_exception();
          }
        });
        try {
          learn(out.q_pq, frozen_pq, opt_pq, buf_pq, updates_pq, beta, rng_pq);
        } catch (...) {
          main_error = std::current_exception();
        }
        worker.join();
        if (main_error || worker_error) {
          // Non-finite loss: abort with the last good networks.
          std::cerr << "train: aborted at episode " << ep_abs
                    << " after a non-finite update; keeping the last good "
                       "checkpoint\n";
          out.q_pq = good_pq;
          out.q_vtheta = good_vt;
          out.aborted = true;
          return out;
        }
      } else {
        admm_step(state, rho_init, p, tc.tol, tc.workers);
      }
      if (state.converged || state.diverged || state.k >= tc.tol.max_iter)
        break;
    }
    good_pq = out.q_pq;
    good_vt = out.q_vtheta;

    EpisodeLog log;
    log.episode = ep_abs;
    log.iterations = state.k;
    log.converged = state.converged;
    log.cumulative_reward = ep_reward;
    log.eps = eps;
    log.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.log.push_back(log);
    if (on_episode) on_episode(log);
  }
  return out;
}

void save_checkpoint(const QNetwork& net, Category category,
                     const MdpConfig& mdp, std::uint64_t seed,
                     const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["category"] = category_name(category);
  j["layer_dims"] = net.dims();
  j["training_seed"] = seed;
  nlohmann::json jm;
  jm["gamma"] = mdp.gamma;
  jm["n"] = mdp.n;
  jm["actions_pq"] = mdp.actions_pq;
  jm["actions_vtheta"] = mdp.actions_vtheta;
  jm["initial_rho_pq"] = mdp.initial_rho_pq;
  jm["initial_rho_vtheta"] = mdp.initial_rho_vtheta;
  jm["conv_bonus"] = mdp.conv_bonus;
  jm["baseline_rho"] = mdp.baseline_rho;
  jm["transform"] =
      mdp.transform == MdpConfig::Transform::SignedLog ? "signed_log" : "raw";
  j["mdp"] = jm;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    nlohmann::json layer;
    std::vector<double> wrow;  // row-major
    wrow.reserve(net.w[i].size());
    for (Eigen::Index r = 0; r < net.w[i].rows(); ++r)
      for (Eigen::Index c = 0; c < net.w[i].cols(); ++c)
        wrow.push_back(net.w[i](r, c));
    layer["weights"] = wrow;
    layer["bias"] = std::vector<double>(net.b[i].data(),
                                        net.b[i].data() + net.b[i].size());
    layers.push_back(layer);
  }
  j["layers"] = layers;
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot write checkpoint " + path);
  os << j.dump();
}

QNetwork load_checkpoint(const std::string& path, Category* category,
                         MdpConfig* mdp) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw CheckpointError("malformed checkpoint " + path + ": " + e.what());
  }
  if (j.value("format_version", 0) != 1)
    throw CheckpointError("unsupported checkpoint format in " + path);
  const std::vector<int> dims = j.at("layer_dims").get<std::vector<int>>();
  QNetwork net;
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != dims.size())
    throw CheckpointError("layer count mismatch in " + path);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto wrow = layers[i].at("weights").get<std::vector<double>>();
    const auto bias = layers[i].at("bias").get<std::vector<double>>();
    if (static_cast<int>(wrow.size()) != dims[i] * dims[i + 1] ||
        static_cast<int>(bias.size()) != dims[i + 1])
      throw CheckpointError("weight dimensions mismatch in " + path);
    Eigen::MatrixXd W(dims[i + 1], dims[i]);
    for (int r = 0; r < dims[i + 1]; ++r)
      for (int c = 0; c < dims[i]; ++c) W(r, c) = wrow[r * dims[i] + c];
    net.w.push_back(std::move(W));
    net.b.push_back(Eigen::Map<const Eigen::VectorXd>(bias.data(),
                                                      bias.size()));
  }
  if (category) {
    const std::string cat = j.at("category");
    *category = cat == "pq" ? Category::PQ : Category::VTheta;
  }
  if (mdp) {
    const auto& jm = j.at("mdp");
    mdp->gamma = jm.at("gamma");
    mdp->n = jm.at("n");
    mdp->actions_pq = jm.at("actions_pq").get<std::vector<double>>();
    mdp->actions_vtheta = jm.at("actions_vtheta").get<std::vector<double>>();
    mdp->initial_rho_pq = jm.at("initial_rho_pq");
    mdp->initial_rho_vtheta = jm.at("initial_rho_vtheta");
    mdp->conv_bonus = jm.at("conv_bonus");
    mdp->baseline_rho = jm.at("baseline_rho");
    mdp->transform = jm.at("transform") == "raw"
                         ? MdpConfig::Transform::Raw
                         : MdpConfig::Transform::SignedLog;
  }
  return net;
}

}  // namespace admmopf
