// Command-line front end: solve / train / eval / report.
// Exit codes: 0 ok, 1 non-convergence, 2 usage or input error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "admmopf/config.hpp"
#include "admmopf/engine.hpp"
#include "admmopf/eval.hpp"
#include "admmopf/netdata.hpp"
#include "admmopf/rl.hpp"
#include "admmopf/version.hpp"

namespace fs = std::filesystem;
using namespace admmopf;

namespace {

int env_workers() {
  const char* v = std::getenv("ADMMOPF_WORKERS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n > 0 ? n : 1;
}

// "rl:DIR" or "rl:pq.json,vtheta.json"
std::pair<std::string, std::string> rl_checkpoint_paths(const std::string& spec) {
  const std::string arg = spec.substr(3);
  const auto comma = arg.find(',');
  if (comma != std::string::npos)
    return {arg.substr(0, comma), arg.substr(comma + 1)};
  return {(fs::path(arg) / "q_pq.json").string(),
          (fs::path(arg) / "q_vtheta.json").string()};
}

std::unique_ptr<RhoPolicy> make_policy(const RunConfig& cfg) {
  if (cfg.policy == "fixed")
    return std::make_unique<FixedPolicy>(cfg.mdp.initial_rho_pq,
                                         cfg.mdp.initial_rho_vtheta);
  if (cfg.policy == "baseline500")
    return std::make_unique<BaselineProbePolicy>(cfg.mdp.baseline_rho);
  if (cfg.policy == "residual_balancing")
    return std::make_unique<ResidualBalancingPolicy>(cfg.mdp.initial_rho_pq,
                                                     cfg.mdp.initial_rho_vtheta);
  if (cfg.policy.rfind("rl:", 0) == 0) {
    const auto [pq_path, vt_path] = rl_checkpoint_paths(cfg.policy);
    MdpConfig mdp;
    QNetwork q_pq = load_checkpoint(pq_path, nullptr, &mdp);
    QNetwork q_vt = load_checkpoint(vt_path);
    return std::make_unique<RLPolicy>(std::move(q_pq), std::move(q_vt), mdp);
  }
  throw std::runtime_error("unknown policy '" + cfg.policy + "'");
}

PolicyFactory policy_factory(const RunConfig& cfg, const std::string& name) {
  RunConfig c = cfg;
  c.policy = name;
  return [c]() { return make_policy(c); };
}

RunConfig base_config(const std::string& config_path) {
  if (config_path.empty()) return RunConfig{};
  return load_config(config_path);
}

int cmd_solve(RunConfig cfg, const std::string& registry_path,
              const std::string& diagnostics_path) {
  const NetworkModel model = parse_matpower_file(cfg.case_path);
  if (cfg.mdp_from_case) {
    const MdpConfig bycase = default_mdp_for(model);
    cfg.mdp.actions_vtheta = bycase.actions_vtheta;
    cfg.mdp.initial_rho_vtheta = bycase.initial_rho_vtheta;
  }
  const AdmmProblem problem(model, cfg.engine);
  if (!registry_path.empty())
    std::ofstream(registry_path) << registry_csv(problem.dec());
  auto policy = make_policy(cfg);

  std::ofstream trace;
  TraceSink sink;
  if (!cfg.trace_path.empty()) {
    trace.open(cfg.trace_path);
    if (!trace) throw std::runtime_error("cannot open trace file " + cfg.trace_path);
    trace << "k,norm_rp,norm_rd,mean_rho_pq,mean_rho_vtheta,objective,wall_time\n";
    trace.precision(17);
    sink = [&trace](const TraceRow& row) {
      trace << row.k << "," << row.norm_rp << "," << row.norm_rd << ","
            << row.mean_rho_pq << "," << row.mean_rho_vtheta << ","
            << row.objective << "," << row.wall_time << "\n";
    };
  }

  std::ofstream diag_file;
  DiagnosticsSink diag_sink;
  if (!diagnostics_path.empty()) {
    diag_file.open(diagnostics_path);
    if (!diag_file)
      throw std::runtime_error("cannot open diagnostics file " + diagnostics_path);
    diag_file << "k,component,id,inner_iterations,limit_penalty,"
                 "balance_p,balance_q\n";
    diag_file.precision(17);
    diag_sink = [&diag_file](int k, const StepDiagnostics& d) {
      for (std::size_t i = 0; i < d.branch_ids.size(); ++i)
        diag_file << k << ",branch," << d.branch_ids[i] << ","
                  << d.branch_iterations[i] << "," << d.branch_limit_penalty[i]
                  << ",,\n";
      for (std::size_t i = 0; i < d.bus_ids.size(); ++i)
        diag_file << k << ",bus," << d.bus_ids[i] << ",,,"
                  << d.bus_balance_p[i] << "," << d.bus_balance_q[i] << "\n";
    };
  }

  const EpisodeResult res =
      run_episode(problem, *policy, cfg.tol, sink, cfg.workers, diag_sink);
  const std::string manifest =
      manifest_json(cfg, res.iterations, res.converged, res.objective);
  const std::string manifest_path =
      cfg.trace_path.empty() ? "manifest.json" : cfg.trace_path + ".manifest.json";
  std::ofstream(manifest_path) << manifest << "\n";
  std::cout << manifest << "\n";
  return res.converged ? 0 : 1;
}

int cmd_train(RunConfig cfg, const std::string& out_dir, bool resume) {
  const NetworkModel model = parse_matpower_file(cfg.case_path);
  if (cfg.mdp_from_case) {
    const MdpConfig bycase = default_mdp_for(model);
    cfg.mdp.actions_vtheta = bycase.actions_vtheta;
    cfg.mdp.initial_rho_vtheta = bycase.initial_rho_vtheta;
  }
  cfg.train.tol = cfg.tol;
  cfg.train.seed = cfg.seed;
  cfg.train.workers = cfg.workers;
  const AdmmProblem problem(model, cfg.engine);

  fs::create_directories(out_dir);
  const fs::path pq_path = fs::path(out_dir) / "q_pq.json";
  const fs::path vt_path = fs::path(out_dir) / "q_vtheta.json";
  const fs::path log_path = fs::path(out_dir) / "training_log.csv";

  QNetwork resume_pq, resume_vt;
  int first_episode = 0;
  const bool has_resume = resume && fs::exists(pq_path) && fs::exists(vt_path);
  if (has_resume) {
    resume_pq = load_checkpoint(pq_path.string());
    resume_vt = load_checkpoint(vt_path.string());
    if (fs::exists(log_path)) {
      std::ifstream lf(log_path);
      std::string line;
      while (std::getline(lf, line))
        if (!line.empty() && line.find("episode") == std::string::npos)
          ++first_episode;
    }
  }

  std::ofstream log(log_path, has_resume ? std::ios::app : std::ios::out);
  if (!has_resume) log << "episode,iterations,converged,cumulative_reward,eps,wall_time\n";
  log.precision(17);
  const auto on_episode = [&log](const EpisodeLog& e) {
    log << e.episode << "," << e.iterations << "," << (e.converged ? 1 : 0)
        << "," << e.cumulative_reward << "," << e.eps << "," << e.wall_time
        << "\n";
    log.flush();
  };

  const TrainResult result =
      train(problem, cfg.mdp, cfg.train, on_episode,
            has_resume ? &resume_pq : nullptr,
            has_resume ? &resume_vt : nullptr, first_episode);

  save_checkpoint(result.q_pq, Category::PQ, cfg.mdp, cfg.seed, pq_path.string());
  save_checkpoint(result.q_vtheta, Category::VTheta, cfg.mdp, cfg.seed,
                  vt_path.string());
  std::ofstream(fs::path(out_dir) / "train_manifest.json")
      << manifest_json(cfg, result.log.empty() ? 0 : result.log.back().iterations,
                       true, 0.0)
      << "\n";
  std::cout << "trained " << result.log.size() << " episodes; checkpoints in "
            << out_dir << "\n";
  return 0;
}

int cmd_eval(RunConfig cfg, const std::string& scenario_kind, int instances,
             const std::vector<std::string>& policy_names,
             const std::string& out_dir) {
  const NetworkModel model = parse_matpower_file(cfg.case_path);
  if (cfg.mdp_from_case) {
    const MdpConfig bycase = default_mdp_for(model);
    cfg.mdp.actions_vtheta = bycase.actions_vtheta;
    cfg.mdp.initial_rho_vtheta = bycase.initial_rho_vtheta;
  }

  std::vector<Scenario> scenarios;
  if (scenario_kind == "loads") {
    for (int i = 0; i < instances; ++i)
      scenarios.push_back(perturb_loads(model, cfg.seed + i));
  } else if (scenario_kind == "gen-outage") {
    scenarios = enumerate_gen_outages(model);
  } else if (scenario_kind == "line-outage") {
    scenarios = sample_line_outages(model, instances, cfg.seed);
  } else {
    throw std::runtime_error("unknown scenario kind '" + scenario_kind + "'");
  }

  std::vector<std::pair<std::string, PolicyFactory>> policies;
  for (const auto& name : policy_names)
    policies.push_back({name.rfind("rl:", 0) == 0 ? "rl" : name,
                        policy_factory(cfg, name)});

  const EvalReport report =
      run_eval(model, scenarios, policies, cfg.tol, cfg.engine, cfg.workers);

  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "eval_report.csv") << report_to_csv(report);
  std::ofstream(fs::path(out_dir) / "eval_report.json") << report_to_json(report);
  std::ofstream(fs::path(out_dir) / "scenarios.json") << [&] {
    std::string all = "[\n";
    for (std::size_t i = 0; i < scenarios.size(); ++i)
      all += scenario_to_json(scenarios[i]) + (i + 1 < scenarios.size() ? ",\n" : "\n");
    return all + "]\n";
  }();
  std::cout << format_report({report}, "text");
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& format) {
  std::vector<EvalReport> reports;
  for (const auto& path : inputs) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open report " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    reports.push_back(report_from_csv(ss.str()));
  }
  std::cout << format_report(reports, format);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Component-based ADMM solver for AC optimal power flow with "
               "learned per-constraint penalty policies"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, case_path, policy = "fixed", trace_path;
  std::string out_dir = "out", scenario_kind = "loads", format = "text";
  std::vector<std::string> policy_names, report_inputs;
  int instances = 50, episodes = -1, max_iter = -1;
  double tol_primal = -1, tol_dual = -1;
  std::uint64_t seed = 1;
  bool resume = false, print_config = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI config file");
    sub->add_option("--seed", seed, "random seed");
    sub->add_flag("--print-config", print_config,
                  "print the fully-resolved configuration and exit");
  };

  std::string registry_path, diagnostics_path;
  CLI::App* solve = app.add_subcommand("solve", "run one ADMM solve");
  solve->add_option("--case", case_path, "MATPOWER case file")->required();
  solve->add_option("--policy", policy,
                    "fixed | residual_balancing | baseline500 | rl:<dir>");
  solve->add_option("--tol-primal", tol_primal, "primal tolerance");
  solve->add_option("--tol-dual", tol_dual, "dual tolerance");
  solve->add_option("--max-iter", max_iter, "iteration cap");
  solve->add_option("--trace", trace_path, "trace CSV path");
  solve->add_option("--dump-registry", registry_path,
                    "write the coupling-constraint registry CSV and solve");
  solve->add_option("--diagnostics", diagnostics_path,
                    "per-iteration subsolver diagnostics CSV");
  add_common(solve);

  CLI::App* tr = app.add_subcommand("train", "train the penalty policy");
  tr->add_option("--case", case_path, "MATPOWER case file")->required();
  tr->add_option("--episodes", episodes, "training episodes");
  tr->add_option("--out", out_dir, "output directory");
  tr->add_flag("--resume", resume, "continue from existing checkpoints");
  add_common(tr);

  CLI::App* ev = app.add_subcommand("eval", "evaluate policies on scenarios");
  ev->add_option("--case", case_path, "MATPOWER case file")->required();
  ev->add_option("--scenario", scenario_kind, "loads | gen-outage | line-outage");
  ev->add_option("--instances", instances, "instance count");
  ev->add_option("--policies", policy_names, "policies to compare")
      ->required()
      ->delimiter(',');
  ev->add_option("--out", out_dir, "output directory");
  add_common(ev);

  CLI::App* rp = app.add_subcommand("report", "merge and format eval reports");
  rp->add_option("inputs", report_inputs, "eval_report.csv files")->required();
  rp->add_option("--format", format, "text | csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = base_config(config_path);
    if (!case_path.empty()) cfg.case_path = case_path;
    if (solve->parsed()) cfg.policy = policy;
    if (tol_primal > 0) cfg.tol.eps_primal = tol_primal;
    if (tol_dual > 0) cfg.tol.eps_dual = tol_dual;
    if (max_iter > 0) cfg.tol.max_iter = max_iter;
    if (!trace_path.empty()) cfg.trace_path = trace_path;
    if (episodes >= 0) cfg.train.episodes = episodes;
    cfg.seed = seed;
    cfg.workers = env_workers();
    if (print_config) {
      std::cout << cfg.dump();
      return 0;
    }
    if (solve->parsed()) return cmd_solve(cfg, registry_path, diagnostics_path);
    if (tr->parsed()) return cmd_train(cfg, out_dir, resume);
    if (ev->parsed())
      return cmd_eval(cfg, scenario_kind, instances, policy_names, out_dir);
    if (rp->parsed()) return cmd_report(report_inputs, format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
