#include "admmopf/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "admmopf/version.hpp"
#include "json.hpp"

namespace admmopf {

namespace {
std::string trim(std::string s) {
  const char* ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(trim(tok)));
  return out;
}
}  // namespace

std::map<std::string, std::string> parse_ini(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line, section;
  while (std::getline(is, line)) {
    auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line without '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    kv[(section.empty() ? key : section + "." + key)] = trim(line.substr(eq + 1));
  }
  return kv;
}

void RunConfig::apply(const std::map<std::string, std::string>& kv) {
  auto get = [&](const char* key, auto setter) {
    auto it = kv.find(key);
    if (it != kv.end()) setter(it->second);
  };
  auto d = [](const std::string& v) { return std::stod(v); };
  auto i = [](const std::string& v) { return std::stoi(v); };

  get("case.path", [&](const std::string& v) { case_path = v; });
  get("run.policy", [&](const std::string& v) { policy = v; });
  get("run.seed", [&](const std::string& v) { seed = std::stoull(v); });
  get("run.workers", [&](const std::string& v) { workers = i(v); });
  get("run.trace", [&](const std::string& v) { trace_path = v; });
  get("tolerances.eps_primal", [&](const std::string& v) { tol.eps_primal = d(v); });
  get("tolerances.eps_dual", [&](const std::string& v) { tol.eps_dual = d(v); });
  get("tolerances.max_iter", [&](const std::string& v) { tol.max_iter = i(v); });
  get("tolerances.divergence_norm",
      [&](const std::string& v) { tol.divergence_norm = d(v); });
  get("engine.mu_limit", [&](const std::string& v) { engine.mu_limit = d(v); });
  get("engine.branch_tol", [&](const std::string& v) { engine.branch_tol = d(v); });
  get("engine.branch_max_iter",
      [&](const std::string& v) { engine.branch_max_iter = i(v); });
  get("engine.history_length",
      [&](const std::string& v) { engine.history_length = i(v); });
  get("mdp.gamma", [&](const std::string& v) { mdp.gamma = d(v); });
  get("mdp.n", [&](const std::string& v) { mdp.n = i(v); });
  get("mdp.actions_pq",
      [&](const std::string& v) { mdp.actions_pq = split_doubles(v); mdp_from_case = false; });
  get("mdp.actions_vtheta",
      [&](const std::string& v) { mdp.actions_vtheta = split_doubles(v); mdp_from_case = false; });
  get("mdp.initial_rho_pq",
      [&](const std::string& v) { mdp.initial_rho_pq = d(v); mdp_from_case = false; });
  get("mdp.initial_rho_vtheta",
      [&](const std::string& v) { mdp.initial_rho_vtheta = d(v); mdp_from_case = false; });
  get("mdp.conv_bonus", [&](const std::string& v) { mdp.conv_bonus = d(v); });
  get("mdp.baseline_rho", [&](const std::string& v) { mdp.baseline_rho = d(v); });
  get("mdp.state_transform", [&](const std::string& v) {
    mdp.transform = v == "raw" ? MdpConfig::Transform::Raw
                               : MdpConfig::Transform::SignedLog;
  });
  get("train.episodes", [&](const std::string& v) { train.episodes = i(v); });
  get("train.lr", [&](const std::string& v) { train.lr = d(v); });
  get("train.momentum", [&](const std::string& v) { train.momentum = d(v); });
  get("train.batch", [&](const std::string& v) { train.batch = i(v); });
  get("train.sync_period", [&](const std::string& v) { train.sync_period = i(v); });
  get("train.eps0", [&](const std::string& v) { train.eps0 = d(v); });
  get("train.eps_min", [&](const std::string& v) { train.eps_min = d(v); });
  get("train.eps_decay_episodes",
      [&](const std::string& v) { train.eps_decay_episodes = i(v); });
  get("train.warmup", [&](const std::string& v) { train.warmup = i(v); });
  get("train.replay_capacity",
      [&](const std::string& v) { train.replay_capacity = std::stoull(v); });
  get("train.alpha_per", [&](const std::string& v) { train.alpha_per = d(v); });
  get("train.beta0", [&](const std::string& v) { train.beta0 = d(v); });
  get("train.beta1", [&](const std::string& v) { train.beta1 = d(v); });
  get("train.eps_per", [&](const std::string& v) { train.eps_per = d(v); });
  get("train.grad_clip", [&](const std::string& v) { train.grad_clip = d(v); });
  get("train.hidden", [&](const std::string& v) { train.hidden = i(v); });
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  os << "[case]\npath = " << case_path << "\n";
  os << "[run]\npolicy = " << policy << "\nseed = " << seed
     << "\nworkers = " << workers << "\ntrace = " << trace_path << "\n";
  os << "[tolerances]\neps_primal = " << tol.eps_primal
     << "\neps_dual = " << tol.eps_dual << "\nmax_iter = " << tol.max_iter
     << "\ndivergence_norm = " << tol.divergence_norm << "\n";
  os << "[engine]\nmu_limit = " << engine.mu_limit
     << "\nbranch_tol = " << engine.branch_tol
     << "\nbranch_max_iter = " << engine.branch_max_iter
     << "\nhistory_length = " << engine.history_length << "\n";
  os << "[mdp]\ngamma = " << mdp.gamma << "\nn = " << mdp.n
     << "\nactions_pq = " << join(mdp.actions_pq)
     << "\nactions_vtheta = " << join(mdp.actions_vtheta)
     << "\ninitial_rho_pq = " << mdp.initial_rho_pq
     << "\ninitial_rho_vtheta = " << mdp.initial_rho_vtheta
     << "\nconv_bonus = " << mdp.conv_bonus
     << "\nbaseline_rho = " << mdp.baseline_rho << "\nstate_transform = "
     << (mdp.transform == MdpConfig::Transform::Raw ? "raw" : "signed_log")
     << "\n";
  os << "[train]\nepisodes = " << train.episodes << "\nlr = " << train.lr
     << "\nmomentum = " << train.momentum << "\nbatch = " << train.batch
     << "\nsync_period = " << train.sync_period << "\neps0 = " << train.eps0
     << "\neps_min = " << train.eps_min
     << "\neps_decay_episodes = " << train.eps_decay_episodes
     << "\nwarmup = " << train.warmup
     << "\nreplay_capacity = " << train.replay_capacity
     << "\nalpha_per = " << train.alpha_per << "\nbeta0 = " << train.beta0
     << "\nbeta1 = " << train.beta1 << "\neps_per = " << train.eps_per << "\ngrad_clip = " << train.grad_clip
     << "\nhidden = " << train.hidden << "\n";
  return os.str();
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  RunConfig cfg;
  cfg.apply(parse_ini(ss.str()));
  return cfg;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string manifest_json(const RunConfig& cfg, int iterations, bool converged,
                          double objective) {
  nlohmann::json j;
  std::ostringstream hash;
  hash << std::hex << fnv1a64(cfg.dump());
  j["config_hash"] = hash.str();
  j["code_version"] = kVersion;
  j["case"] = cfg.case_path;
  j["policy"] = cfg.policy;
  j["seed"] = cfg.seed;
  j["tolerances"] = {{"eps_primal", cfg.tol.eps_primal},
                     {"eps_dual", cfg.tol.eps_dual},
                     {"max_iter", cfg.tol.max_iter},
                     {"divergence_norm", cfg.tol.divergence_norm}};
  j["iterations"] = iterations;
  j["converged"] = converged;
  j["objective"] = objective;
  return j.dump(2);
}

}  // namespace admmopf
