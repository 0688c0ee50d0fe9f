#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "admmopf/engine.hpp"
#include "admmopf/rl.hpp"

namespace admmopf {

// Flat INI-style document: [section] headers, key = value lines, '#' or ';'
// comments. Keys are stored as "section.key".
std::map<std::string, std::string> parse_ini(const std::string& text);

// Full experiment configuration with every default embedded; any field can be
// overridden from a config file or the command line.
struct RunConfig {
  std::string case_path;
  std::string policy = "fixed";  // fixed | residual_balancing | baseline500 | rl:<dir or pq,vtheta>
  Tolerances tol;
  EngineOptions engine;
  int workers = 1;
  std::uint64_t seed = 1;
  std::string trace_path;
  MdpConfig mdp;
  bool mdp_from_case = true;  // pick the vtheta action table by bus count
  TrainConfig train;

  void apply(const std::map<std::string, std::string>& kv);
  std::string dump() const;  // canonical printable form (also hashed)
};

RunConfig load_config(const std::string& path);

// FNV-1a 64-bit over the canonical dump.
std::uint64_t fnv1a64(const std::string& text);

std::string manifest_json(const RunConfig& cfg, int iterations, bool converged,
                          double objective);

}  // namespace admmopf
