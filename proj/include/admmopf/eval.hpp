#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "admmopf/engine.hpp"
#include "admmopf/netdata.hpp"

namespace admmopf {

struct EvalRow {
  std::string scenario_id;
  std::string policy;
  int iterations = 0;
  bool converged = false;
  double objective = 0;
};

struct PolicyStats {
  std::string policy;
  int instances = 0;
  int converged_count = 0;
  double mean_iterations = 0;  // over converged rows
  double std_iterations = 0;   // sample standard deviation
};

struct Reduction {
  std::string baseline, target;
  int common_instances = 0;  // instances where both converged
  double mean_baseline = 0, mean_target = 0;
  double percent = 0;  // (mean_base - mean_target) / mean_base * 100
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> policies;  // evaluation order
};

// A policy is created fresh per instance so adaptive policies carry no state
// across instances.
using PolicyFactory = std::function<std::unique_ptr<RhoPolicy>()>;

EvalReport run_eval(const NetworkModel& base,
                    const std::vector<Scenario>& scenarios,
                    const std::vector<std::pair<std::string, PolicyFactory>>& policies,
                    const Tolerances& tol, const EngineOptions& opts,
                    int workers);

PolicyStats aggregate(const EvalReport& report, const std::string& policy);
Reduction reduction(const EvalReport& report, const std::string& baseline,
                    const std::string& target);

std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(const std::string& text);
std::string report_to_json(const EvalReport& report);

// Aligned text (or CSV) table with per-policy mean/std and one reduction
// column per non-target policy, in the style of the evaluation tables.
std::string format_report(const std::vector<EvalReport>& reports,
                          const std::string& format);

std::string scenario_id(const Scenario& s, int index);

}  // namespace admmopf
