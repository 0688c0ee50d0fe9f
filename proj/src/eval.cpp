#include "admmopf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace admmopf {

std::string scenario_id(const Scenario& s, int index) {
  switch (s.kind) {
    case Scenario::Kind::Default:
      return "default";
    case Scenario::Kind::LoadPerturb:
      return "loads_" + std::to_string(index) + "_seed" + std::to_string(s.seed);
    case Scenario::Kind::GenOutage:
      return "genout_" + std::to_string(s.removed_gen);
    case Scenario::Kind::LineOutage:
      return "lineout_" + std::to_string(s.removed_line);
  }
  return "scenario_" + std::to_string(index);
}

EvalReport run_eval(
    const NetworkModel& base, const std::vector<Scenario>& scenarios,
    const std::vector<std::pair<std::string, PolicyFactory>>& policies,
    const Tolerances& tol, const EngineOptions& opts, int workers) {
  EvalReport report;
  for (const auto& [name, factory] : policies) report.policies.push_back(name);

  const int n = static_cast<int>(scenarios.size());
  std::vector<std::vector<EvalRow>> rows(n);
  parallel_for(n, workers, [&](int i) {
    const NetworkModel net = apply_scenario(base, scenarios[i]);
    const AdmmProblem problem(net, opts);
    for (const auto& [name, factory] : policies) {
      auto policy = factory();
      EvalRow row;
      row.scenario_id = scenario_id(scenarios[i], i);
      row.policy = name;
      try {
        const EpisodeResult res = run_episode(problem, *policy, tol, {}, 1);
        row.iterations = res.iterations;
        row.converged = res.converged;
        row.objective = res.objective;
      } catch (const std::exception&) {
        row.iterations = tol.max_iter;
        row.converged = false;
        row.objective = std::numeric_limits<double>::quiet_NaN();
      }
      rows[i].push_back(row);
    }
  });
  for (auto& rs : rows)
    for (auto& r : rs) report.rows.push_back(std::move(r));
  return report;
}

PolicyStats aggregate(const EvalReport& report, const std::string& policy) {
  PolicyStats st;
  st.policy = policy;
  std::vector<double> iters;
  for (const auto& r : report.rows) {
    if (r.policy != policy) continue;
    ++st.instances;
    if (r.converged) iters.push_back(r.iterations);
  }
  st.converged_count = static_cast<int>(iters.size());
  if (!iters.empty()) {
    double sum = 0;
    for (double v : iters) sum += v;
    st.mean_iterations = sum / iters.size();
    double ss = 0;
    for (double v : iters) ss += (v - st.mean_iterations) * (v - st.mean_iterations);
    st.std_iterations = iters.size() > 1 ? std::sqrt(ss / (iters.size() - 1)) : 0.0;
  }
  return st;
}

Reduction reduction(const EvalReport& report, const std::string& baseline,
                    const std::string& target) {
  Reduction red;
  red.baseline = baseline;
  red.target = target;
  // pair rows by scenario id; count only instances where both converged
  double sum_b = 0, sum_t = 0;
  for (const auto& rb : report.rows) {
    if (rb.policy != baseline || !rb.converged) continue;
    for (const auto& rt : report.rows) {
      if (rt.policy != target || rt.scenario_id != rb.scenario_id) continue;
      if (!rt.converged) break;
      ++red.common_instances;
      sum_b += rb.iterations;
      sum_t += rt.iterations;
      break;
    }
  }
  if (red.common_instances > 0) {
    red.mean_baseline = sum_b / red.common_instances;
    red.mean_target = sum_t / red.common_instances;
    red.percent = (red.mean_baseline - red.mean_target) / red.mean_baseline * 100.0;
  }
  return red;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "scenario_id,policy,iterations,converged,objective\n";
  os.precision(17);
  for (const auto& r : report.rows)
    os << r.scenario_id << "," << r.policy << "," << r.iterations << ","
       << (r.converged ? 1 : 0) << "," << r.objective << "\n";
  return os.str();
}

EvalReport report_from_csv(const std::string& text) {
  EvalReport report;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) ||
      line != "scenario_id,policy,iterations,converged,objective")
    throw std::runtime_error("eval report schema mismatch");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (int i = 0; i < 5; ++i)
      if (!std::getline(ss, f[i], ','))
        throw std::runtime_error("eval report row too short: " + line);
    EvalRow r;
    r.scenario_id = f[0];
    r.policy = f[1];
    r.iterations = std::stoi(f[2]);
    r.converged = f[3] == "1";
    r.objective = std::stod(f[4]);
    if (std::find(report.policies.begin(), report.policies.end(), r.policy) ==
        report.policies.end())
      report.policies.push_back(r.policy);
    report.rows.push_back(std::move(r));
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["policies"] = report.policies;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"scenario_id", r.scenario_id},
                    {"policy", r.policy},
                    {"iterations", r.iterations},
                    {"converged", r.converged},
                    {"objective", r.objective}});
  j["rows"] = rows;
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& p : report.policies) {
    const PolicyStats st = aggregate(report, p);
    aggs.push_back({{"policy", st.policy},
                    {"instances", st.instances},
                    {"converged", st.converged_count},
                    {"mean_iterations", st.mean_iterations},
                    {"std_iterations", st.std_iterations}});
  }
  j["aggregates"] = aggs;
  return j.dump(2);
}

std::string format_report(const std::vector<EvalReport>& reports,
                          const std::string& format) {
  EvalReport merged;
  for (const auto& rep : reports) {
    for (const auto& p : rep.policies)
      if (std::find(merged.policies.begin(), merged.policies.end(), p) ==
          merged.policies.end())
        merged.policies.push_back(p);
    for (const auto& r : rep.rows) merged.rows.push_back(r);
  }
  const std::string target = merged.policies.empty() ? "" : merged.policies.back();

  std::ostringstream os;
  if (format == "csv") {
    os << "policy,instances,converged,mean,std,reduction_vs_" << target << "\n";
    for (const auto& p : merged.policies) {
      const PolicyStats st = aggregate(merged, p);
      os << p << "," << st.instances << "," << st.converged_count << ",";
      if (st.converged_count == 0) {
        os << "no converged instances,,\n";
        continue;
      }
      os << st.mean_iterations << "," << st.std_iterations << ",";
      if (p != target) {
        const Reduction red = reduction(merged, p, target);
        if (red.common_instances > 0) os << red.percent;
      }
      os << "\n";
    }
    return os.str();
  }

  os << std::left << std::setw(22) << "policy" << std::right << std::setw(10)
     << "instances" << std::setw(11) << "converged" << std::setw(12) << "mean"
     << std::setw(12) << "std" << std::setw(16) << "reduction(%)" << "\n";
  for (const auto& p : merged.policies) {
    const PolicyStats st = aggregate(merged, p);
    os << std::left << std::setw(22) << p << std::right << std::setw(10)
       << st.instances << std::setw(11) << st.converged_count;
    if (st.converged_count == 0) {
      os << std::setw(25) << "no converged instances" << "\n";
      continue;
    }
    os << std::setw(12) << std::fixed << std::setprecision(1)
       << st.mean_iterations << std::setw(12) << st.std_iterations;
    if (p != target) {
      const Reduction red = reduction(merged, p, target);
      if (red.common_instances > 0)
        os << std::setw(16) << red.percent;
      else
        os << std::setw(16) << "-";
    } else {
      os << std::setw(16) << "-";
    }
    os << "\n";
    os.unsetf(std::ios::fixed);
    os << std::setprecision(6);
  }
  return os.str();
}

}  // namespace admmopf
