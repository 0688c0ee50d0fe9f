#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "admmopf/errors.hpp"

namespace admmopf {

enum class BusType { PQ = 1, PV = 2, Slack = 3 };

// Branch admittance coefficients in the order they appear in the flow
// expressions: p_ij = g_ii*w_i + g_ij*wR + b_ij*wI, etc.
struct Admittance {
  double g_ii = 0, b_ii = 0;  // Y_ff
  double g_ij = 0, b_ij = 0;  // Y_ft
  double g_ji = 0, b_ji = 0;  // Y_tf
  double g_jj = 0, b_jj = 0;  // Y_tt
};

struct Bus {
  int id = 0;  // external bus number
  BusType btype = BusType::PQ;
  double pd = 0, qd = 0;      // demand, per-unit
  double gs = 0, bs = 0;      // shunt, per-unit
  double vmin2 = 0, vmax2 = 0;  // squared voltage magnitude bounds
};

struct Generator {
  int bus = 0;  // index into NetworkModel::buses
  double pmin = 0, pmax = 0, qmin = 0, qmax = 0;
  double c2 = 0, c1 = 0, c0 = 0;  // cost on per-unit power
  bool status = true;
};

struct Branch {
  int from = 0, to = 0;  // indices into NetworkModel::buses
  double r = 0, x = 0, bc = 0;
  double tap = 1.0;
  double shift = 0.0;  // radians
  double rate = 0.0;   // apparent-power limit, per-unit; 0 = unlimited
  bool status = true;
  Admittance adm;
};

struct NetworkModel {
  double base_mva = 100.0;
  std::string name;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Branch> branches;

  int bus_index(int external_id) const;  // -1 if unknown
};

struct Scenario {
  enum class Kind { Default, LoadPerturb, GenOutage, LineOutage };
  Kind kind = Kind::Default;
  std::vector<double> load_scale;  // per bus; empty means all 1.0
  int removed_gen = -1;
  int removed_line = -1;
  std::uint64_t seed = 0;
};

Admittance compute_admittance(double r, double x, double bc, double tap,
                              double shift);

NetworkModel parse_matpower(std::istream& in);
NetworkModel parse_matpower(const std::string& text);
NetworkModel parse_matpower_file(const std::string& path);

// Canonical case writer; parse(write(m)) reproduces m field-exactly.
std::string write_matpower(const NetworkModel& m);

// Throws ModelError on structural problems (invariants of NetworkModel).
void validate(const NetworkModel& m);

// True if the in-service branch subgraph spans all buses after skipping
// branch `removed_line` (-1 to skip none). Breadth-first search.
bool connected_without(const NetworkModel& m, int removed_line);

NetworkModel apply_scenario(const NetworkModel& m, const Scenario& s);

Scenario perturb_loads(const NetworkModel& m, std::uint64_t seed);
std::vector<Scenario> enumerate_gen_outages(const NetworkModel& m);
std::vector<Scenario> sample_line_outages(const NetworkModel& m, int count,
                                          std::uint64_t seed);

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

}  // namespace admmopf
