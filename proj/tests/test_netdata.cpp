#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "admmopf/netdata.hpp"
#include "admmopf/rng.hpp"
#include "oracles.hpp"

using namespace admmopf;

namespace {
const std::string kDataDir = ADMMOPF_DATA_DIR;

NetworkModel load(const std::string& name) {
  return parse_matpower_file(kDataDir + "/" + name);
}

// Two-bus, one-line, one-generator network used by several edge cases.
const char* kTinyCase = R"(
function mpc = tiny2
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0  0 0 1 1 0 0 1 1.1 0.9;
  2 1 50 20 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 100 -100 1 100 1 200 10;
];
mpc.branch = [
  1 2 0.01 0.1 0.02 250 0 0 0 0 1;
];
mpc.gencost = [
  2 0 0 3 0.1 5 0;
];
)";
}  // namespace

TEST_CASE("case9 parses with the standard element counts") {
  const NetworkModel m = load("case9.m");
  CHECK(m.buses.size() == 9);
  CHECK(m.generators.size() == 3);
  CHECK(m.branches.size() == 9);
  CHECK(m.base_mva == 100.0);

  // slack row: `1 3 0 0 0 0 1 1 0 345 1 1.1 0.9`
  CHECK(m.buses[0].btype == BusType::Slack);
  CHECK(m.buses[0].pd == 0.0);
  CHECK(m.buses[0].qd == 0.0);
  CHECK(m.buses[0].vmax2 == doctest::Approx(1.21).epsilon(1e-15));
  CHECK(m.buses[0].vmin2 == doctest::Approx(0.81).epsilon(1e-15));

  // per-unit scaling of loads and cost coefficients
  CHECK(m.buses[4].pd == doctest::Approx(0.9));
  CHECK(m.generators[0].pmax == doctest::Approx(2.5));
  CHECK(m.generators[0].c2 == doctest::Approx(0.11 * 100 * 100));
  CHECK(m.generators[0].c1 == doctest::Approx(5.0 * 100));
  CHECK(m.generators[0].c0 == doctest::Approx(150.0));
}

TEST_CASE("case30 and case118 element counts") {
  const NetworkModel m30 = load("case30.m");
  CHECK(m30.buses.size() == 30);
  CHECK(m30.generators.size() == 6);
  CHECK(m30.branches.size() == 41);
  const NetworkModel m118 = load("case118.m");
  CHECK(m118.buses.size() == 118);
  CHECK(m118.generators.size() == 54);
  CHECK(m118.branches.size() == 186);
}

TEST_CASE("round trip through the canonical writer is field-exact") {
  for (const auto* name : {"case9.m", "case30.m", "case118.m"}) {
    const NetworkModel a = load(name);
    const NetworkModel b = parse_matpower(write_matpower(a));
    REQUIRE(a.buses.size() == b.buses.size());
    REQUIRE(a.generators.size() == b.generators.size());
    REQUIRE(a.branches.size() == b.branches.size());
    CHECK(a.base_mva == b.base_mva);
    for (std::size_t i = 0; i < a.buses.size(); ++i) {
      CHECK(a.buses[i].id == b.buses[i].id);
      CHECK(a.buses[i].btype == b.buses[i].btype);
      CHECK(a.buses[i].pd == b.buses[i].pd);
      CHECK(a.buses[i].qd == b.buses[i].qd);
      CHECK(a.buses[i].gs == b.buses[i].gs);
      CHECK(a.buses[i].bs == b.buses[i].bs);
      CHECK(a.buses[i].vmin2 == b.buses[i].vmin2);
      CHECK(a.buses[i].vmax2 == b.buses[i].vmax2);
    }
    for (std::size_t i = 0; i < a.generators.size(); ++i) {
      CHECK(a.generators[i].bus == b.generators[i].bus);
      CHECK(a.generators[i].pmin == b.generators[i].pmin);
      CHECK(a.generators[i].pmax == b.generators[i].pmax);
      CHECK(a.generators[i].qmin == b.generators[i].qmin);
      CHECK(a.generators[i].qmax == b.generators[i].qmax);
      CHECK(a.generators[i].c2 == b.generators[i].c2);
      CHECK(a.generators[i].c1 == b.generators[i].c1);
      CHECK(a.generators[i].c0 == b.generators[i].c0);
      CHECK(a.generators[i].status == b.generators[i].status);
    }
    for (std::size_t i = 0; i < a.branches.size(); ++i) {
      CHECK(a.branches[i].from == b.branches[i].from);
      CHECK(a.branches[i].to == b.branches[i].to);
      CHECK(a.branches[i].r == b.branches[i].r);
      CHECK(a.branches[i].x == b.branches[i].x);
      CHECK(a.branches[i].bc == b.branches[i].bc);
      CHECK(a.branches[i].tap == b.branches[i].tap);
      CHECK(a.branches[i].shift == b.branches[i].shift);
      CHECK(a.branches[i].rate == b.branches[i].rate);
      CHECK(a.branches[i].status == b.branches[i].status);
    }
  }
}

TEST_CASE("parser error paths") {
  SUBCASE("piecewise-linear cost is unsupported") {
    std::string text = kTinyCase;
    const auto pos = text.find("2 0 0 3 0.1 5 0");
    text.replace(pos, 15, "1 0 0 2 0 0 100 5000");
    CHECK_THROWS_AS(parse_matpower(text), UnsupportedFeatureError);
  }
  SUBCASE("row arity mismatch reports the line") {
    const std::string needle = "  2 1 50 20 0 0 1 1 0 0 1 1.1 0.9;";
    std::string bad = kTinyCase;
    bad.replace(bad.find(needle), needle.size(), "  2 1 50 20 0 0 1 1 0 0 1 1.1;");
    try {
      parse_matpower(bad);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 7);
    }
  }
  SUBCASE("missing matrix") {
    std::string text = kTinyCase;
    const auto pos = text.find("mpc.gencost");
    text = text.substr(0, pos);
    CHECK_THROWS_AS(parse_matpower(text), ParseError);
  }
  SUBCASE("NCOST above 3 is unsupported") {
    std::string text = kTinyCase;
    const auto pos = text.find("2 0 0 3 0.1 5 0");
    text.replace(pos, 15, "2 0 0 4 0 0.1 5 0");
    CHECK_THROWS_AS(parse_matpower(text), UnsupportedFeatureError);
  }
}

TEST_CASE("compute_admittance matches hand calculations") {
  SUBCASE("pure reactance") {
    const Admittance a = compute_admittance(0, 1, 0, 1, 0);
    CHECK(a.g_ii == doctest::Approx(0.0));
    CHECK(a.b_ii == doctest::Approx(-1.0));
    CHECK(a.g_ij == doctest::Approx(0.0));
    CHECK(a.b_ij == doctest::Approx(1.0));
    CHECK(a.b_ji == doctest::Approx(1.0));
    CHECK(a.b_jj == doctest::Approx(-1.0));
  }
  SUBCASE("charging susceptance shifts the diagonals") {
    const Admittance a = compute_admittance(0, 1, 0.2, 1, 0);
    CHECK(a.b_ii == doctest::Approx(-0.9));
    CHECK(a.b_jj == doctest::Approx(-0.9));
    CHECK(a.b_ij == doctest::Approx(1.0));
  }
  SUBCASE("series impedance") {
    const Admittance a = compute_admittance(0.01, 0.1, 0, 1, 0);
    CHECK(a.g_ii == doctest::Approx(0.01 / 0.0101).epsilon(1e-12));
    CHECK(a.b_ii == doctest::Approx(-0.1 / 0.0101).epsilon(1e-12));
  }
  SUBCASE("degenerate branch") {
    CHECK_THROWS_AS(compute_admittance(0.1, 0.0, 0, 1, 0), ModelError);
  }
}

TEST_CASE("admittance complex identities") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const double r = rng.uniform(0.0, 0.1);
    const double x = rng.uniform(0.01, 0.3);
    const double bc = rng.uniform(0.0, 0.4);
    const double tap = rng.uniform(0.9, 1.1);
    // shift = 0: Y_ft == Y_tf
    const Admittance a = compute_admittance(r, x, bc, tap, 0.0);
    CHECK(a.g_ij == doctest::Approx(a.g_ji).epsilon(1e-14));
    CHECK(a.b_ij == doctest::Approx(a.b_ji).epsilon(1e-14));
    // tap = 1, bc = 0: Y_ff == Y_tt == -Y_ft
    const Admittance b = compute_admittance(r, x, 0.0, 1.0, 0.0);
    CHECK(b.g_ii == doctest::Approx(b.g_jj).epsilon(1e-14));
    CHECK(b.b_ii == doctest::Approx(b.b_jj).epsilon(1e-14));
    CHECK(b.g_ii == doctest::Approx(-b.g_ij).epsilon(1e-14));
    CHECK(b.b_ii == doctest::Approx(-b.b_ij).epsilon(1e-14));
  }
}

TEST_CASE("perturb_loads determinism, range and statistics") {
  const NetworkModel m = load("case30.m");
  const Scenario a = perturb_loads(m, 42);
  const Scenario b = perturb_loads(m, 42);
  CHECK(a.load_scale == b.load_scale);
  CHECK(a.load_scale.size() == m.buses.size());

  // zero-load bus stays zero-load
  const NetworkModel applied = apply_scenario(m, a);
  CHECK(applied.buses[0].pd == 0.0);  // bus 1 has no load in case30

  double sum = 0, mn = 2, mx = 0;
  int count = 0;
  for (std::uint64_t seed = 0; seed < 334; ++seed) {
    const Scenario s = perturb_loads(m, seed);
    for (double f : s.load_scale) {
      sum += f;
      mn = std::min(mn, f);
      mx = std::max(mx, f);
      ++count;
    }
  }
  REQUIRE(count >= 10000);
  CHECK(sum / count == doctest::Approx(1.0).epsilon(0.01));
  CHECK(mn >= 0.9);
  CHECK(mx <= 1.1);
}

TEST_CASE("generator outage enumeration") {
  CHECK(enumerate_gen_outages(load("case9.m")).size() == 3);
  CHECK(enumerate_gen_outages(load("case30.m")).size() == 6);
  CHECK(enumerate_gen_outages(load("case118.m")).size() == 54);

  NetworkModel tiny = parse_matpower(kTinyCase);
  CHECK(enumerate_gen_outages(tiny).size() == 1);
  tiny.generators[0].status = false;
  CHECK(enumerate_gen_outages(tiny).empty());
}

TEST_CASE("line outage sampling stays connected and is deterministic") {
  const NetworkModel m = load("case9.m");
  const auto scen = sample_line_outages(m, 6, 11);
  CHECK(scen.size() == 6);
  std::set<int> removed;
  for (const auto& s : scen) {
    removed.insert(s.removed_line);
    CHECK(connected_without(m, s.removed_line));
    CHECK(oracles::connected_union_find(m, s.removed_line));
  }
  CHECK(removed.size() == 6);  // distinct

  const auto scen2 = sample_line_outages(m, 6, 11);
  for (std::size_t i = 0; i < scen.size(); ++i)
    CHECK(scen[i].removed_line == scen2[i].removed_line);

  // case9 has exactly 6 non-bridging lines; asking for more must fail
  CHECK_THROWS_AS(sample_line_outages(m, 7, 1), ModelError);

  // a radial network has no removable line
  const NetworkModel tiny = parse_matpower(kTinyCase);
  CHECK_THROWS_AS(sample_line_outages(tiny, 1, 1), ModelError);
}

TEST_CASE("scenario JSON round trip") {
  const NetworkModel m = load("case9.m");
  Scenario s = perturb_loads(m, 1234);
  const Scenario t = scenario_from_json(scenario_to_json(s));
  CHECK(t.kind == s.kind);
  CHECK(t.seed == s.seed);
  CHECK(t.load_scale == s.load_scale);
  CHECK(t.removed_gen == s.removed_gen);
  CHECK(t.removed_line == s.removed_line);
}

TEST_CASE("model validation") {
  NetworkModel m = parse_matpower(kTinyCase);
  SUBCASE("no slack") {
    m.buses[0].btype = BusType::PV;
    CHECK_THROWS_AS(validate(m), ModelError);
  }
  SUBCASE("disconnected") {
    m.branches[0].status = false;
    CHECK_THROWS_AS(validate(m), ModelError);
  }
  SUBCASE("voltage bounds") {
    m.buses[0].vmin2 = 0.0;
    CHECK_THROWS_AS(validate(m), ModelError);
  }
}
