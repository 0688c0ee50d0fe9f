#include "admmopf/netdata.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <istream>
#include <sstream>

#include "admmopf/rng.hpp"
#include "json.hpp"

namespace admmopf {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Line {
  int number;
  std::string text;
};

// Splits the stream into comment-free lines, keeping 1-based line numbers.
std::vector<Line> clean_lines(std::istream& in) {
  std::vector<Line> out;
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    auto cut = raw.find('%');
    if (cut != std::string::npos) raw.erase(cut);
    out.push_back({number, raw});
  }
  return out;
}

std::vector<double> parse_row(const std::string& text, int line_number) {
  std::vector<double> vals;
  std::istringstream iss(text);
  std::string tok;
  while (iss >> tok) {
    try {
      std::size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      vals.push_back(v);
    } catch (const std::exception&) {
      throw ParseError(line_number, "bad numeric token '" + tok + "'");
    }
  }
  return vals;
}

struct RawCase {
  std::string name;
  double base_mva = -1.0;
  std::vector<std::vector<double>> bus, gen, branch, gencost;
  std::vector<int> bus_lines, gen_lines, branch_lines, gencost_lines;
};

// Minimal reader for the MATPOWER case subset: `mpc.<field> = <scalar>;`
// and `mpc.<field> = [ rows ];` with `%` comments. Rows end at ';' or at a
// newline. Anything else (version strings, unknown fields) is skipped.
RawCase read_case(std::istream& in) {
  RawCase rc;
  auto lines = clean_lines(in);
  std::size_t i = 0;
  auto trim = [](std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c); };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
  };
  while (i < lines.size()) {
    std::string t = trim(lines[i].text);
    if (t.rfind("function", 0) == 0) {
      auto eq = t.find('=');
      if (eq != std::string::npos) rc.name = trim(t.substr(eq + 1));
      ++i;
      continue;
    }
    if (t.rfind("mpc.", 0) != 0) {
      ++i;
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      ++i;
      continue;
    }
    std::string field = trim(t.substr(4, eq - 4));
    std::string rest = trim(t.substr(eq + 1));
    if (rest.empty() || rest[0] != '[') {
      if (field == "baseMVA") {
        if (!rest.empty() && rest.back() == ';') rest.pop_back();
        rc.base_mva = parse_row(rest, lines[i].number).at(0);
      }
      ++i;  // scalar or string field we do not read
      continue;
    }
    // Matrix: consume until the closing "];".
    std::vector<std::vector<double>>* mat = nullptr;
    std::vector<int>* mat_lines = nullptr;
    if (field == "bus") mat = &rc.bus, mat_lines = &rc.bus_lines;
    else if (field == "gen") mat = &rc.gen, mat_lines = &rc.gen_lines;
    else if (field == "branch") mat = &rc.branch, mat_lines = &rc.branch_lines;
    else if (field == "gencost") mat = &rc.gencost, mat_lines = &rc.gencost_lines;
    std::string body = rest.substr(1);
    int start_line = lines[i].number;
    bool closed = false;
    std::string pending;
    int pending_line = start_line;
    auto flush_row = [&](int ln) {
      std::string row = trim(pending);
      pending.clear();
      if (row.empty()) return;
      if (mat) {
        mat->push_back(parse_row(row, ln));
        mat_lines->push_back(ln);
      }
    };
    while (true) {
      auto end = body.find(']');
      std::string chunk = (end == std::string::npos) ? body : body.substr(0, end);
      // rows end with ';' or newline
      std::size_t pos = 0;
      while (pos < chunk.size()) {
        auto semi = chunk.find(';', pos);
        if (semi == std::string::npos) {
          pending += chunk.substr(pos);
          break;
        }
        pending += chunk.substr(pos, semi - pos);
        flush_row(lines[i].number);
        pos = semi + 1;
      }
      if (end != std::string::npos) {
        flush_row(lines[i].number);
        closed = true;
        break;
      }
      flush_row(lines[i].number);  // newline terminates a row
      ++i;
      if (i >= lines.size()) break;
      body = lines[i].text;
    }
    if (!closed) throw ParseError(start_line, "unterminated matrix mpc." + field);
    ++i;
  }
  return rc;
}

void require_arity(const std::vector<std::vector<double>>& mat,
                   const std::vector<int>& mat_lines, std::size_t min_cols,
                   const char* what) {
  for (std::size_t r = 0; r < mat.size(); ++r) {
    if (mat[r].size() < min_cols || mat[r].size() != mat[0].size())
      throw ParseError(mat_lines[r], std::string(what) + " row has " +
                                         std::to_string(mat[r].size()) +
                                         " columns");
  }
}

}  // namespace

int NetworkModel::bus_index(int external_id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == external_id) return static_cast<int>(i);
  return -1;
}

Admittance compute_admittance(double r, double x, double bc, double tap,
                              double shift) {
  if (x == 0.0) throw ModelError("degenerate branch: x = 0");
  if (tap <= 0.0) throw ModelError("branch tap must be positive");
  const std::complex<double> y = 1.0 / std::complex<double>(r, x);
  const std::complex<double> ys = y + std::complex<double>(0.0, bc / 2.0);
  const std::complex<double> rot = std::polar(1.0, shift);
  const std::complex<double> yff = ys / (tap * tap);
  const std::complex<double> yft = -y / (tap * std::conj(rot));
  const std::complex<double> ytf = -y / (tap * rot);
  const std::complex<double> ytt = ys;
  return Admittance{yff.real(), yff.imag(), yft.real(), yft.imag(),
                    ytf.real(), ytf.imag(), ytt.real(), ytt.imag()};
}

NetworkModel parse_matpower(std::istream& in) {
  RawCase rc = read_case(in);
  if (rc.base_mva <= 0) throw ParseError(0, "missing mpc.baseMVA");
  if (rc.bus.empty()) throw ParseError(0, "missing mpc.bus");
  if (rc.gen.empty()) throw ParseError(0, "missing mpc.gen");
  if (rc.branch.empty()) throw ParseError(0, "missing mpc.branch");
  if (rc.gencost.empty()) throw ParseError(0, "missing mpc.gencost");
  require_arity(rc.bus, rc.bus_lines, 13, "bus");
  require_arity(rc.gen, rc.gen_lines, 10, "gen");
  require_arity(rc.branch, rc.branch_lines, 11, "branch");
  require_arity(rc.gencost, rc.gencost_lines, 4, "gencost");

  NetworkModel m;
  m.base_mva = rc.base_mva;
  m.name = rc.name;
  const double base = m.base_mva;

  for (std::size_t r = 0; r < rc.bus.size(); ++r) {
    const auto& row = rc.bus[r];
    Bus b;
    b.id = static_cast<int>(row[0]);
    const int type = static_cast<int>(row[1]);
    if (type < 1 || type > 3)
      throw ParseError(rc.bus_lines[r], "unknown bus type " + std::to_string(type));
    b.btype = static_cast<BusType>(type);
    b.pd = row[2] / base;
    b.qd = row[3] / base;
    b.gs = row[4] / base;
    b.bs = row[5] / base;
    b.vmax2 = row[11] * row[11];
    b.vmin2 = row[12] * row[12];
    m.buses.push_back(b);
  }

  for (std::size_t r = 0; r < rc.gen.size(); ++r) {
    const auto& row = rc.gen[r];
    Generator g;
    g.bus = m.bus_index(static_cast<int>(row[0]));
    if (g.bus < 0)
      throw ParseError(rc.gen_lines[r],
                       "generator references unknown bus " +
                           std::to_string(static_cast<int>(row[0])));
    g.qmax = row[3] / base;
    g.qmin = row[4] / base;
    g.status = row[7] > 0;
    g.pmax = row[8] / base;
    g.pmin = row[9] / base;
    m.generators.push_back(g);
  }

  if (rc.gencost.size() != rc.gen.size())
    throw ParseError(rc.gencost_lines[0],
                     "gencost must have one row per generator");
  for (std::size_t r = 0; r < rc.gencost.size(); ++r) {
    const auto& row = rc.gencost[r];
    const int model = static_cast<int>(row[0]);
    if (model == 1)
      throw UnsupportedFeatureError("piecewise-linear generator cost (MODEL=1)");
    if (model != 2)
      throw ParseError(rc.gencost_lines[r], "unknown cost model");
    const int ncost = static_cast<int>(row[3]);
    if (ncost > 3)
      throw UnsupportedFeatureError("polynomial cost with more than 3 coefficients");
    if (ncost < 1 || row.size() < static_cast<std::size_t>(4 + ncost))
      throw ParseError(rc.gencost_lines[r], "gencost row too short");
    double c[3] = {0, 0, 0};  // c2, c1, c0
    for (int k = 0; k < ncost; ++k) c[3 - ncost + k] = row[4 + k];
    m.generators[r].c2 = c[0] * base * base;
    m.generators[r].c1 = c[1] * base;
    m.generators[r].c0 = c[2];
  }

  for (std::size_t r = 0; r < rc.branch.size(); ++r) {
    const auto& row = rc.branch[r];
    Branch br;
    br.from = m.bus_index(static_cast<int>(row[0]));
    br.to = m.bus_index(static_cast<int>(row[1]));
    if (br.from < 0 || br.to < 0)
      throw ParseError(rc.branch_lines[r], "branch references unknown bus");
    br.r = row[2];
    br.x = row[3];
    br.bc = row[4];
    br.rate = row[5] / base;
    br.tap = row[8] == 0.0 ? 1.0 : row[8];
    br.shift = row[9] * kPi / 180.0;
    br.status = row[10] > 0;
    if (br.x == 0.0)
      throw ParseError(rc.branch_lines[r], "branch with zero reactance");
    br.adm = compute_admittance(br.r, br.x, br.bc, br.tap, br.shift);
    m.branches.push_back(br);
  }

  validate(m);
  return m;
}

NetworkModel parse_matpower(const std::string& text) {
  std::istringstream iss(text);
  return parse_matpower(iss);
}

NetworkModel parse_matpower_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path);
  NetworkModel m = parse_matpower(in);
  if (m.name.empty()) m.name = path;
  return m;
}

std::string write_matpower(const NetworkModel& m) {
  const double base = m.base_mva;
  std::ostringstream os;
  os << "function mpc = " << (m.name.empty() ? "case_unnamed" : m.name) << "\n";
  os << "mpc.version = '2';\n";
  os << "mpc.baseMVA = " << fmt(base) << ";\n";
  os << "mpc.bus = [\n";
  for (const auto& b : m.buses) {
    os << "\t" << b.id << "\t" << static_cast<int>(b.btype) << "\t"
       << fmt(b.pd * base) << "\t" << fmt(b.qd * base) << "\t"
       << fmt(b.gs * base) << "\t" << fmt(b.bs * base)
       << "\t1\t1\t0\t0\t1\t" << fmt(std::sqrt(b.vmax2)) << "\t"
       << fmt(std::sqrt(b.vmin2)) << ";\n";
  }
  os << "];\n";
  os << "mpc.gen = [\n";
  for (const auto& g : m.generators) {
    os << "\t" << m.buses[g.bus].id << "\t0\t0\t" << fmt(g.qmax * base) << "\t"
       << fmt(g.qmin * base) << "\t1\t" << fmt(base) << "\t"
       << (g.status ? 1 : 0) << "\t" << fmt(g.pmax * base) << "\t"
       << fmt(g.pmin * base) << ";\n";
  }
  os << "];\n";
  os << "mpc.branch = [\n";
  for (const auto& br : m.branches) {
    os << "\t" << m.buses[br.from].id << "\t" << m.buses[br.to].id << "\t"
       << fmt(br.r) << "\t" << fmt(br.x) << "\t" << fmt(br.bc) << "\t"
       << fmt(br.rate * base) << "\t0\t0\t" << fmt(br.tap) << "\t"
       << fmt(br.shift * 180.0 / kPi) << "\t" << (br.status ? 1 : 0)
       << ";\n";
  }
  os << "];\n";
  os << "mpc.gencost = [\n";
  for (const auto& g : m.generators) {
    os << "\t2\t0\t0\t3\t" << fmt(g.c2 / (base * base)) << "\t"
       << fmt(g.c1 / base) << "\t" << fmt(g.c0) << ";\n";
  }
  os << "];\n";
  return os.str();
}

bool connected_without(const NetworkModel& m, int removed_line) {
  const std::size_t nb = m.buses.size();
  if (nb == 0) return true;
  std::vector<std::vector<std::pair<int, int>>> adj(nb);  // (branch, other bus)
  for (std::size_t k = 0; k < m.branches.size(); ++k) {
    if (!m.branches[k].status || static_cast<int>(k) == removed_line) continue;
    adj[m.branches[k].from].push_back({static_cast<int>(k), m.branches[k].to});
    adj[m.branches[k].to].push_back({static_cast<int>(k), m.branches[k].from});
  }
  std::vector<char> seen(nb, 0);
  std::vector<int> queue{0};
  seen[0] = 1;
  std::size_t head = 0, count = 1;
  while (head < queue.size()) {
    int u = queue[head++];
    for (auto [k, v] : adj[u]) {
      (void)k;
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        queue.push_back(v);
      }
    }
  }
  return count == nb;
}

void validate(const NetworkModel& m) {
  if (m.buses.empty()) throw ModelError("network has no buses");
  int slack_count = 0;
  for (const auto& b : m.buses) {
    if (b.btype == BusType::Slack) ++slack_count;
    if (!(b.vmin2 > 0)) throw ModelError("bus voltage lower bound must be positive");
    if (b.vmax2 < b.vmin2) throw ModelError("bus voltage bounds out of order");
  }
  if (slack_count != 1)
    throw ModelError("network must have exactly one slack bus, found " +
                     std::to_string(slack_count));
  for (const auto& g : m.generators) {
    if (g.bus < 0 || g.bus >= static_cast<int>(m.buses.size()))
      throw ModelError("generator bus reference out of range");
    if (g.pmin > g.pmax || g.qmin > g.qmax)
      throw ModelError("generator bounds out of order");
    if (g.c2 < 0) throw ModelError("concave generator cost");
  }
  for (const auto& br : m.branches) {
    if (br.from < 0 || br.from >= static_cast<int>(m.buses.size()) ||
        br.to < 0 || br.to >= static_cast<int>(m.buses.size()))
      throw ModelError("branch endpoint out of range");
    if (br.x == 0.0) throw ModelError("degenerate branch: x = 0");
    if (br.tap <= 0.0) throw ModelError("branch tap must be positive");
  }
  if (!connected_without(m, -1))
    throw ModelError("in-service network is not connected");
}

NetworkModel apply_scenario(const NetworkModel& m, const Scenario& s) {
  NetworkModel out = m;
  if (!s.load_scale.empty()) {
    if (s.load_scale.size() != m.buses.size())
      throw ModelError("scenario load_scale size mismatch");
    for (std::size_t i = 0; i < out.buses.size(); ++i) {
      out.buses[i].pd *= s.load_scale[i];
      out.buses[i].qd *= s.load_scale[i];
    }
  }
  if (s.removed_gen >= 0) {
    if (s.removed_gen >= static_cast<int>(out.generators.size()))
      throw ModelError("scenario removes unknown generator");
    out.generators[s.removed_gen].status = false;
  }
  if (s.removed_line >= 0) {
    if (s.removed_line >= static_cast<int>(out.branches.size()))
      throw ModelError("scenario removes unknown branch");
    out.branches[s.removed_line].status = false;
  }
  validate(out);
  return out;
}

Scenario perturb_loads(const NetworkModel& m, std::uint64_t seed) {
  Scenario s;
  s.kind = Scenario::Kind::LoadPerturb;
  s.seed = seed;
  SplitMix64 rng(seed);
  s.load_scale.resize(m.buses.size());
  for (auto& f : s.load_scale) f = rng.uniform(0.9, 1.1);
  return s;
}

std::vector<Scenario> enumerate_gen_outages(const NetworkModel& m) {
  std::vector<Scenario> out;
  for (std::size_t g = 0; g < m.generators.size(); ++g) {
    if (!m.generators[g].status) continue;
    Scenario s;
    s.kind = Scenario::Kind::GenOutage;
    s.removed_gen = static_cast<int>(g);
    out.push_back(s);
  }
  return out;
}

std::vector<Scenario> sample_line_outages(const NetworkModel& m, int count,
                                          std::uint64_t seed) {
  std::vector<int> candidates;
  for (std::size_t k = 0; k < m.branches.size(); ++k) {
    if (!m.branches[k].status) continue;
    if (connected_without(m, static_cast<int>(k)))
      candidates.push_back(static_cast<int>(k));
  }
  if (count > static_cast<int>(candidates.size()))
    throw ModelError("requested " + std::to_string(count) +
                     " line outages but only " +
                     std::to_string(candidates.size()) +
                     " lines can be removed without islanding");
  // Partial Fisher-Yates over the candidate list.
  SplitMix64 rng(seed);
  std::vector<Scenario> out;
  for (int i = 0; i < count; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.below(candidates.size() - i));
    std::swap(candidates[i], candidates[j]);
    Scenario s;
    s.kind = Scenario::Kind::LineOutage;
    s.removed_line = candidates[i];
    s.seed = seed;
    out.push_back(s);
  }
  return out;
}

namespace {
const char* kind_name(Scenario::Kind k) {
  switch (k) {
    case Scenario::Kind::Default: return "default";
    case Scenario::Kind::LoadPerturb: return "load_perturb";
    case Scenario::Kind::GenOutage: return "gen_outage";
    case Scenario::Kind::LineOutage: return "line_outage";
  }
  return "default";
}
}  // namespace

std::string scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["kind"] = kind_name(s.kind);
  j["seed"] = s.seed;
  j["load_scale"] = s.load_scale;
  j["removed_gen"] = s.removed_gen;
  j["removed_line"] = s.removed_line;
  return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  Scenario s;
  const std::string kind = j.at("kind");
  if (kind == "load_perturb") s.kind = Scenario::Kind::LoadPerturb;
  else if (kind == "gen_outage") s.kind = Scenario::Kind::GenOutage;
  else if (kind == "line_outage") s.kind = Scenario::Kind::LineOutage;
  else s.kind = Scenario::Kind::Default;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.load_scale = j.at("load_scale").get<std::vector<double>>();
  s.removed_gen = j.at("removed_gen").get<int>();
  s.removed_line = j.at("removed_line").get<int>();
  return s;
}

}  // namespace admmopf
