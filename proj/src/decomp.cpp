#include "admmopf/decomp.hpp"

#include <sstream>

namespace admmopf {

Vector RhoVector::pq_view(const Layout& l) const {
  Vector out(l.n_pq);
  for (std::size_t i = 0; i < l.pq_ids.size(); ++i) out[i] = values[l.pq_ids[i]];
  return out;
}

Vector RhoVector::vtheta_view(const Layout& l) const {
  Vector out(l.n_vtheta);
  for (std::size_t i = 0; i < l.vtheta_ids.size(); ++i)
    out[i] = values[l.vtheta_ids[i]];
  return out;
}

RhoVector make_rho(const Layout& l, double rho_pq, double rho_vtheta) {
  RhoVector rho;
  rho.values.resize(l.n_constraints);
  for (int id : l.pq_ids) rho.values[id] = rho_pq;
  for (int id : l.vtheta_ids) rho.values[id] = rho_vtheta;
  return rho;
}

Decomposition build_decomposition(const NetworkModel& m) {
  Decomposition d;
  Layout& l = d.layout;
  const int nb = static_cast<int>(m.buses.size());
  const int ng = static_cast<int>(m.generators.size());
  const int nl = static_cast<int>(m.branches.size());

  // x layout: per in-service generator 2 slots, per in-service branch 8.
  l.gen_x0.assign(ng, -1);
  l.branch_x0.assign(nl, -1);
  int nx = 0;
  for (int g = 0; g < ng; ++g)
    if (m.generators[g].status) l.gen_x0[g] = nx, nx += 2;
  for (int b = 0; b < nl; ++b)
    if (m.branches[b].status) l.branch_x0[b] = nx, nx += 8;
  l.n_x = nx;

  // xbar layout, grouped by bus: generator copies, then incident flow copies,
  // then w_i and theta_i.
  l.gen_xbar0.assign(ng, -1);
  l.branch_from_xbar0.assign(nl, -1);
  l.branch_to_xbar0.assign(nl, -1);
  l.bus_w_slot.assign(nb, -1);
  l.bus_theta_slot.assign(nb, -1);
  int nxb = 0;
  for (int i = 0; i < nb; ++i) {
    for (int g = 0; g < ng; ++g)
      if (m.generators[g].status && m.generators[g].bus == i)
        l.gen_xbar0[g] = nxb, nxb += 2;
    for (int b = 0; b < nl; ++b) {
      if (!m.branches[b].status) continue;
      if (m.branches[b].from == i) l.branch_from_xbar0[b] = nxb, nxb += 2;
      if (m.branches[b].to == i) l.branch_to_xbar0[b] = nxb, nxb += 2;
    }
    l.bus_w_slot[i] = nxb++;
    l.bus_theta_slot[i] = nxb++;
  }
  l.n_xbar = nxb;

  auto add = [&](Category cat, int x_slot, int xbar_slot, Owner owner,
                 Quantity q) {
    CouplingConstraint c;
    c.id = static_cast<int>(d.constraints.size());
    c.category = cat;
    c.x_slot = x_slot;
    c.xbar_slot = xbar_slot;
    c.owner = owner;
    c.quantity = q;
    if (cat == Category::PQ) l.pq_ids.push_back(c.id);
    else l.vtheta_ids.push_back(c.id);
    d.constraints.push_back(c);
  };

  for (int g = 0; g < ng; ++g) {
    if (!m.generators[g].status) continue;
    Owner o{Owner::Kind::Generator, g};
    add(Category::PQ, l.gen_x0[g] + 0, l.gen_xbar0[g] + 0, o, Quantity::Pg);
    add(Category::PQ, l.gen_x0[g] + 1, l.gen_xbar0[g] + 1, o, Quantity::Qg);
  }
  for (int b = 0; b < nl; ++b) {
    if (!m.branches[b].status) continue;
    Owner o{Owner::Kind::Branch, b};
    const int x0 = l.branch_x0[b];
    const int from = m.branches[b].from, to = m.branches[b].to;
    add(Category::PQ, x0 + 0, l.branch_from_xbar0[b] + 0, o, Quantity::Pij);
    add(Category::PQ, x0 + 1, l.branch_from_xbar0[b] + 1, o, Quantity::Qij);
    add(Category::PQ, x0 + 2, l.branch_to_xbar0[b] + 0, o, Quantity::Pji);
    add(Category::PQ, x0 + 3, l.branch_to_xbar0[b] + 1, o, Quantity::Qji);
    add(Category::VTheta, x0 + 4, l.bus_w_slot[from], o, Quantity::Wi);
    add(Category::VTheta, x0 + 5, l.bus_w_slot[to], o, Quantity::Wj);
    add(Category::VTheta, x0 + 6, l.bus_theta_slot[from], o, Quantity::ThetaI);
    add(Category::VTheta, x0 + 7, l.bus_theta_slot[to], o, Quantity::ThetaJ);
  }

  l.n_constraints = static_cast<int>(d.constraints.size());
  l.n_pq = static_cast<int>(l.pq_ids.size());
  l.n_vtheta = static_cast<int>(l.vtheta_ids.size());
  return d;
}

Vector residual_primal(const Vector& x, const Vector& xbar,
                       const Decomposition& d) {
  Vector r(d.layout.n_constraints);
  for (const auto& c : d.constraints)
    r[c.id] = x[c.x_slot] - xbar[c.xbar_slot];
  return r;
}

Vector residual_dual(const Vector& xbar_now, const Vector& xbar_prev,
                     const RhoVector& rho, const Decomposition& d) {
  Vector r(d.layout.n_constraints);
  for (const auto& c : d.constraints)
    r[c.id] = -rho.values[c.id] * (xbar_now[c.xbar_slot] - xbar_prev[c.xbar_slot]);
  return r;
}

const char* category_name(Category c) {
  return c == Category::PQ ? "pq" : "vtheta";
}

const char* quantity_name(Quantity q) {
  switch (q) {
    case Quantity::Pg: return "p_g";
    case Quantity::Qg: return "q_g";
    case Quantity::Pij: return "p_ij";
    case Quantity::Qij: return "q_ij";
    case Quantity::Pji: return "p_ji";
    case Quantity::Qji: return "q_ji";
    case Quantity::Wi: return "w_i";
    case Quantity::Wj: return "w_j";
    case Quantity::ThetaI: return "theta_i";
    case Quantity::ThetaJ: return "theta_j";
  }
  return "?";
}

std::string registry_csv(const Decomposition& d) {
  std::ostringstream os;
  os << "id,category,owner_kind,owner_index,quantity\n";
  for (const auto& c : d.constraints) {
    os << c.id << "," << category_name(c.category) << ","
       << (c.owner.kind == Owner::Kind::Generator ? "generator" : "branch")
       << "," << c.owner.index << "," << quantity_name(c.quantity) << "\n";
  }
  return os.str();
}

}  // namespace admmopf
