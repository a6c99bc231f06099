#include "dgopf/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dgopf {

using nlohmann::json;

void Feeder::finalize() {
  if (!(s_base > 0.0) || !(v_base > 0.0)) throw FeederError("non-positive per-unit base");
  if (!(v_sub2 > 0.0)) throw FeederError("non-positive substation voltage");

  bus_index.clear();
  for (int i = 0; i < static_cast<int>(buses.size()); ++i) {
    if (!bus_index.emplace(buses[i].id, i).second)
      throw FeederError("duplicate bus id '" + buses[i].id + "'");
  }
  if (!bus_index.count(substation))
    throw FeederError("substation bus '" + substation + "' not present");

  for (const auto& b : buses) {
    if (!std::isfinite(b.p_load) || !std::isfinite(b.q_load) || !std::isfinite(b.q_cap))
      throw FeederError("non-finite load at bus '" + b.id + "'");
    if (!(b.v_min2 < b.v_max2))
      throw FeederError("voltage bounds violate v_min2 < v_max2 at bus '" + b.id + "'");
    if (b.der) {
      if (b.der->bus != b.id) throw FeederError("DER bus mismatch at '" + b.id + "'");
      validate_der_spec(*b.der);
    }
  }

  parent_line.assign(buses.size(), -1);
  child_lines.assign(buses.size(), {});
  for (int e = 0; e < static_cast<int>(lines.size()); ++e) {
    const Line& ln = lines[e];
    auto fi = bus_index.find(ln.from_bus);
    auto ti = bus_index.find(ln.to_bus);
    if (fi == bus_index.end())
      throw FeederError("line endpoint '" + ln.from_bus + "' does not exist");
    if (ti == bus_index.end())
      throw FeederError("line endpoint '" + ln.to_bus + "' does not exist");
    if (ln.r < 0.0 || ln.x < 0.0 || !(ln.r + ln.x > 0.0))
      throw FeederError("line " + ln.from_bus + "->" + ln.to_bus + ": need r,x >= 0, r+x > 0");
    if (!(ln.i_rated2 > 0.0))
      throw FeederError("line " + ln.from_bus + "->" + ln.to_bus + ": i_rated2 must be > 0");
    if (parent_line[ti->second] != -1)
      throw FeederError("bus '" + ln.to_bus + "' has more than one parent line");
    parent_line[ti->second] = e;
    child_lines[fi->second].push_back(e);
  }
  // Deterministic child order by child bus id.
  for (auto& kids : child_lines) {
    std::sort(kids.begin(), kids.end(), [this](int a, int b) {
      return lines[a].to_bus < lines[b].to_bus;
    });
  }
}

int Feeder::index_of(const BusId& id) const {
  auto it = bus_index.find(id);
  if (it == bus_index.end()) throw FeederError("unknown bus id '" + id + "'");
  return it->second;
}

std::vector<DerSpec> Feeder::embedded_ders() const {
  std::vector<DerSpec> out;
  for (const auto& b : buses)
    if (b.der) out.push_back(*b.der);
  std::sort(out.begin(), out.end(),
            [](const DerSpec& a, const DerSpec& b) { return a.bus < b.bus; });
  return out;
}

namespace {

double get_num(const json& j, const std::string& key, double fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) throw FeederError("field '" + key + "' must be a number");
  return it->get<double>();
}

bool has(const json& j, const std::string& key) { return j.find(key) != j.end(); }

// Accepts either a per-unit field or a physical field with a conversion
// factor; physical wins if both are present.
double pu_or_phys(const json& j, const std::string& pu_key, const std::string& phys_key,
                  double phys_to_pu, double fallback) {
  if (has(j, phys_key)) return get_num(j, phys_key, 0.0) * phys_to_pu;
  return get_num(j, pu_key, fallback);
}

DerMode parse_mode(const json& jd, double s_rating_pu, double kw_to_pu) {
  const std::string mode = jd.at("mode").get<std::string>();
  if (mode == "gfli_q") {
    GridFollowingQ m;
    m.p_measured = pu_or_phys(jd, "p_measured_pu", "p_measured_kw", kw_to_pu, 0.0);
    return m;
  }
  if (mode == "gfli_p") return GridFollowingP{};
  if (mode == "gsi") {
    GridSupporting m;
    m.q_ref = pu_or_phys(jd, "q_ref_pu", "q_ref_kvar", kw_to_pu, 0.0);
    m.v_ref = get_num(jd, "v_ref_pu", 1.0);
    m.k_q = get_num(jd, "k_q_pu", 0.0);
    m.p_measured = pu_or_phys(jd, "p_measured_pu", "p_measured_kw", kw_to_pu, 0.0);
    return m;
  }
  if (mode == "gfi") {
    GridForming m;
    const double v_set = get_num(jd, "v_set_pu", 1.0);
    m.v_set2 = v_set * v_set;
    return m;
  }
  if (mode == "pv_bus") {
    PvTypeBus m;
    const double v_set = get_num(jd, "v_set_pu", 1.0);
    m.v_set2 = v_set * v_set;
    m.p_set = pu_or_phys(jd, "p_set_pu", "p_set_kw", kw_to_pu, 0.0);
    m.penalty_m = get_num(jd, "penalty_m", 100.0);
    return m;
  }
  (void)s_rating_pu;
  throw FeederError("unknown DER mode '" + mode + "'");
}

}  // namespace

Feeder parse_feeder(std::istream& in, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FeederError(origin + ": not valid JSON: " + e.what());
  }

  try {
    Feeder f;
    const json& meta = doc.at("meta");
    f.name = meta.value("name", origin);
    f.s_base = get_num(meta, "s_base_kva", 1000.0) * 1e3;  // kVA -> VA
    f.v_base = get_num(meta, "v_base_kv", 4.16) * 1e3;     // kV -> V
    if (!(f.s_base > 0.0) || !(f.v_base > 0.0)) throw FeederError("non-positive base");
    f.substation = meta.at("substation").get<std::string>();
    const double v_sub = get_num(meta, "v_sub_pu", 1.0);
    f.v_sub2 = v_sub * v_sub;

    const double kw_to_pu = 1e3 / f.s_base;
    const double z_base = f.v_base * f.v_base / f.s_base;
    const double i_base = f.s_base / f.v_base;  // single-phase equivalent

    for (const json& jb : doc.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<std::string>();
      b.p_load = pu_or_phys(jb, "p_pu", "p_kw", kw_to_pu, 0.0);
      b.q_load = pu_or_phys(jb, "q_pu", "q_kvar", kw_to_pu, 0.0);
      b.q_cap = pu_or_phys(jb, "q_cap_pu", "q_cap_kvar", kw_to_pu, 0.0);
      const double v_min = get_num(jb, "v_min_pu", 0.95);
      const double v_max = get_num(jb, "v_max_pu", 1.05);
      b.v_min2 = v_min * v_min;
      b.v_max2 = v_max * v_max;
      f.buses.push_back(std::move(b));
    }

    for (const json& jl : doc.at("lines")) {
      Line ln;
      ln.from_bus = jl.at("from").get<std::string>();
      ln.to_bus = jl.at("to").get<std::string>();
      ln.r = pu_or_phys(jl, "r_pu", "r_ohm", 1.0 / z_base, 0.0);
      ln.x = pu_or_phys(jl, "x_pu", "x_ohm", 1.0 / z_base, 0.0);
      if (has(jl, "i_rated_a")) {
        const double i_pu = get_num(jl, "i_rated_a", 0.0) / i_base;
        ln.i_rated2 = i_pu * i_pu;
      } else if (has(jl, "i_rated_pu")) {
        const double i_pu = get_num(jl, "i_rated_pu", 0.0);
        ln.i_rated2 = i_pu * i_pu;
      }
      f.lines.push_back(std::move(ln));
    }

    if (doc.contains("ders")) {
      for (const json& jd : doc.at("ders")) {
        DerSpec d;
        d.bus = jd.at("bus").get<std::string>();
        d.s_rating = pu_or_phys(jd, "s_rating_pu", "s_rating_kva", kw_to_pu, 0.0);
        d.mode = parse_mode(jd, d.s_rating, kw_to_pu);
        bool placed = false;
        for (auto& b : f.buses) {
          if (b.id == d.bus) {
            if (b.der) throw FeederError("bus '" + d.bus + "' has more than one DER");
            b.der = d;
            placed = true;
            break;
          }
        }
        if (!placed) throw FeederError("DER references unknown bus '" + d.bus + "'");
      }
    }

    f.finalize();
    return f;
  } catch (const json::exception& e) {
    throw FeederError(origin + ": schema violation: " + e.what());
  }
}

Feeder parse_feeder_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FeederError("cannot open feeder file '" + path + "'");
  return parse_feeder(in, path);
}

Feeder parse_feeder_string(const std::string& text) {
  std::istringstream in(text);
  return parse_feeder(in, "<string>");
}

TopologyReport validate_radial(const Feeder& f) {
  TopologyReport rep;
  auto flag = [&rep](const std::string& msg) {
    rep.ok = false;
    rep.violations.push_back(msg);
  };

  const int nb = static_cast<int>(f.buses.size());
  const int nl = static_cast<int>(f.lines.size());
  if (nl != nb - 1)
    flag("|lines| = " + std::to_string(nl) + " but |buses| - 1 = " + std::to_string(nb - 1));

  const int root = f.index_of(f.substation);
  if (f.parent_line[root] != -1) flag("substation '" + f.substation + "' has a parent line");

  for (int i = 0; i < nb; ++i) {
    if (i != root && f.parent_line[i] == -1)
      flag("bus '" + f.buses[i].id + "' has no parent (disconnected from substation)");
  }

  // BFS from the substation must reach every bus.
  std::vector<char> seen(nb, 0);
  std::queue<int> q;
  q.push(root);
  seen[root] = 1;
  int reached = 1;
  while (!q.empty()) {
    int b = q.front();
    q.pop();
    for (int e : f.child_lines[b]) {
      int c = f.index_of(f.lines[e].to_bus);
      if (!seen[c]) {
        seen[c] = 1;
        ++reached;
        q.push(c);
      }
    }
  }
  if (reached != nb)
    flag("only " + std::to_string(reached) + " of " + std::to_string(nb) +
         " buses reachable from the substation");

  return rep;
}

std::vector<int> topological_order(const Feeder& f) {
  TopologyReport rep = validate_radial(f);
  if (!rep.ok) throw FeederError("topological_order: feeder is not radial: " + rep.violations[0]);

  std::vector<int> order;
  order.reserve(f.buses.size());
  // child_lines are already sorted by child id, so a plain DFS/BFS is
  // deterministic; BFS keeps siblings in id order.
  std::queue<int> q;
  q.push(f.index_of(f.substation));
  while (!q.empty()) {
    int b = q.front();
    q.pop();
    order.push_back(b);
    for (int e : f.child_lines[b]) q.push(f.index_of(f.lines[e].to_bus));
  }
  return order;
}

AreaPartition partition(const Feeder& f, const std::map<BusId, int>& assignment) {
  TopologyReport rep = validate_radial(f);
  if (!rep.ok) throw FeederError("partition: feeder is not radial: " + rep.violations[0]);

  const int nb = static_cast<int>(f.buses.size());
  std::vector<int> area_of(nb, -1);
  for (int i = 0; i < nb; ++i) {
    auto it = assignment.find(f.buses[i].id);
    if (it == assignment.end())
      throw FeederError("partition: bus '" + f.buses[i].id + "' has no area assignment");
    area_of[i] = it->second;
  }
  for (const auto& [id, a] : assignment) {
    if (!f.bus_index.count(id)) throw FeederError("partition: assignment names unknown bus '" + id + "'");
    (void)a;
  }

  std::set<int> ids(area_of.begin(), area_of.end());
  std::map<int, Area> areas;
  for (int id : ids) areas[id].id = id;
  for (int i = 0; i < nb; ++i) areas[area_of[i]].buses.push_back(i);
  for (auto& [id, a] : areas) {
    std::sort(a.buses.begin(), a.buses.end(),
              [&f](int l, int r) { return f.buses[l].id < f.buses[r].id; });
    (void)id;
  }

  AreaPartition part;
  for (auto& [id, a] : areas) {
    part.areas.push_back(std::move(a));
    (void)id;
  }

  std::map<int, int> pos;  // area id -> position in part.areas
  for (int i = 0; i < static_cast<int>(part.areas.size()); ++i) pos[part.areas[i].id] = i;
  part.bus_area.resize(nb);
  for (int i = 0; i < nb; ++i) part.bus_area[i] = pos[area_of[i]];

  // Ownership: a line belongs to the area of its from-bus. Lines whose
  // endpoints live in different areas are boundary edges.
  for (int e = 0; e < static_cast<int>(f.lines.size()); ++e) {
    const int jf = f.index_of(f.lines[e].from_bus);
    const int jt = f.index_of(f.lines[e].to_bus);
    const int af = area_of[jf];
    const int at = area_of[jt];
    part.areas[pos[af]].lines.push_back(e);
    if (af != at) {
      BoundaryEdge be;
      be.line = e;
      be.parent_bus = jf;
      be.shared_bus = jt;
      be.upstream_area = pos[af];
      be.downstream_area = pos[at];
      part.boundary_edges.push_back(be);
    }
  }
  std::sort(part.boundary_edges.begin(), part.boundary_edges.end(),
            [&f](const BoundaryEdge& a, const BoundaryEdge& b) {
              return f.buses[a.shared_bus].id < f.buses[b.shared_bus].id;
            });

  const int na = static_cast<int>(part.areas.size());
  part.root_bus.assign(na, -1);
  part.upstream_area.assign(na, std::nullopt);
  part.inbound_boundary.assign(na, std::nullopt);

  const int sub = f.index_of(f.substation);
  part.substation_area = pos[area_of[sub]];
  part.root_bus[part.substation_area] = sub;

  for (int b = 0; b < static_cast<int>(part.boundary_edges.size()); ++b) {
    const BoundaryEdge& be = part.boundary_edges[b];
    const int da = be.downstream_area;
    if (da == part.substation_area)
      throw FeederError("partition: substation area has an upstream boundary");
    if (part.inbound_boundary[da].has_value())
      throw FeederError("partition: area " + std::to_string(part.areas[da].id) +
                        " has more than one upstream shared bus (quotient graph not a tree)");
    part.inbound_boundary[da] = b;
    part.upstream_area[da] = be.upstream_area;
    part.root_bus[da] = be.shared_bus;
  }
  for (int a = 0; a < na; ++a) {
    if (a != part.substation_area && !part.inbound_boundary[a].has_value())
      throw FeederError("partition: area " + std::to_string(part.areas[a].id) +
                        " is not connected to the substation area");
  }
  if (static_cast<int>(part.boundary_edges.size()) != na - 1)
    throw FeederError("partition: quotient graph over areas is not a tree");

  // Connectivity within each area: every bus except the area root must have
  // its parent in the same area.
  for (int i = 0; i < nb; ++i) {
    const int a = pos[area_of[i]];
    if (i == part.root_bus[a]) continue;
    const int pe = f.parent_line[i];
    if (pe == -1 || area_of[f.index_of(f.lines[pe].from_bus)] != part.areas[a].id)
      throw FeederError("partition: area " + std::to_string(part.areas[a].id) +
                        " does not induce a connected subtree (bus '" + f.buses[i].id + "')");
  }

  return part;
}

AreaPartition trivial_partition(const Feeder& f) {
  std::map<BusId, int> assign;
  for (const auto& b : f.buses) assign[b.id] = 0;
  return partition(f, assign);
}

}  // namespace dgopf
