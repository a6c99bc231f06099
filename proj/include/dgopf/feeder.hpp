// Data model, ingestion, validation and area partitioning for balanced radial
// distribution feeders. All electrical quantities are per-unit internally.
#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgopf/inverter.hpp"

namespace dgopf {

struct FeederError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Bus {
  BusId id;
  double p_load = 0.0;  // pu
  double q_load = 0.0;  // pu
  double q_cap = 0.0;   // pu shunt capacitor injection
  std::optional<DerSpec> der;
  double v_min2 = 0.95 * 0.95;  // pu^2
  double v_max2 = 1.05 * 1.05;  // pu^2
};

struct Line {
  BusId from_bus;
  BusId to_bus;
  double r = 0.0;         // pu
  double x = 0.0;         // pu
  double i_rated2 = 1e4;  // pu^2 squared ampacity
};

/// A balanced radial feeder. Immutable after construction; build one through
/// parse_feeder or by filling the fields and calling finalize().
struct Feeder {
  std::string name;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  BusId substation;
  double v_sub2 = 1.0;   // pu^2
  double s_base = 1e6;   // VA
  double v_base = 4160;  // V

  // Derived lookups, filled by finalize().
  std::map<BusId, int> bus_index;
  std::vector<int> parent_line;               // per bus, -1 at the substation
  std::vector<std::vector<int>> child_lines;  // per bus, sorted by child id

  /// Builds the index and adjacency tables. Throws FeederError on duplicate
  /// ids, dangling endpoints or non-positive bases.
  void finalize();

  int index_of(const BusId& id) const;
  const Bus& bus(const BusId& id) const { return buses[index_of(id)]; }

  /// DER specs embedded in the feeder, sorted by bus id.
  std::vector<DerSpec> embedded_ders() const;
};

/// Parses the JSON feeder schema (see README for field names). Loads may be
/// given in kW/kvar and line impedances in ohms; everything is converted to
/// per-unit using the meta bases.
Feeder parse_feeder(std::istream& in, const std::string& origin = "<stream>");
Feeder parse_feeder_file(const std::string& path);
Feeder parse_feeder_string(const std::string& text);

struct TopologyReport {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Checks the radial-tree invariants: connected, |lines| = |buses| - 1, every
/// non-root bus has exactly one parent. Violations are data, not faults.
TopologyReport validate_radial(const Feeder& f);

/// Root-first ordering of bus indices; every bus appears after its parent,
/// ties broken by bus id. Throws FeederError on non-radial input.
std::vector<int> topological_order(const Feeder& f);

struct Area {
  int id = 0;
  std::vector<int> buses;  // bus indices, sorted by bus id
  std::vector<int> lines;  // line indices owned by this area
};

/// A line (j,k) whose child k roots a downstream area. The edge is owned by
/// the upstream area; bus k belongs to the downstream area and plays a dual
/// role: fixed-load leaf upstream, voltage-pinned root downstream.
struct BoundaryEdge {
  int line = -1;
  int parent_bus = -1;  // j
  int shared_bus = -1;  // k
  int upstream_area = -1;
  int downstream_area = -1;
};

struct AreaPartition {
  std::vector<Area> areas;  // sorted by area id
  std::vector<BoundaryEdge> boundary_edges;
  std::vector<int> bus_area;                        // per bus index: position in areas
  std::vector<int> root_bus;                        // per area: subtree root bus index
  std::vector<std::optional<int>> upstream_area;    // per area; empty for the substation area
  std::vector<std::optional<int>> inbound_boundary; // per area: index into boundary_edges
  int substation_area = -1;
};

/// Splits a feeder into areas from a total bus->area assignment. Each area's
/// bus set must induce a connected subtree and the quotient graph over areas
/// must be a tree; otherwise throws FeederError.
AreaPartition partition(const Feeder& f, const std::map<BusId, int>& assignment);

/// Single-area partition covering the whole feeder.
AreaPartition trivial_partition(const Feeder& f);

}  // namespace dgopf
