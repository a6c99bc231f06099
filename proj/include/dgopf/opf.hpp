// Assembles the loss-minimization OPF over a feeder (or an area of one) as an
// NlpProblem: branch-flow equalities, operating limits and per-DER-mode
// constraints. One builder serves the centralized problem and the per-area
// sub-problems so that a single-area decomposition is bit-identical to C-OPF.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgopf/feeder.hpp"
#include "dgopf/nlp.hpp"
#include "dgopf/solution.hpp"

namespace dgopf {

struct OpfError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Describes one OPF instance: the whole feeder for C-OPF, or an area plus
/// its boundary leaves for the distributed sub-problems.
struct OpfInstance {
  std::vector<int> buses;  // feeder bus indices, root first in topological order
  std::vector<int> lines;  // feeder line indices owned by the instance
  int root = -1;           // feeder bus index of the local root
  double root_v2 = 1.0;    // squared-voltage pin for the root
  bool pin_root = true;    // consensus-ADMM sub-problems leave the root free
  // Boundary leaves: buses whose own load/DER/subtree is replaced by a fixed
  // received (p, q) demand.
  std::map<int, std::pair<double, double>> leaf_load;
  std::vector<DerSpec> ders;  // effective DER specs for buses owned here
  bool pv_penalty_linear = false;
};

enum class DerKind { gfli_q, gfli_p, gsi, gfi, pv_bus };

/// Index bookkeeping for one built problem. Variables are laid out as
/// [v per bus][P,Q,l per line][p,q per DER].
struct OpfLayout {
  std::vector<int> buses;  // feeder bus index per local position
  std::vector<int> lines;  // feeder line index per local position
  struct DerInfo {
    DerSpec spec;
    DerKind kind;
    int local_bus;
  };
  std::vector<DerInfo> ders;  // sorted by bus id
  int nb = 0, nl = 0, nd = 0;

  int iv(int local_bus) const { return local_bus; }
  int ip(int local_line) const { return nb + 3 * local_line; }
  int iq(int local_line) const { return nb + 3 * local_line + 1; }
  int il(int local_line) const { return nb + 3 * local_line + 2; }
  int ipd(int der) const { return nb + 3 * nl + 2 * der; }
  int iqd(int der) const { return nb + 3 * nl + 2 * der + 1; }
  int n_vars() const { return nb + 3 * nl + 2 * nd; }

  std::map<int, int> bus_pos;   // feeder bus index -> local position
  std::map<int, int> line_pos;  // feeder line index -> local position
  int root_local = 0;
};

struct BuiltOpf {
  NlpProblem problem;
  OpfLayout layout;
};

/// Problem over an instance. Throws OpfError on conflicting DER placements or
/// a grid-forming setpoint outside the bus voltage box.
BuiltOpf build_opf_instance(const Feeder& f, const OpfInstance& inst);

/// Centralized problem (C1) over the full feeder.
BuiltOpf build_copf(const Feeder& f, const std::vector<DerSpec>& specs,
                    bool pv_penalty_linear = false);

/// Flat-voltage start with lossless backward flow aggregation and mid-range
/// DER dispatch.
Vec default_start(const Feeder& f, const BuiltOpf& b);

/// Losses-only objective (PV-type penalty excluded) evaluated at x.
double losses_at(const Feeder& f, const BuiltOpf& b, const Vec& x);

/// Maps a solver result back to bus/line/DER records.
OpfSolution extract_solution(const Feeder& f, const BuiltOpf& b, const NlpSolution& ns);

struct OpfOptions {
  NlpOptions nlp;
  bool pv_penalty_linear = false;
};

/// Builds and solves (C1).
OpfSolution solve_copf(const Feeder& f, const std::vector<DerSpec>& specs,
                       const OpfOptions& opts = {});

}  // namespace dgopf
