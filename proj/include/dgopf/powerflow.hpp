// Nonlinear branch-flow power flow for fixed injections, solved by a
// backward/forward sweep. Serves as the feasibility oracle and as the
// validation loop for OPF dispatches.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgopf/feeder.hpp"
#include "dgopf/solution.hpp"

namespace dgopf {

struct PowerFlowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-DER injection for a power-flow solve. If droop is set, q is resolved
/// inside the sweep from the bus voltage via droop_q and the q field is
/// ignored; p is always fixed.
struct DispatchEntry {
  double p = 0.0;
  double q = 0.0;
  std::optional<GridSupporting> droop;
};

using Dispatch = std::map<BusId, DispatchEntry>;

struct PowerFlowState {
  std::vector<double> v2;      // per bus, feeder order (pu^2)
  std::vector<double> p_flow;  // per line, sending end (pu)
  std::vector<double> q_flow;  // per line (pu)
  std::vector<double> l;       // per line, squared current (pu^2)
  double losses = 0.0;         // sum r*l (pu)
  int iterations = 0;
  std::array<double, 4> residual{};  // max abs violation of (1a),(1b),(1c),(1d)
};

struct PowerFlowOptions {
  double tol = 1e-10;
  int max_iter = 200;
};

/// Fixed point of the backward (flow aggregation) / forward (voltage
/// propagation) sweep. Throws PowerFlowError on divergence or voltage
/// collapse.
PowerFlowState solve_powerflow(const Feeder& f, const Dispatch& dispatch, double v_sub2,
                               const PowerFlowOptions& opts = {});

/// Max absolute violation of each branch-flow equation for an arbitrary
/// state, droop entries resolved against the state's voltages.
std::array<double, 4> residuals(const Feeder& f, const PowerFlowState& s,
                                const Dispatch& dispatch);

struct ValidationReport {
  bool pf_converged = false;
  double v_mismatch = 0.0;       // max |v2_solution - v2_resolved| (pu^2)
  double droop_mismatch = 0.0;   // max |q_D - droop_q(v2_resolved)| at GSI buses
  double gfi_v_mismatch = 0.0;   // max |v2_resolved - v_set2| at GFI buses
  double disk_violation = 0.0;   // max rating-disk violation at GFI buses
  std::vector<std::string> limit_violations;  // box (7c) / thermal (7d) breaches
  bool passed = false;
  std::string detail;
};

/// Re-solves the power flow with the solution's DER dispatches held fixed and
/// compares the resulting state against the solution (the OpenDSS-style
/// validation loop). Power-flow divergence is reported as failed validation,
/// not thrown.
ValidationReport validate_dispatch(const Feeder& f, const std::vector<DerSpec>& specs,
                                   const OpfSolution& sol, double tol);

}  // namespace dgopf
