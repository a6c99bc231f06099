// DER inverter operating modes and their constraint/objective building blocks.
#pragma once

#include <stdexcept>
#include <string>
#include <variant>

namespace dgopf {

using BusId = std::string;

/// Grid-following, reactive power as the decision variable. Real output is
/// exogenous (measured) for the snapshot being solved.
struct GridFollowingQ {
  double p_measured = 0.0;  // pu
};

/// Grid-following, real power as the decision variable in [0, s_rating];
/// reactive output pinned to zero.
struct GridFollowingP {};

/// Grid-supporting: reactive output follows a Q-V droop curve. Real output is
/// exogenous, mirroring GridFollowingQ (the droop governs Q only).
struct GridSupporting {
  double q_ref = 0.0;       // pu, droop reference reactive output
  double v_ref = 1.0;       // pu voltage magnitude, droop reference point
  double k_q = 0.0;         // pu reactive per pu voltage, >= 0
  double p_measured = 0.0;  // pu
};

/// Grid-forming: holds its bus at a squared-voltage setpoint; both p and q are
/// decision variables inside the rating disk.
struct GridForming {
  double v_set2 = 1.0;  // pu^2
};

/// Generator-style (PV type) bus: dispatches a fixed P and tries to hold a
/// voltage target through an objective penalty; q free within the rating disk.
struct PvTypeBus {
  double v_set2 = 1.0;      // pu^2
  double p_set = 0.0;       // pu
  double penalty_m = 100.0;
};

using DerMode =
    std::variant<GridFollowingQ, GridFollowingP, GridSupporting, GridForming, PvTypeBus>;

struct DerSpec {
  BusId bus;
  double s_rating = 0.0;  // pu apparent power rating
  DerMode mode;
};

/// Short mode tag used in schemas and reports.
std::string mode_name(const DerMode& mode);

/// Throws std::invalid_argument if the spec violates a mode invariant.
void validate_der_spec(const DerSpec& spec);

struct QBounds {
  double q_min;
  double q_max;
};

/// Reactive capability interval of a grid-following inverter at a given real
/// output: q in [-sqrt(S^2 - p^2), +sqrt(S^2 - p^2)].
QBounds gfli_q_bounds(double s_rating, double p_measured);

struct PBounds {
  double p_min;
  double p_max;
};

/// Real-power interval [0, s_rating] for the P-decision grid-following mode
/// (q pinned to zero).
PBounds gfli_p_bounds(double s_rating);

/// Droop reactive output as a function of voltage magnitude:
/// q = q_ref + k_q (v_ref - V).
double droop_q_exact(double v_mag, const GridSupporting& spec);

/// Droop reactive output as a function of squared voltage, obtained by a
/// first-order expansion of V around v_ref:
/// q = q_ref + k_q (v_ref^2 - v2) / (2 v_ref).
double droop_q(double v2, const GridSupporting& spec);

/// Constraint data for a grid-forming DER: a squared-voltage equality and a
/// rating-disk inequality p^2 + q^2 <= radius^2.
struct GfiConstraints {
  double v_set2;
  double disk_radius;
};

GfiConstraints gfi_constraints(const GridForming& spec, double s_rating);

/// Objective penalty for a PV-type bus: M (v2 - v_set2)^2. A linear variant
/// M (v2 - v_set2) is available behind a switch for fidelity experiments.
double pvbus_objective_term(double v2, const PvTypeBus& spec, bool linear = false);

}  // namespace dgopf
