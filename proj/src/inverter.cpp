#include "dgopf/inverter.hpp"

#include <cmath>

namespace dgopf {

std::string mode_name(const DerMode& mode) {
  struct Visitor {
    std::string operator()(const GridFollowingQ&) const { return "gfli_q"; }
    std::string operator()(const GridFollowingP&) const { return "gfli_p"; }
    std::string operator()(const GridSupporting&) const { return "gsi"; }
    std::string operator()(const GridForming&) const { return "gfi"; }
    std::string operator()(const PvTypeBus&) const { return "pv_bus"; }
  };
  return std::visit(Visitor{}, mode);
}

void validate_der_spec(const DerSpec& spec) {
  if (!(spec.s_rating > 0.0))
    throw std::invalid_argument("DER at bus " + spec.bus + ": s_rating must be > 0");
  if (const auto* gq = std::get_if<GridFollowingQ>(&spec.mode)) {
    if (gq->p_measured < 0.0 || gq->p_measured > spec.s_rating)
      throw std::invalid_argument("DER at bus " + spec.bus +
                                  ": p_measured outside [0, s_rating]");
  } else if (const auto* gs = std::get_if<GridSupporting>(&spec.mode)) {
    if (gs->v_ref < 0.95 || gs->v_ref > 1.05)
      throw std::invalid_argument("DER at bus " + spec.bus + ": v_ref outside [0.95, 1.05]");
    if (gs->k_q < 0.0)
      throw std::invalid_argument("DER at bus " + spec.bus + ": k_q must be >= 0");
    if (gs->p_measured < 0.0 || gs->p_measured > spec.s_rating)
      throw std::invalid_argument("DER at bus " + spec.bus +
                                  ": p_measured outside [0, s_rating]");
  } else if (const auto* pv = std::get_if<PvTypeBus>(&spec.mode)) {
    if (pv->p_set < 0.0 || pv->p_set > spec.s_rating)
      throw std::invalid_argument("DER at bus " + spec.bus + ": p_set outside [0, s_rating]");
    if (pv->penalty_m < 0.0)
      throw std::invalid_argument("DER at bus " + spec.bus + ": penalty_m must be >= 0");
  }
}

QBounds gfli_q_bounds(double s_rating, double p_measured) {
  if (p_measured < 0.0 || p_measured > s_rating)
    throw std::invalid_argument("gfli_q_bounds: p_measured outside [0, s_rating]");
  const double q_max = std::sqrt(s_rating * s_rating - p_measured * p_measured);
  return {-q_max, q_max};
}

PBounds gfli_p_bounds(double s_rating) {
  if (!(s_rating > 0.0)) throw std::invalid_argument("gfli_p_bounds: s_rating must be > 0");
  return {0.0, s_rating};
}

double droop_q_exact(double v_mag, const GridSupporting& spec) {
  return spec.q_ref + spec.k_q * (spec.v_ref - v_mag);
}

double droop_q(double v2, const GridSupporting& spec) {
  return spec.q_ref + spec.k_q * (spec.v_ref * spec.v_ref - v2) / (2.0 * spec.v_ref);
}

GfiConstraints gfi_constraints(const GridForming& spec, double s_rating) {
  return {spec.v_set2, s_rating};
}

double pvbus_objective_term(double v2, const PvTypeBus& spec, bool linear) {
  const double dev = v2 - spec.v_set2;
  return linear ? spec.penalty_m * dev : spec.penalty_m * dev * dev;
}

}  // namespace dgopf
