#include "dgopf/powerflow.hpp"

#include <algorithm>
#include <cmath>

namespace dgopf {

namespace {

// Net injection (generation positive) at a bus for given dispatch, droop
// resolved against v2 when present.
void der_injection(const Dispatch& dispatch, const BusId& bus, double v2, double& p, double& q) {
  p = 0.0;
  q = 0.0;
  auto it = dispatch.find(bus);
  if (it == dispatch.end()) return;
  p = it->second.p;
  q = it->second.droop ? droop_q(v2, *it->second.droop) : it->second.q;
}

}  // namespace

PowerFlowState solve_powerflow(const Feeder& f, const Dispatch& dispatch, double v_sub2,
                               const PowerFlowOptions& opts) {
  const std::vector<int> order = topological_order(f);
  const int nb = static_cast<int>(f.buses.size());
  const int nl = static_cast<int>(f.lines.size());

  PowerFlowState s;
  s.v2.assign(nb, v_sub2);  // flat start
  s.p_flow.assign(nl, 0.0);
  s.q_flow.assign(nl, 0.0);
  s.l.assign(nl, 0.0);

  for (int it = 0; it < opts.max_iter; ++it) {
    double delta = 0.0;

    // Backward: aggregate flows leaf-to-root with the current loss estimates.
    for (int oi = nb - 1; oi >= 0; --oi) {
      const int j = order[oi];
      const int pe = f.parent_line[j];
      if (pe < 0) continue;
      const Line& ln = f.lines[pe];
      double p_d, q_d;
      der_injection(dispatch, f.buses[j].id, s.v2[j], p_d, q_d);
      double p = f.buses[j].p_load - p_d + ln.r * s.l[pe];
      double q = f.buses[j].q_load - f.buses[j].q_cap - q_d + ln.x * s.l[pe];
      for (int ce : f.child_lines[j]) {
        p += s.p_flow[ce];
        q += s.q_flow[ce];
      }
      delta = std::max({delta, std::abs(p - s.p_flow[pe]), std::abs(q - s.q_flow[pe])});
      s.p_flow[pe] = p;
      s.q_flow[pe] = q;
    }

    // Forward: propagate squared voltages root-first, refresh squared
    // currents from the sending-end voltage.
    for (int oi = 0; oi < nb; ++oi) {
      const int j = order[oi];
      if (f.parent_line[j] < 0) {
        delta = std::max(delta, std::abs(s.v2[j] - v_sub2));
        s.v2[j] = v_sub2;
        continue;
      }
      const int pe = f.parent_line[j];
      const Line& ln = f.lines[pe];
      const int i = f.index_of(ln.from_bus);
      const double vi = s.v2[i];
      if (!(vi > 0.0))
        throw PowerFlowError("voltage collapse: v2 <= 0 at bus '" + f.buses[i].id + "'");
      const double l_new = (s.p_flow[pe] * s.p_flow[pe] + s.q_flow[pe] * s.q_flow[pe]) / vi;
      const double v_new = vi - 2.0 * (ln.r * s.p_flow[pe] + ln.x * s.q_flow[pe]) +
                           (ln.r * ln.r + ln.x * ln.x) * l_new;
      delta = std::max({delta, std::abs(l_new - s.l[pe]), std::abs(v_new - s.v2[j])});
      s.l[pe] = l_new;
      s.v2[j] = v_new;
      if (!(s.v2[j] > 0.0))
        throw PowerFlowError("voltage collapse: v2 <= 0 at bus '" + f.buses[j].id + "'");
    }

    s.iterations = it + 1;
    if (delta < opts.tol) {
      s.losses = 0.0;
      for (int e = 0; e < nl; ++e) s.losses += f.lines[e].r * s.l[e];
      s.residual = residuals(f, s, dispatch);
      return s;
    }
  }
  throw PowerFlowError("power flow did not converge within " + std::to_string(opts.max_iter) +
                       " iterations");
}

std::array<double, 4> residuals(const Feeder& f, const PowerFlowState& s,
                                const Dispatch& dispatch) {
  std::array<double, 4> res{0.0, 0.0, 0.0, 0.0};
  for (int e = 0; e < static_cast<int>(f.lines.size()); ++e) {
    const Line& ln = f.lines[e];
    const int i = f.index_of(ln.from_bus);
    const int j = f.index_of(ln.to_bus);
    double p_d, q_d;
    der_injection(dispatch, f.buses[j].id, s.v2[j], p_d, q_d);

    double sum_p = 0.0, sum_q = 0.0;
    for (int ce : f.child_lines[j]) {
      sum_p += s.p_flow[ce];
      sum_q += s.q_flow[ce];
    }
    const double r1a =
        s.p_flow[e] - ln.r * s.l[e] - f.buses[j].p_load + p_d - sum_p;
    const double r1b = s.q_flow[e] - ln.x * s.l[e] - f.buses[j].q_load + f.buses[j].q_cap +
                       q_d - sum_q;
    const double r1c = s.v2[j] - s.v2[i] + 2.0 * (ln.r * s.p_flow[e] + ln.x * s.q_flow[e]) -
                       (ln.r * ln.r + ln.x * ln.x) * s.l[e];
    const double r1d = s.v2[i] * s.l[e] - s.p_flow[e] * s.p_flow[e] - s.q_flow[e] * s.q_flow[e];
    res[0] = std::max(res[0], std::abs(r1a));
    res[1] = std::max(res[1], std::abs(r1b));
    res[2] = std::max(res[2], std::abs(r1c));
    res[3] = std::max(res[3], std::abs(r1d));
  }
  return res;
}

ValidationReport validate_dispatch(const Feeder& f, const std::vector<DerSpec>& specs,
                                   const OpfSolution& sol, double tol) {
  ValidationReport rep;

  Dispatch dispatch;
  std::map<BusId, double> der_p, der_q;
  for (const auto& d : sol.ders) {
    dispatch[d.bus] = DispatchEntry{d.p, d.q, std::nullopt};
    der_p[d.bus] = d.p;
    der_q[d.bus] = d.q;
  }

  PowerFlowState pf;
  try {
    pf = solve_powerflow(f, dispatch, f.v_sub2);
  } catch (const PowerFlowError& e) {
    rep.pf_converged = false;
    rep.detail = e.what();
    rep.passed = false;
    return rep;
  }
  rep.pf_converged = true;

  for (int i = 0; i < static_cast<int>(f.buses.size()); ++i) {
    auto it = sol.v2.find(f.buses[i].id);
    if (it == sol.v2.end()) continue;
    rep.v_mismatch = std::max(rep.v_mismatch, std::abs(it->second - pf.v2[i]));
  }

  for (const auto& spec : specs) {
    const int bi = f.index_of(spec.bus);
    if (const auto* gs = std::get_if<GridSupporting>(&spec.mode)) {
      const double want = droop_q(pf.v2[bi], *gs);
      rep.droop_mismatch = std::max(rep.droop_mismatch, std::abs(der_q[spec.bus] - want));
    } else if (const auto* gf = std::get_if<GridForming>(&spec.mode)) {
      rep.gfi_v_mismatch = std::max(rep.gfi_v_mismatch, std::abs(pf.v2[bi] - gf->v_set2));
      const double s2 = der_p[spec.bus] * der_p[spec.bus] + der_q[spec.bus] * der_q[spec.bus];
      rep.disk_violation =
          std::max(rep.disk_violation, std::max(0.0, s2 - spec.s_rating * spec.s_rating));
    }
  }

  // Operating limits (7c)-(7d) on the re-solved state, with a small slack so
  // constraints active at the optimum do not trip on solver tolerance.
  const double slack = 10.0 * tol;
  for (int i = 0; i < static_cast<int>(f.buses.size()); ++i) {
    if (f.parent_line[i] < 0) continue;  // substation voltage is a boundary condition
    if (pf.v2[i] < f.buses[i].v_min2 - slack || pf.v2[i] > f.buses[i].v_max2 + slack)
      rep.limit_violations.push_back("v2[" + f.buses[i].id + "] outside bounds");
  }
  for (int e = 0; e < static_cast<int>(f.lines.size()); ++e) {
    if (pf.l[e] > f.lines[e].i_rated2 + slack)
      rep.limit_violations.push_back("l[" + f.lines[e].from_bus + "->" + f.lines[e].to_bus +
                                     "] above thermal limit");
  }

  rep.passed = rep.pf_converged && rep.v_mismatch <= tol && rep.droop_mismatch <= tol &&
               rep.gfi_v_mismatch <= tol && rep.disk_violation <= tol &&
               rep.limit_violations.empty();
  return rep;
}

}  // namespace dgopf
