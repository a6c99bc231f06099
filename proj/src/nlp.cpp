#include "dgopf/nlp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace dgopf {

namespace {

Vec clamp_to_box(const Vec& x, const Vec& lb, const Vec& ub) {
  return x.cwiseMax(lb).cwiseMin(ub);
}

struct PointEval {
  double f = 0.0;
  Vec c_eq;
  Vec c_in;
  bool finite = false;
};

PointEval eval_point(const NlpProblem& p, const Vec& x) {
  PointEval e;
  e.f = p.objective(x);
  if (p.m_eq > 0) {
    e.c_eq.resize(p.m_eq);
    p.eq_eval(x, e.c_eq);
  } else {
    e.c_eq.resize(0);
  }
  if (p.m_ineq > 0) {
    e.c_in.resize(p.m_ineq);
    p.ineq_eval(x, e.c_in);
  } else {
    e.c_in.resize(0);
  }
  e.finite = std::isfinite(e.f) && e.c_eq.allFinite() && e.c_in.allFinite();
  return e;
}

double al_value(const PointEval& e, const Vec& lambda, const Vec& mu, double rho) {
  double phi = e.f;
  if (e.c_eq.size() > 0) phi += lambda.dot(e.c_eq) + 0.5 * rho * e.c_eq.squaredNorm();
  for (int i = 0; i < e.c_in.size(); ++i) {
    const double t = std::max(0.0, mu[i] + rho * e.c_in[i]);
    phi += (t * t - mu[i] * mu[i]) / (2.0 * rho);
  }
  return phi;
}

void add_jt_y(const std::vector<SparseRow>& rows, const Vec& y, Vec& out) {
  for (size_t r = 0; r < rows.size(); ++r) {
    const double yr = y[static_cast<int>(r)];
    if (yr == 0.0) continue;
    const SparseRow& row = rows[r];
    for (size_t k = 0; k < row.idx.size(); ++k) out[row.idx[k]] += row.val[k] * yr;
  }
}

void add_scaled_jtj(const std::vector<SparseRow>& rows, const std::vector<char>& mask,
                    double rho, std::vector<Eigen::Triplet<double>>& trips) {
  for (size_t r = 0; r < rows.size(); ++r) {
    if (!mask.empty() && !mask[r]) continue;
    const SparseRow& row = rows[r];
    for (size_t a = 0; a < row.idx.size(); ++a)
      for (size_t b = 0; b < row.idx.size(); ++b)
        trips.emplace_back(row.idx[a], row.idx[b], rho * row.val[a] * row.val[b]);
  }
}

// Finite-difference Hessian of the Lagrangian part for problems that do not
// provide second derivatives (small test problems).
void fd_lag_hessian(const NlpProblem& p, const Vec& x, const Vec& w_eq, const Vec& w_in,
                    std::vector<Eigen::Triplet<double>>& trips) {
  const int n = p.n;
  auto grad_lag = [&](const Vec& xx, Vec& g) {
    g.setZero(n);
    Vec gf(n);
    p.objective_grad(xx, gf);
    g = gf;
    if (p.m_eq > 0) {
      std::vector<SparseRow> J(p.m_eq);
      p.eq_jac(xx, J);
      add_jt_y(J, w_eq, g);
    }
    if (p.m_ineq > 0) {
      std::vector<SparseRow> J(p.m_ineq);
      p.ineq_jac(xx, J);
      add_jt_y(J, w_in, g);
    }
  };
  Eigen::MatrixXd H(n, n);
  Vec gp(n), gm(n), xx = x;
  for (int i = 0; i < n; ++i) {
    const double h = 1e-5 * (1.0 + std::abs(x[i]));
    xx[i] = x[i] + h;
    grad_lag(xx, gp);
    xx[i] = x[i] - h;
    grad_lag(xx, gm);
    xx[i] = x[i];
    H.col(i) = (gp - gm) / (2.0 * h);
  }
  H = 0.5 * (H + H.transpose()).eval();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (H(i, j) != 0.0) trips.emplace_back(i, j, H(i, j));
}

struct InnerResult {
  Vec x;
  PointEval e;
  double pg_norm = kInf;
  int iterations = 0;
  bool stalled = false;
};

// Projected Newton on the box for the augmented Lagrangian subproblem.
InnerResult solve_subproblem(const NlpProblem& p, const Vec& x_start, const Vec& lambda,
                             const Vec& mu, double rho, double omega, int max_iter,
                             bool use_sparse) {
  InnerResult res;
  res.x = clamp_to_box(x_start, p.lb, p.ub);

  Vec g(p.n);
  std::vector<SparseRow> J_eq(p.m_eq), J_in(p.m_ineq);
  std::vector<Eigen::Triplet<double>> trips;

  PointEval e = eval_point(p, res.x);
  if (!e.finite) throw NlpError("solve_nlp: callback returned non-finite value");
  double phi = al_value(e, lambda, mu, rho);

  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it;

    // AL gradient. The multiplier estimates lambda + rho c and
    // max(0, mu + rho c) double as Hessian weights below.
    Vec gf(p.n);
    p.objective_grad(res.x, gf);
    g = gf;
    Vec y_eq, y_in;
    if (p.m_eq > 0) {
      p.eq_jac(res.x, J_eq);
      y_eq = lambda + rho * e.c_eq;
      add_jt_y(J_eq, y_eq, g);
    }
    std::vector<char> act_in;
    if (p.m_ineq > 0) {
      p.ineq_jac(res.x, J_in);
      y_in = (mu + rho * e.c_in).cwiseMax(0.0);
      add_jt_y(J_in, y_in, g);
      act_in.resize(p.m_ineq);
      for (int i = 0; i < p.m_ineq; ++i) act_in[i] = y_in[i] > 0.0 ? 1 : 0;
    }
    if (!g.allFinite()) throw NlpError("solve_nlp: gradient returned non-finite value");

    res.pg_norm = (res.x - clamp_to_box(res.x - g, p.lb, p.ub)).lpNorm<Eigen::Infinity>();
    if (res.pg_norm <= omega) {
      res.e = e;
      return res;
    }

    // Hessian of the AL: Lagrangian curvature plus rho J^T J terms.
    trips.clear();
    if (p.lag_hessian) {
      p.lag_hessian(res.x, 1.0, p.m_eq > 0 ? y_eq : Vec::Zero(0),
                    p.m_ineq > 0 ? y_in : Vec::Zero(0), trips);
    } else {
      fd_lag_hessian(p, res.x, p.m_eq > 0 ? y_eq : Vec::Zero(p.m_eq),
                     p.m_ineq > 0 ? y_in : Vec::Zero(p.m_ineq), trips);
    }
    if (p.m_eq > 0) add_scaled_jtj(J_eq, {}, rho, trips);
    if (p.m_ineq > 0) add_scaled_jtj(J_in, act_in, rho, trips);

    // Free/active split of the box.
    const double eps_act = 1e-12;
    std::vector<int> free_of_full(p.n, -1);
    std::vector<int> free_idx;
    free_idx.reserve(p.n);
    for (int i = 0; i < p.n; ++i) {
      const bool pinned = p.lb[i] == p.ub[i];
      const bool at_lo = res.x[i] <= p.lb[i] + eps_act && g[i] > 0.0;
      const bool at_hi = res.x[i] >= p.ub[i] - eps_act && g[i] < 0.0;
      if (!pinned && !at_lo && !at_hi) {
        free_of_full[i] = static_cast<int>(free_idx.size());
        free_idx.push_back(i);
      }
    }
    const int nf = static_cast<int>(free_idx.size());

    Vec d = Vec::Zero(p.n);
    bool have_newton = false;
    if (nf > 0) {
      Vec g_f(nf);
      for (int k = 0; k < nf; ++k) g_f[k] = g[free_idx[k]];

      // Reduced triplets.
      std::vector<Eigen::Triplet<double>> rtrips;
      rtrips.reserve(trips.size());
      double diag_scale = 0.0;
      for (const auto& t : trips) {
        const int ri = free_of_full[t.row()];
        const int ci = free_of_full[t.col()];
        if (ri >= 0 && ci >= 0) {
          rtrips.emplace_back(ri, ci, t.value());
          if (ri == ci) diag_scale = std::max(diag_scale, std::abs(t.value()));
        }
      }
      const double tau0 = 1e-10 * (1.0 + diag_scale);
      double tau = 0.0;
      for (int attempt = 0; attempt < 40 && !have_newton; ++attempt) {
        Vec d_f;
        bool ok = false;
        if (use_sparse) {
          Eigen::SparseMatrix<double> H(nf, nf);
          H.setFromTriplets(rtrips.begin(), rtrips.end());
          if (tau > 0.0)
            for (int i = 0; i < nf; ++i) H.coeffRef(i, i) += tau;
          Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
          if (ldlt.info() == Eigen::Success) {
            d_f = ldlt.solve(-g_f);
            ok = d_f.allFinite();
          }
        } else {
          Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nf, nf);
          for (const auto& t : rtrips) H(t.row(), t.col()) += t.value();
          if (tau > 0.0) H.diagonal().array() += tau;
          Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
          if (ldlt.info() == Eigen::Success) {
            d_f = ldlt.solve(-g_f);
            ok = d_f.allFinite();
          }
        }
        if (ok && g_f.dot(d_f) < -1e-14 * g_f.norm() * std::max(1.0, d_f.norm())) {
          for (int k = 0; k < nf; ++k) d[free_idx[k]] = d_f[k];
          have_newton = true;
        } else {
          tau = tau == 0.0 ? tau0 : tau * 10.0;
        }
      }
      if (!have_newton) {
        for (int k = 0; k < nf; ++k) d[free_idx[k]] = -g[free_idx[k]];
      }
    } else {
      d = -g;  // everything active: rely on the projection
    }

    // Backtracking Armijo search along the projection arc; a steepest-descent
    // retry covers the rare case where the truncated Newton step fails.
    bool accepted = false;
    for (int pass = 0; pass < 2 && !accepted; ++pass) {
      if (pass == 1) d = -g;
      double alpha = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        Vec xt = clamp_to_box(res.x + alpha * d, p.lb, p.ub);
        Vec step = xt - res.x;
        if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
        PointEval et = eval_point(p, xt);
        if (et.finite) {
          const double phit = al_value(et, lambda, mu, rho);
          const double pred = g.dot(step);
          if (phit <= phi + 1e-4 * std::min(0.0, pred) + 1e-14 * std::abs(phi)) {
            res.x = xt;
            e = et;
            phi = phit;
            accepted = true;
            break;
          }
        }
        alpha *= 0.5;
      }
    }
    if (!accepted) {
      res.e = e;
      res.stalled = true;
      res.iterations = it + 1;
      return res;
    }
  }

  res.e = e;
  res.stalled = false;
  return res;
}

}  // namespace

std::string to_string(NlpStatus s) {
  switch (s) {
    case NlpStatus::optimal: return "optimal";
    case NlpStatus::max_iter: return "max-iter";
    case NlpStatus::infeasible_detected: return "infeasible-detected";
    case NlpStatus::stalled: return "stalled";
  }
  return "unknown";
}

NlpSolution solve_nlp(const NlpProblem& p, const Vec& x0, const NlpOptions& opts) {
  if (p.n <= 0) throw NlpError("solve_nlp: empty problem");
  if (x0.size() != p.n) throw NlpError("solve_nlp: x0 dimension mismatch");
  if (p.lb.size() != p.n || p.ub.size() != p.n) throw NlpError("solve_nlp: bad bounds");

  NlpSolution sol;
  sol.x = clamp_to_box(x0, p.lb, p.ub);
  sol.lambda_eq = opts.lambda0 && opts.lambda0->size() == p.m_eq ? *opts.lambda0
                                                                 : Vec::Zero(p.m_eq);
  sol.mu_ineq = opts.mu0 && opts.mu0->size() == p.m_ineq ? opts.mu0->cwiseMax(0.0)
                                                         : Vec::Zero(p.m_ineq);

  const bool use_sparse = p.n > 250;
  double rho = opts.rho0;
  double omega = std::max(1.0 / rho, 0.1 * opts.tol_stat);
  double eta = std::max(std::pow(rho, -0.1), 10.0 * std::min(opts.tol_eq, opts.tol_ineq));
  const double feas_tol = std::min(opts.tol_eq, opts.tol_ineq);

  double best_viol = kInf;
  int no_progress = 0;

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    sol.outer_iterations = outer + 1;
    const int budget =
        std::min(opts.max_inner_per_outer, opts.max_inner_total - sol.inner_iterations);
    if (budget <= 0) break;

    InnerResult ir =
        solve_subproblem(p, sol.x, sol.lambda_eq, sol.mu_ineq, rho, omega, budget, use_sparse);
    sol.inner_iterations += ir.iterations;
    sol.x = ir.x;

    const double feas_eq =
        p.m_eq > 0 ? ir.e.c_eq.lpNorm<Eigen::Infinity>() : 0.0;
    const double feas_in =
        p.m_ineq > 0 ? ir.e.c_in.cwiseMax(0.0).lpNorm<Eigen::Infinity>() : 0.0;
    const double viol = std::max(feas_eq, feas_in);

    if (opts.verbose)
      std::printf("outer %2d rho %.1e viol %.3e pg %.3e f %.8e\n", outer, rho, viol,
                  ir.pg_norm, ir.e.f);

    if (viol <= std::max(eta, feas_tol)) {
      // First-order multiplier update. The AL gradient at the inner solution
      // equals the Lagrangian gradient at the updated multipliers, so the
      // inner projected-gradient norm is the stationarity residual.
      sol.lambda_eq += rho * ir.e.c_eq;
      sol.mu_ineq = (sol.mu_ineq + rho * ir.e.c_in).cwiseMax(0.0);

      double comp = 0.0;
      for (int i = 0; i < p.m_ineq; ++i)
        comp = std::max(comp, std::abs(sol.mu_ineq[i] * ir.e.c_in[i]));

      sol.kkt.stationarity = ir.pg_norm;
      sol.kkt.feas_eq = feas_eq;
      sol.kkt.feas_ineq = feas_in;
      sol.kkt.complementarity = comp;
      sol.objective = ir.e.f;

      if (feas_eq <= opts.tol_eq && feas_in <= opts.tol_ineq &&
          ir.pg_norm <= opts.tol_stat && comp <= opts.tol_comp && !ir.stalled) {
        sol.status = NlpStatus::optimal;
        return sol;
      }
      eta = std::max(eta / std::pow(rho, 0.9), 0.1 * feas_tol);
      omega = std::max(omega / rho, 0.1 * opts.tol_stat);
    } else {
      rho = std::min(rho * 10.0, opts.rho_max);
      eta = std::max(std::pow(rho, -0.1), 10.0 * feas_tol);
      omega = std::max(1.0 / rho, 0.1 * opts.tol_stat);
    }

    if (viol < 0.5 * best_viol) {
      best_viol = viol;
      no_progress = 0;
    } else if (rho >= opts.rho_max) {
      if (++no_progress >= 3 && viol > 1e3 * feas_tol) {
        sol.status = NlpStatus::infeasible_detected;
        sol.objective = ir.e.f;
        sol.kkt.feas_eq = feas_eq;
        sol.kkt.feas_ineq = feas_in;
        sol.kkt.stationarity = ir.pg_norm;
        return sol;
      }
    }
  }

  // Ran out of outer iterations: report the last iterate honestly.
  PointEval e = eval_point(p, sol.x);
  sol.objective = e.f;
  sol.kkt.feas_eq = p.m_eq > 0 ? e.c_eq.lpNorm<Eigen::Infinity>() : 0.0;
  sol.kkt.feas_ineq = p.m_ineq > 0 ? e.c_in.cwiseMax(0.0).lpNorm<Eigen::Infinity>() : 0.0;
  sol.status = NlpStatus::max_iter;
  return sol;
}

double check_gradients(const NlpProblem& p, const Vec& x, double h) {
  double worst = 0.0;
  auto rel = [](double num, double ana, double scale) {
    return std::abs(num - ana) / std::max(1.0, scale);
  };

  // Objective gradient.
  {
    Vec g(p.n);
    p.objective_grad(x, g);
    const double scale = g.lpNorm<Eigen::Infinity>();
    Vec xx = x;
    for (int i = 0; i < p.n; ++i) {
      xx[i] = x[i] + h;
      const double fp = p.objective(xx);
      xx[i] = x[i] - h;
      const double fm = p.objective(xx);
      xx[i] = x[i];
      worst = std::max(worst, rel((fp - fm) / (2.0 * h), g[i], scale));
    }
  }

  auto check_block = [&](int m, const std::function<void(const Vec&, Vec&)>& eval,
                         const std::function<void(const Vec&, std::vector<SparseRow>&)>& jac) {
    if (m <= 0) return;
    std::vector<SparseRow> rows(m);
    jac(x, rows);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, p.n);
    for (int r = 0; r < m; ++r)
      for (size_t k = 0; k < rows[r].idx.size(); ++k) J(r, rows[r].idx[k]) += rows[r].val[k];

    Vec cp(m), cm(m), xx = x;
    for (int i = 0; i < p.n; ++i) {
      xx[i] = x[i] + h;
      eval(xx, cp);
      xx[i] = x[i] - h;
      eval(xx, cm);
      xx[i] = x[i];
      for (int r = 0; r < m; ++r) {
        const double scale = J.row(r).lpNorm<Eigen::Infinity>();
        worst = std::max(worst, rel((cp[r] - cm[r]) / (2.0 * h), J(r, i), scale));
      }
    }
  };
  check_block(p.m_eq, p.eq_eval, p.eq_jac);
  check_block(p.m_ineq, p.ineq_eval, p.ineq_jac);
  return worst;
}

}  // namespace dgopf
