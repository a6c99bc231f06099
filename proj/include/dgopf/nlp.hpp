// Generic smooth constrained nonlinear program and its solver: an augmented
// Lagrangian outer loop with projected-Newton inner solves on the bound box.
#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgopf {

using Vec = Eigen::VectorXd;

struct NlpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One sparse Jacobian row: column indices and values.
struct SparseRow {
  std::vector<int> idx;
  std::vector<double> val;

  void clear() {
    idx.clear();
    val.clear();
  }
  void add(int i, double v) {
    idx.push_back(i);
    val.push_back(v);
  }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

/// min f(x) s.t. c_eq(x) = 0, c_ineq(x) <= 0, lb <= x <= ub.
/// Callbacks must be defined and finite on the box. lag_hessian is optional;
/// when absent the solver falls back to a finite-difference Hessian of the
/// Lagrangian, which is fine for small problems.
struct NlpProblem {
  int n = 0;
  Vec lb, ub;
  std::vector<std::string> var_names;

  std::function<double(const Vec&)> objective;
  std::function<void(const Vec&, Vec&)> objective_grad;

  int m_eq = 0;
  std::function<void(const Vec&, Vec&)> eq_eval;
  std::function<void(const Vec&, std::vector<SparseRow>&)> eq_jac;
  std::vector<std::string> eq_names;

  int m_ineq = 0;
  std::function<void(const Vec&, Vec&)> ineq_eval;
  std::function<void(const Vec&, std::vector<SparseRow>&)> ineq_jac;
  std::vector<std::string> ineq_names;

  /// Adds sigma * hess(f) + sum_i w_eq[i] hess(c_eq_i) + sum_i w_in[i]
  /// hess(c_ineq_i) to the triplet list (lower+upper or full, symmetric).
  std::function<void(const Vec&, double, const Vec&, const Vec&,
                     std::vector<Eigen::Triplet<double>>&)>
      lag_hessian;
};

struct KktResiduals {
  double stationarity = kInf;   // projected-gradient norm of the Lagrangian
  double feas_eq = kInf;        // ||c_eq||_inf
  double feas_ineq = kInf;      // ||max(0, c_ineq)||_inf
  double complementarity = kInf;  // max_i |mu_i * c_ineq_i|
};

enum class NlpStatus { optimal, max_iter, infeasible_detected, stalled };

std::string to_string(NlpStatus s);

struct NlpSolution {
  Vec x;
  Vec lambda_eq;
  Vec mu_ineq;
  double objective = 0.0;
  KktResiduals kkt;
  int inner_iterations = 0;
  int outer_iterations = 0;
  NlpStatus status = NlpStatus::max_iter;
};

struct NlpOptions {
  double tol_stat = 1e-6;
  double tol_eq = 1e-9;
  double tol_ineq = 1e-9;
  double tol_comp = 1e-6;
  double rho0 = 10.0;
  double rho_max = 1e12;
  int max_outer = 80;
  int max_inner_total = 50000;
  int max_inner_per_outer = 400;
  bool verbose = false;
  // Warm starts for repeated solves of the same problem family.
  std::optional<Vec> lambda0;
  std::optional<Vec> mu0;
};

/// Deterministic given identical problem, start and options.
NlpSolution solve_nlp(const NlpProblem& p, const Vec& x0, const NlpOptions& opts = {});

/// Max relative error of the objective gradient and all constraint Jacobian
/// rows against central differences with step h.
double check_gradients(const NlpProblem& p, const Vec& x, double h);

}  // namespace dgopf
