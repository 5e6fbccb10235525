#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <iosfwd>
#include <string>
#include <vector>

namespace fleetrl {

/// Structured convex QP:
///   minimize    1/2 x' H x + g' x
///   subject to  A x = b,  C x <= d.
/// H must be symmetric positive semidefinite.
struct QpProblem {
  Eigen::SparseMatrix<double> H;
  Eigen::VectorXd g;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  Eigen::SparseMatrix<double> C;
  Eigen::VectorXd d;

  /// Optional tags used by diagnostics and dumps.
  std::vector<std::string> var_names;
  std::vector<std::string> eq_names;
  std::vector<std::string> ineq_names;

  Eigen::Index num_vars() const { return g.size(); }
  Eigen::Index num_eq() const { return b.size(); }
  Eigen::Index num_ineq() const { return d.size(); }

  /// Dense construction helper for tests and small problems.
  static QpProblem from_dense(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                              const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                              const Eigen::MatrixXd& C, const Eigen::VectorXd& d);

  /// Throws std::invalid_argument on dimension mismatch or an asymmetric H.
  void validate() const;
};

enum class QpStatus { solved, max_iter, infeasible, non_psd };

const char* to_string(QpStatus status);

/// Primal-dual solution. For status == solved the KKT conditions hold within
/// the solve tolerance: stationarity, Ax = b, Cx <= d, mu >= 0, and
/// complementarity |mu_i (Cx - d)_i| small.
struct QpSolution {
  Eigen::VectorXd x;       ///< primal optimum
  Eigen::VectorXd lambda;  ///< equality multipliers
  Eigen::VectorXd mu;      ///< inequality multipliers, >= 0
  std::vector<int> active_set;  ///< inequalities with slack <= act_tol
  QpStatus status = QpStatus::max_iter;
  double kkt_residual_norm = 0.0;  ///< inf-norm of the stacked KKT residual
  int iterations = 0;
  bool polished = false;

  double objective(const QpProblem& p) const {
    return 0.5 * x.dot(p.H.selfadjointView<Eigen::Lower>() * x) + p.g.dot(x);
  }
};

struct QpOptions {
  double tol = 1e-8;        ///< termination tolerance on all KKT norms
  int max_iter = 100;
  double reg = 1e-9;        ///< Tikhonov term added to H (strict convexification)
  double act_tol = 1e-7;    ///< slack threshold for active-set reporting
  bool polish = true;       ///< Newton refinement on the detected active set
  double div_tol = 1e10;    ///< dual magnitude treated as an infeasibility certificate
};

/// Primal-dual interior point with Mehrotra predictor-corrector, followed by
/// an optional active-set polish. Deterministic: identical inputs give
/// identical outputs.
QpSolution solve(const QpProblem& problem, const QpOptions& opts = {});

/// Stacked KKT residual at a primal-dual point, in the order
/// [grad_x L; Ax - b; diag(mu)(Cx - d)] with
/// L = 1/2 x'Hx + g'x + lambda'(Ax - b) + mu'(Cx - d).
Eigen::VectorXd kkt_residual(const QpProblem& problem, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& lambda,
                             const Eigen::VectorXd& mu);

/// Jacobian of the stacked KKT residual with respect to (x, lambda, mu),
/// evaluated at the given point. `reg` must match the Tikhonov term the
/// solution was computed with so implicit differentiation sees the exact
/// problem that was solved.
Eigen::SparseMatrix<double> kkt_jacobian(const QpProblem& problem,
                                         const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& mu,
                                         double reg = 1e-9);

/// Writes (H, g, A, b, C, d) in a line-oriented sparse triplet format:
///   qpdump 1
///   dims <nv> <ne> <ni>
///   H <nnz> followed by "<row> <col> <value>" lines (lower triangle)
///   g / b / d as "<index> <value>" lines after a "<name> <count>" header
///   A, C like H.
void write_problem(std::ostream& out, const QpProblem& problem);

}  // namespace fleetrl
