#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string_view>

namespace mfmpc {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

/**
 * Convex quadratic program in standard form
 *
 *   minimize    1/2 z'Pz + q'z + constant
 *   subject to  Az = b,  Gz <= h.
 *
 * P must be symmetric positive semidefinite and stored in full (both
 * triangles). Rows of G with an infinite bound must not be emitted.
 */
struct QuadraticProgram {
  SparseMatrix P;
  Eigen::VectorXd q;
  SparseMatrix A;
  Eigen::VectorXd b;
  SparseMatrix G;
  Eigen::VectorXd h;
  double constant = 0.0;

  [[nodiscard]] Eigen::Index num_variables() const { return q.size(); }
  [[nodiscard]] Eigen::Index num_equalities() const { return b.size(); }
  [[nodiscard]] Eigen::Index num_inequalities() const { return h.size(); }

  /// Objective value at z, including the constant offset.
  [[nodiscard]] double objective(const Eigen::VectorXd& z) const;

  /// Throws std::invalid_argument when dimensions disagree.
  void check_dimensions() const;
};

enum class SolveStatus { optimal, infeasible, solver_failure };

[[nodiscard]] std::string_view to_string(SolveStatus status);

struct SolverSettings {
  /// Target accuracy of the interior-point iteration (absolute and relative).
  double eps_abs = 1e-9;
  double eps_rel = 1e-10;
  /// Residual level that still certifies a solution when the iteration stalls.
  double eps_accept = 1e-6;
  /// Threshold on the normalized Farkas certificate for primal infeasibility.
  double eps_infeasible = 1e-8;
  int max_iterations = 200;
};

/// Primal-dual point returned by the solver. `y` are equality multipliers and
/// `lambda >= 0` inequality multipliers, with the sign convention
///   Pz + q + A'y + G'lambda = 0.
struct QpSolution {
  SolveStatus status = SolveStatus::solver_failure;
  Eigen::VectorXd z;
  Eigen::VectorXd y;
  Eigen::VectorXd lambda;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double duality_gap = 0.0;
};

/// KKT residuals of a primal-dual point, computed directly from the problem
/// data. Used by the solver for termination and by callers for certification.
struct KktResiduals {
  double equality = 0.0;       // ||Az - b||_inf
  double inequality = 0.0;     // max(Gz - h, 0)
  double stationarity = 0.0;   // ||Pz + q + A'y + G'lambda||_inf
  double dual_sign = 0.0;      // max(-lambda, 0)
  double complementarity = 0.0;  // max_i |lambda_i (h - Gz)_i|
};

[[nodiscard]] KktResiduals kkt_residuals(const QuadraticProgram& qp,
                                         const Eigen::VectorXd& z,
                                         const Eigen::VectorXd& y,
                                         const Eigen::VectorXd& lambda);

/// Solves `qp` with a sparse primal-dual interior-point method (Mehrotra
/// predictor-corrector on the regularized quasidefinite KKT system). The
/// workspace is local to the call, so concurrent solves are safe.
[[nodiscard]] QpSolution solve_qp(const QuadraticProgram& qp,
                                  const SolverSettings& settings = {});

}  // namespace mfmpc
