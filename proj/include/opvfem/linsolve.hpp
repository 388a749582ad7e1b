#pragma once

#include "opvfem/sparse.hpp"

#include <memory>

namespace opvfem {

struct LinearSolverConfig {
  double rtol = 1e-6;
  double atol = 1e-10;
  int max_iters = 500;
  int restart = 200;
};

enum class PrecondKind { None, Jacobi, Ilu0, Amg };

struct PreconditionerSpec {
  PrecondKind kind = PrecondKind::Ilu0;
  // retained for configs that request amg; the build falls back to ilu0
  double amg_strength = 0.25;
  int amg_max_levels = 10;
};

struct LinearSolveReport {
  int iterations = 0;
  double residual = 0.0;  // ||b - A x||, recomputed explicitly on exit
  bool converged = false;
};

class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  virtual void apply(const Eigen::VectorXd& r, Eigen::VectorXd& z) const = 0;
};

/// jacobi: inverse diagonal; ilu0: zero-fill incomplete LU on the matrix
/// pattern. A zero pivot is a construction error. amg falls back to ilu0
/// with a one-time logged notice.
std::unique_ptr<Preconditioner> build_preconditioner(const SpMat& A, const PreconditionerSpec& spec);

/// Right-preconditioned restarted GMRES. x holds the initial guess on entry
/// and the best iterate on exit. Converged means the recomputed residual
/// satisfies ||b - A x|| <= max(rtol*||b||, atol); a warm start additionally
/// tightens the target to rtol*||r0|| so near-converged solves keep resolving
/// their own increments.
LinearSolveReport gmres_solve(const SpMat& A, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                              const Preconditioner& precond, const LinearSolverConfig& cfg);

LinearSolveReport gmres_solve(const SpMat& A, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                              const PreconditionerSpec& spec, const LinearSolverConfig& cfg);

}  // namespace opvfem
