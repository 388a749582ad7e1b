#include "opvfem/linsolve.hpp"

#include "opvfem/errors.hpp"

#include <cmath>
#include <iostream>
#include <vector>

namespace opvfem {

namespace {

class IdentityPrecond final : public Preconditioner {
 public:
  void apply(const Eigen::VectorXd& r, Eigen::VectorXd& z) const override { z = r; }
};

class JacobiPrecond final : public Preconditioner {
 public:
  explicit JacobiPrecond(const SpMat& A) : inv_diag_(A.rows()) {
    inv_diag_.setZero();
    for (int i = 0; i < A.outerSize(); ++i)
      for (SpMat::InnerIterator it(A, i); it; ++it)
        if (it.col() == i) inv_diag_[i] = it.value();
    for (long i = 0; i < inv_diag_.size(); ++i) {
      if (inv_diag_[i] == 0.0)
        throw solver_error("jacobi preconditioner: zero diagonal at row " + std::to_string(i));
      inv_diag_[i] = 1.0 / inv_diag_[i];
    }
  }
  void apply(const Eigen::VectorXd& r, Eigen::VectorXd& z) const override {
    z = inv_diag_.cwiseProduct(r);
  }

 private:
  Eigen::VectorXd inv_diag_;
};

class Ilu0Precond final : public Preconditioner {
 public:
  explicit Ilu0Precond(const SpMat& A) : lu_(A), diag_slot_(A.rows(), -1) {
    const int n = static_cast<int>(lu_.rows());
    const int* rowptr = lu_.outerIndexPtr();
    const int* col = lu_.innerIndexPtr();
    double* val = lu_.valuePtr();

    for (int i = 0; i < n; ++i)
      for (int s = rowptr[i]; s < rowptr[i + 1]; ++s)
        if (col[s] == i) diag_slot_[static_cast<std::size_t>(i)] = s;

    std::vector<int> slot_of_col(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
      for (int s = rowptr[i]; s < rowptr[i + 1]; ++s) slot_of_col[static_cast<std::size_t>(col[s])] = s;
      for (int s = rowptr[i]; s < rowptr[i + 1] && col[s] < i; ++s) {
        const int k = col[s];
        const int dk = diag_slot_[static_cast<std::size_t>(k)];
        if (dk < 0 || val[dk] == 0.0)
          throw solver_error("ilu0: zero pivot at row " + std::to_string(k));
        const double lik = val[s] / val[dk];
        val[s] = lik;
        for (int t = dk + 1; t < rowptr[k + 1]; ++t) {
          const int slot = slot_of_col[static_cast<std::size_t>(col[t])];
          if (slot >= 0) val[slot] -= lik * val[t];  // discard fill outside the pattern
        }
      }
      for (int s = rowptr[i]; s < rowptr[i + 1]; ++s) slot_of_col[static_cast<std::size_t>(col[s])] = -1;
      const int di = diag_slot_[static_cast<std::size_t>(i)];
      if (di < 0 || val[di] == 0.0)
        throw solver_error("ilu0: zero pivot at row " + std::to_string(i));
    }
  }

  void apply(const Eigen::VectorXd& r, Eigen::VectorXd& z) const override {
    const int n = static_cast<int>(lu_.rows());
    const int* rowptr = lu_.outerIndexPtr();
    const int* col = lu_.innerIndexPtr();
    const double* val = lu_.valuePtr();
    z.resize(n);
    // L y = r with unit lower part
    for (int i = 0; i < n; ++i) {
      double s = r[i];
      for (int t = rowptr[i]; t < rowptr[i + 1] && col[t] < i; ++t) s -= val[t] * z[col[t]];
      z[i] = s;
    }
    // U z = y
    for (int i = n - 1; i >= 0; --i) {
      const int di = diag_slot_[static_cast<std::size_t>(i)];
      double s = z[i];
      for (int t = di + 1; t < rowptr[i + 1]; ++t) s -= val[t] * z[col[t]];
      z[i] = s / val[di];
    }
  }

 private:
  SpMat lu_;
  std::vector<int> diag_slot_;
};

}  // namespace

std::unique_ptr<Preconditioner> build_preconditioner(const SpMat& A, const PreconditionerSpec& spec) {
  if (A.rows() != A.cols()) throw dimension_error("preconditioner: matrix must be square");
  switch (spec.kind) {
    case PrecondKind::None:
      return std::make_unique<IdentityPrecond>();
    case PrecondKind::Jacobi:
      return std::make_unique<JacobiPrecond>(A);
    case PrecondKind::Ilu0:
      return std::make_unique<Ilu0Precond>(A);
    case PrecondKind::Amg: {
      static bool warned = false;
      if (!warned) {
        std::cerr << "[opvfem] amg preconditioner tier not built; falling back to ilu0\n";
        warned = true;
      }
      return std::make_unique<Ilu0Precond>(A);
    }
  }
  throw solver_error("unknown preconditioner kind");
}

LinearSolveReport gmres_solve(const SpMat& A, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                              const Preconditioner& precond, const LinearSolverConfig& cfg) {
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw dimension_error("gmres: dimension mismatch");
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0) || cfg.restart < 1)
    throw config_error("gmres: tolerances must be positive and restart >= 1");
  const int n = static_cast<int>(A.rows());
  if (x.size() != n) x = Eigen::VectorXd::Zero(n);

  LinearSolveReport rep;
  const double norm_b = b.norm();
  Eigen::VectorXd r = b - A * x;
  // Warm starts target rtol*||r0||: each solve then resolves its own
  // increment even when ||r0|| << ||b||, which the steady-state detection
  // in the time stepper relies on.
  const double target = std::max(cfg.atol, cfg.rtol * std::min(norm_b, r.norm()));

  const int m = cfg.restart;
  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd cs(m), sn(m), g(m + 1);
  Eigen::VectorXd w(n), z(n);

  double prev_cycle_res = std::numeric_limits<double>::infinity();
  while (rep.iterations < cfg.max_iters) {
    double beta = r.norm();
    if (beta <= target) {
      rep.converged = true;
      break;
    }
    V.col(0) = r / beta;
    g.setZero();
    g[0] = beta;

    int j = 0;
    bool breakdown = false;
    for (; j < m && rep.iterations < cfg.max_iters; ++j) {
      precond.apply(V.col(j), z);
      w = A * z;
      for (int i = 0; i <= j; ++i) {
        H(i, j) = w.dot(V.col(i));
        w -= H(i, j) * V.col(i);
      }
      const double hnext = w.norm();
      ++rep.iterations;

      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      const double denom = std::hypot(H(j, j), hnext);
      if (denom <= 1e-300) {
        breakdown = true;  // zero Arnoldi column, the operator is singular here
        break;
      }
      cs[j] = H(j, j) / denom;
      sn[j] = hnext / denom;
      H(j, j) = denom;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];

      if (hnext <= 1e-300) {
        breakdown = true;  // happy breakdown: the Krylov space is invariant
        ++j;
        break;
      }
      V.col(j + 1) = w / hnext;
      if (std::abs(g[j + 1]) <= target) {
        ++j;
        break;
      }
    }

    if (j > 0) {
      Eigen::VectorXd y = H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
      precond.apply(V.leftCols(j) * y, z);
      x += z;
    }
    r = b - A * x;
    const double res = r.norm();
    if (res <= target) {
      rep.converged = true;
      break;
    }
    if (breakdown || res >= 0.999 * prev_cycle_res) break;  // no further progress possible
    prev_cycle_res = res;
  }

  rep.residual = (b - A * x).norm();
  rep.converged = rep.residual <= target;
  return rep;
}

LinearSolveReport gmres_solve(const SpMat& A, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                              const PreconditionerSpec& spec, const LinearSolverConfig& cfg) {
  auto P = build_preconditioner(A, spec);
  return gmres_solve(A, b, x, *P, cfg);
}

}  // namespace opvfem
