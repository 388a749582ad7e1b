#include "opvfem/assembly.hpp"

#include "opvfem/errors.hpp"

#include <cmath>

namespace opvfem {

namespace {

void check_nodal(const Mesh& mesh, const Eigen::VectorXd& v, const char* what) {
  if (v.size() != mesh.num_nodes())
    throw dimension_error(std::string(what) + ": nodal field size does not match mesh");
}

}  // namespace

SpMat assemble_mass(const Mesh& mesh) {
  const int d = mesh.dim;
  const double denom = (d + 1) * (d + 2);
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(mesh.num_cells()) * (d + 1) * (d + 1));
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double s = mesh.cell_volumes[c] / denom;
    for (int i = 0; i <= d; ++i)
      for (int j = 0; j <= d; ++j)
        trip.emplace_back(mesh.cells(c, i), mesh.cells(c, j), s * (i == j ? 2.0 : 1.0));
  }
  SpMat M(mesh.num_nodes(), mesh.num_nodes());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

SpMat assemble_stiffness(const Mesh& mesh, double coeff) {
  if (!(coeff > 0.0)) throw config_error("stiffness coefficient must be positive");
  return assemble_stiffness(mesh, Eigen::VectorXd::Constant(mesh.num_nodes(), coeff));
}

SpMat assemble_stiffness(const Mesh& mesh, const Eigen::VectorXd& nodal_coeff) {
  check_nodal(mesh, nodal_coeff, "assemble_stiffness");
  const int d = mesh.dim;
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(mesh.num_cells()) * (d + 1) * (d + 1));
  for (int c = 0; c < mesh.num_cells(); ++c) {
    double cbar = 0.0;
    for (int i = 0; i <= d; ++i) cbar += nodal_coeff[mesh.cells(c, i)];
    cbar /= (d + 1);
    const double s = cbar * mesh.cell_volumes[c];
    for (int i = 0; i <= d; ++i) {
      const auto gi = mesh.cell_grads.block(c, i * d, 1, d);
      for (int j = 0; j <= d; ++j) {
        const auto gj = mesh.cell_grads.block(c, j * d, 1, d);
        trip.emplace_back(mesh.cells(c, i), mesh.cells(c, j), s * gi.cwiseProduct(gj).sum());
      }
    }
  }
  SpMat K(mesh.num_nodes(), mesh.num_nodes());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

SpMat assemble_convection(const Mesh& mesh, const Eigen::MatrixXd& drift) {
  const int d = mesh.dim;
  if (drift.rows() != mesh.num_cells() || drift.cols() != d)
    throw dimension_error("assemble_convection: drift must be n_cells x dim");
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(mesh.num_cells()) * (d + 1) * (d + 1));
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double zeta_int = mesh.cell_volumes[c] / (d + 1);  // int_K zeta_i, any i
    for (int j = 0; j <= d; ++j) {
      const auto gj = mesh.cell_grads.block(c, j * d, 1, d);
      const double dg = drift.row(c).cwiseProduct(gj).sum();
      for (int i = 0; i <= d; ++i)
        trip.emplace_back(mesh.cells(c, i), mesh.cells(c, j), zeta_int * dg);
    }
  }
  SpMat C(mesh.num_nodes(), mesh.num_nodes());
  C.setFromTriplets(trip.begin(), trip.end());
  return C;
}

SpMat assemble_weighted_mass(const Mesh& mesh, const Eigen::VectorXd& weight) {
  check_nodal(mesh, weight, "assemble_weighted_mass");
  const int d = mesh.dim;
  // closed forms of int_K zeta_k zeta_i zeta_j:
  //   2D: diag (2 w_i + S)/30, off-diag (w_i + w_j + S)/60, S = sum of w on K
  //   3D: diag (2 w_i + S)/60, off-diag (w_i + w_j + S)/120
  const double diag_denom = (d == 2) ? 30.0 : 60.0;
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(mesh.num_cells()) * (d + 1) * (d + 1));
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double vol = mesh.cell_volumes[c];
    double S = 0.0;
    for (int i = 0; i <= d; ++i) S += weight[mesh.cells(c, i)];
    for (int i = 0; i <= d; ++i) {
      const double wi = weight[mesh.cells(c, i)];
      for (int j = 0; j <= d; ++j) {
        const double wj = weight[mesh.cells(c, j)];
        const double v = (i == j) ? vol * (2.0 * wi + S) / diag_denom
                                  : vol * (wi + wj + S) / (2.0 * diag_denom);
        trip.emplace_back(mesh.cells(c, i), mesh.cells(c, j), v);
      }
    }
  }
  SpMat W(mesh.num_nodes(), mesh.num_nodes());
  W.setFromTriplets(trip.begin(), trip.end());
  return W;
}

Eigen::VectorXd assemble_load(const Mesh& mesh, const Eigen::VectorXd& f) {
  check_nodal(mesh, f, "assemble_load");
  const int d = mesh.dim;
  const double denom = (d + 1) * (d + 2);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    double S = 0.0;
    for (int i = 0; i <= d; ++i) S += f[mesh.cells(c, i)];
    const double s = mesh.cell_volumes[c] / denom;
    for (int i = 0; i <= d; ++i) b[mesh.cells(c, i)] += s * (S + f[mesh.cells(c, i)]);
  }
  return b;
}

Eigen::MatrixXd element_gradients(const Mesh& mesh, const Eigen::VectorXd& nodal) {
  check_nodal(mesh, nodal, "element_gradients");
  const int d = mesh.dim;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(mesh.num_cells(), d);
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int i = 0; i <= d; ++i)
      g.row(c) += nodal[mesh.cells(c, i)] * mesh.cell_grads.block(c, i * d, 1, d);
  return g;
}

void eliminate_dirichlet(SpMat& A, Eigen::VectorXd& rhs, const std::vector<char>& is_dir,
                         const Eigen::VectorXd& values) {
  const int n = static_cast<int>(A.rows());
  if (static_cast<int>(is_dir.size()) != n || values.size() != n || rhs.size() != n)
    throw dimension_error("eliminate_dirichlet: size mismatch");
  const int* rowptr = A.outerIndexPtr();
  const int* col = A.innerIndexPtr();
  double* val = A.valuePtr();
  for (int i = 0; i < n; ++i) {
    if (is_dir[static_cast<std::size_t>(i)]) {
      bool has_diag = false;
      for (int s = rowptr[i]; s < rowptr[i + 1]; ++s) {
        val[s] = (col[s] == i) ? 1.0 : 0.0;
        has_diag = has_diag || col[s] == i;
      }
      if (!has_diag) throw solver_error("eliminate_dirichlet: missing diagonal entry");
      rhs[i] = values[i];
    } else {
      for (int s = rowptr[i]; s < rowptr[i + 1]; ++s) {
        if (is_dir[static_cast<std::size_t>(col[s])]) {
          rhs[i] -= val[s] * values[col[s]];
          val[s] = 0.0;
        }
      }
    }
  }
}

void apply_dirichlet(AssembledSystem& sys) {
  const int n = static_cast<int>(sys.matrix.rows());
  std::vector<char> flags(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(n);
  if (static_cast<long>(sys.dirichlet_nodes.size()) != sys.dirichlet_values.size())
    throw dimension_error("apply_dirichlet: nodes/values size mismatch");
  for (std::size_t k = 0; k < sys.dirichlet_nodes.size(); ++k) {
    const int i = sys.dirichlet_nodes[k];
    if (!std::isfinite(sys.dirichlet_values[static_cast<long>(k)]))
      throw config_error("apply_dirichlet: non-finite boundary value");
    flags[static_cast<std::size_t>(i)] = 1;
    values[i] = sys.dirichlet_values[static_cast<long>(k)];
  }
  eliminate_dirichlet(sys.matrix, sys.rhs, flags, values);
}

DeviceFields make_device_fields(const Mesh& mesh, const PhaseField& phi, const ModelParams& prm) {
  DeviceFields f;
  f.mesh = &mesh;
  f.levels = energy_levels(phi, prm);
  f.indicator = interface_indicator(phi).values;
  f.grad_lumo = element_gradients(mesh, f.levels.lumo);
  f.grad_homo = element_gradients(mesh, f.levels.homo);
  return f;
}

FemCache build_fem_cache(const Mesh& mesh, const DeviceFields& fields, const ModelParams& prm) {
  FemCache fem;
  fem.M = assemble_mass(mesh);
  fem.K = assemble_stiffness(mesh, Eigen::VectorXd::Ones(mesh.num_nodes()));
  fem.lumped = fem.M * Eigen::VectorXd::Ones(mesh.num_nodes());
  fem.W_diss = assemble_weighted_mass(mesh, (prm.eta_d * fields.indicator.array()).matrix());
  fem.diss_lumped = prm.eta_d * fem.lumped.cwiseProduct(fields.indicator);
  return fem;
}

namespace {

// A * diag(s), in place on a copy
SpMat scale_cols(SpMat A, const Eigen::VectorXd& s) {
  const int* col = A.innerIndexPtr();
  double* val = A.valuePtr();
  for (int k = 0; k < static_cast<int>(A.nonZeros()); ++k) val[k] *= s[col[k]];
  return A;
}

void replace_rows_with_difference(Eigen::VectorXd& F, const std::vector<int>& nodes,
                                  const Eigen::VectorXd& u, const Eigen::VectorXd& g,
                                  long offset) {
  for (int idx : nodes) F[offset + idx] = u[idx] - g[idx];
}

struct CarrierOperator {
  SpMat A;                 // (1/tau) M + mu (K +- C(drift)) + gamma W(other)
  Eigen::MatrixXd drift;   // per-element grad(psi) - grad(E)
};

CarrierOperator carrier_operator(const FemCache& fem, const DeviceFields& fields,
                                 const ModelParams& prm, double tau, bool electron,
                                 const Eigen::MatrixXd& grad_psi,
                                 const Eigen::VectorXd& other_density) {
  CarrierOperator op;
  op.drift = grad_psi - (electron ? fields.grad_lumo : fields.grad_homo);
  op.A = carrier_system_matrix(fem, fields, prm, tau, electron, grad_psi, other_density);
  return op;
}

Eigen::VectorXd carrier_residual_core(const FemCache& fem, const ModelParams& prm, double tau,
                                      const CarrierOperator& op, const Eigen::VectorXd& dens,
                                      const Eigen::VectorXd& old_density,
                                      const Eigen::VectorXd& X_new) {
  const double N2 = prm.N_intr * prm.N_intr;
  return op.A * dens - (1.0 / tau) * fem.lumped.cwiseProduct(old_density) -
         prm.gamma * N2 * fem.lumped - fem.diss_lumped.cwiseProduct(X_new);
}

}  // namespace

SpMat carrier_system_matrix(const FemCache& fem, const DeviceFields& fields,
                            const ModelParams& prm, double tau, bool electron,
                            const Eigen::MatrixXd& grad_psi,
                            const Eigen::VectorXd& reaction_density) {
  const Mesh& mesh = *fields.mesh;
  const Eigen::MatrixXd drift = grad_psi - (electron ? fields.grad_lumo : fields.grad_homo);
  const double mu = electron ? prm.mu_n : prm.mu_p;
  // conservative (integrated-by-parts) drift term (-+ mu (u drift, grad v)):
  // the transposed convection matrix keeps the discrete fluxes conservative
  // even where the drift field jumps between elements. Transient, reaction,
  // and dissociation-source terms use nodal (lumped) quadrature: their
  // consistent-mass off-diagonal weights can demand negative densities at
  // single nodes on coarse meshes, which the quasi-Fermi form cannot
  // represent. The steady-state order is unchanged.
  const double sign = electron ? -1.0 : 1.0;
  const SpMat Ct = SpMat(assemble_convection(mesh, drift).transpose());
  SpMat A = mu * fem.K + (sign * mu) * Ct;
  for (int i = 0; i < A.rows(); ++i)
    A.coeffRef(i, i) += fem.lumped[i] / tau + prm.gamma * fem.lumped[i] * reaction_density[i];
  return A;
}

void coupled_residual_jacobian(const FemCache& fem, const DeviceFields& fields,
                               const ModelParams& prm, double tau, const State& cur,
                               const Eigen::VectorXd& n_old, const Eigen::VectorXd& p_old,
                               const Eigen::VectorXd& X_new, const DirichletData& bc,
                               Eigen::VectorXd& F, SpMat* J) {
  const Mesh& mesh = *fields.mesh;
  const long N = mesh.num_nodes();

  Eigen::VectorXd n, p;
  carrier_densities(cur.psi, cur.phi_n, cur.phi_p, fields.levels, prm, n, p);
  const Eigen::MatrixXd grad_psi = element_gradients(mesh, cur.psi);

  const CarrierOperator op_n = carrier_operator(fem, fields, prm, tau, true, grad_psi, p);
  const CarrierOperator op_p = carrier_operator(fem, fields, prm, tau, false, grad_psi, n);

  F.resize(3 * N);
  F.segment(0, N) = prm.eps * (fem.K * cur.psi) + fem.M * (n - p);
  F.segment(N, N) = carrier_residual_core(fem, prm, tau, op_n, n, n_old, X_new);
  F.segment(2 * N, N) = carrier_residual_core(fem, prm, tau, op_p, p, p_old, X_new);

  replace_rows_with_difference(F, bc.nodes, cur.psi, bc.psi_values, 0);
  replace_rows_with_difference(F, bc.nodes, cur.phi_n, bc.phi_values, N);
  replace_rows_with_difference(F, bc.nodes, cur.phi_p, bc.phi_values, 2 * N);

  if (!J) return;

  // psi-derivative of the conservative drift term is the density-weighted
  // stiffness (the drift depends linearly on grad psi); the nodal reaction
  // term contributes only diagonal couplings and none at all to the psi
  // column (n*p depends on the quasi-Fermi levels alone)
  const SpMat Kn = assemble_stiffness(mesh, n);
  const SpMat Kp = assemble_stiffness(mesh, p);
  const Eigen::VectorXd react = prm.gamma * fem.lumped.cwiseProduct(n.cwiseProduct(p));
  SpMat R_diag(static_cast<int>(N), static_cast<int>(N));
  R_diag.setIdentity();
  for (long i = 0; i < N; ++i) R_diag.coeffRef(static_cast<int>(i), static_cast<int>(i)) = react[i];

  const SpMat J_psi_psi = prm.eps * fem.K + scale_cols(fem.M, (n + p));
  const SpMat J_psi_n = scale_cols(fem.M, -n);
  const SpMat J_psi_p = scale_cols(fem.M, -p);

  const SpMat An_n = scale_cols(op_n.A, n);
  const SpMat Ap_p = scale_cols(op_p.A, p);

  const SpMat J_n_psi = An_n - prm.mu_n * Kn - R_diag;
  const SpMat J_n_n = -An_n;
  const SpMat J_n_p = R_diag;

  const SpMat J_p_psi = -Ap_p + prm.mu_p * Kp + R_diag;
  const SpMat J_p_n = SpMat(-R_diag);
  const SpMat J_p_p = Ap_p;

  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(9 * J_psi_psi.nonZeros()));
  auto add_block = [&](const SpMat& B, long ro, long co) {
    for (int i = 0; i < B.outerSize(); ++i)
      for (SpMat::InnerIterator it(B, i); it; ++it)
        trip.emplace_back(static_cast<int>(ro + it.row()), static_cast<int>(co + it.col()),
                          it.value());
  };
  add_block(J_psi_psi, 0, 0);
  add_block(J_psi_n, 0, N);
  add_block(J_psi_p, 0, 2 * N);
  add_block(J_n_psi, N, 0);
  add_block(J_n_n, N, N);
  add_block(J_n_p, N, 2 * N);
  add_block(J_p_psi, 2 * N, 0);
  add_block(J_p_n, 2 * N, N);
  add_block(J_p_p, 2 * N, 2 * N);

  J->resize(3 * N, 3 * N);
  J->setFromTriplets(trip.begin(), trip.end());

  std::vector<char> flags(static_cast<std::size_t>(3 * N), 0);
  for (int idx : bc.nodes)
    for (int blk = 0; blk < 3; ++blk) flags[static_cast<std::size_t>(blk * N + idx)] = 1;
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3 * N);
  Eigen::VectorXd dummy_rhs = Eigen::VectorXd::Zero(3 * N);
  eliminate_dirichlet(*J, dummy_rhs, flags, zero);
}

void poisson_residual_jacobian(const FemCache& fem, const DeviceFields& fields,
                               const ModelParams& prm, const Eigen::VectorXd& psi,
                               const Eigen::VectorXd& phi_n, const Eigen::VectorXd& phi_p,
                               const DirichletData& bc, Eigen::VectorXd& F, SpMat* J) {
  Eigen::VectorXd n, p;
  carrier_densities(psi, phi_n, phi_p, fields.levels, prm, n, p);
  F = prm.eps * (fem.K * psi) + fem.M * (n - p);
  replace_rows_with_difference(F, bc.nodes, psi, bc.psi_values, 0);
  if (!J) return;
  *J = prm.eps * fem.K + scale_cols(fem.M, (n + p));
  const long N = psi.size();
  std::vector<char> flags(static_cast<std::size_t>(N), 0);
  for (int idx : bc.nodes) flags[static_cast<std::size_t>(idx)] = 1;
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd dummy = Eigen::VectorXd::Zero(N);
  eliminate_dirichlet(*J, dummy, flags, zero);
}

void carrier_residual_jacobian(const FemCache& fem, const DeviceFields& fields,
                               const ModelParams& prm, double tau, bool electron,
                               const Eigen::VectorXd& psi, const Eigen::VectorXd& phi,
                               const Eigen::VectorXd& other_density,
                               const Eigen::VectorXd& old_density, const Eigen::VectorXd& X_new,
                               const DirichletData& bc, Eigen::VectorXd& F, SpMat* J) {
  const Mesh& mesh = *fields.mesh;
  const long N = psi.size();
  Eigen::VectorXd dens(N);
  for (long i = 0; i < N; ++i)
    dens[i] = electron ? electron_density(psi[i], phi[i], fields.levels.lumo[i], prm)
                       : hole_density(psi[i], phi[i], fields.levels.homo[i], prm);

  const Eigen::MatrixXd grad_psi = element_gradients(mesh, psi);
  const CarrierOperator op =
      carrier_operator(fem, fields, prm, tau, electron, grad_psi, other_density);
  F = carrier_residual_core(fem, prm, tau, op, dens, old_density, X_new);
  replace_rows_with_difference(F, bc.nodes, phi, bc.phi_values, 0);
  if (!J) return;
  // d(dens)/d(phi) = -dens for electrons, +dens for holes
  const double sign = electron ? -1.0 : 1.0;
  *J = scale_cols(op.A, (sign * dens.array()).matrix());
  std::vector<char> flags(static_cast<std::size_t>(N), 0);
  for (int idx : bc.nodes) flags[static_cast<std::size_t>(idx)] = 1;
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd dummy = Eigen::VectorXd::Zero(N);
  eliminate_dirichlet(*J, dummy, flags, zero);
}

}  // namespace opvfem
