#pragma once

#include "opvfem/mesh.hpp"
#include "opvfem/morphology.hpp"
#include "opvfem/physics.hpp"
#include "opvfem/sparse.hpp"

#include <cmath>
#include <vector>

namespace opvfem {

// P1 assembly on simplicial meshes. All quadrature is exact for the
// polynomial degree of each integrand (degree 3 suffices for the weighted
// mass of three P1 factors). Assembly loops are sequential and run in a
// fixed element order, so results are bit-reproducible.

SpMat assemble_mass(const Mesh& mesh);
SpMat assemble_stiffness(const Mesh& mesh, double coeff);
/// Nodal coefficient, averaged per element.
SpMat assemble_stiffness(const Mesh& mesh, const Eigen::VectorXd& nodal_coeff);
/// drift is one constant vector per element (n_cells x dim);
/// C_ij = sum_K (drift_K . grad zeta_j) int_K zeta_i.
SpMat assemble_convection(const Mesh& mesh, const Eigen::MatrixXd& drift);
/// weight is a nodal field, integrated as its P1 interpolant.
SpMat assemble_weighted_mass(const Mesh& mesh, const Eigen::VectorXd& weight);
/// b_i = int f_h zeta_i = (M f)_i, assembled directly.
Eigen::VectorXd assemble_load(const Mesh& mesh, const Eigen::VectorXd& f);

/// Per-element gradient of the P1 interpolant of a nodal field (n_cells x dim).
Eigen::MatrixXd element_gradients(const Mesh& mesh, const Eigen::VectorXd& nodal);

inline double mass_norm(const SpMat& M, const Eigen::VectorXd& d) {
  return std::sqrt(d.dot(M * d));
}

struct AssembledSystem {
  SpMat matrix;
  Eigen::VectorXd rhs;
  std::vector<int> dirichlet_nodes;
  Eigen::VectorXd dirichlet_values;  // parallel to dirichlet_nodes
};

/// Symmetric elimination: rhs <- rhs - A[:,d] g_d on free rows, then
/// constrained rows and columns become identity rows with rhs_d = g_d.
void apply_dirichlet(AssembledSystem& sys);

/// In-place variant on flag/value vectors of full length.
void eliminate_dirichlet(SpMat& A, Eigen::VectorXd& rhs, const std::vector<char>& is_dir,
                         const Eigen::VectorXd& values);

/// Morphology-derived coefficient fields frozen for a whole run.
struct DeviceFields {
  const Mesh* mesh = nullptr;
  EnergyLevels levels;
  Eigen::VectorXd indicator;             // nodal |grad phi|
  Eigen::MatrixXd grad_lumo, grad_homo;  // per-element energy-level gradients
};

DeviceFields make_device_fields(const Mesh& mesh, const PhaseField& phi, const ModelParams& prm);

/// Matrices that never change during a run.
struct FemCache {
  SpMat M;                 // mass
  SpMat K;                 // unit stiffness
  Eigen::VectorXd lumped;  // M*1; row-sum lumping of the mass matrix
  SpMat W_diss;            // weighted mass of eta_d * |grad phi| (exciton equation)
  Eigen::VectorXd diss_lumped;  // lumped eta_d * |grad phi| (carrier source quadrature)
};

FemCache build_fem_cache(const Mesh& mesh, const DeviceFields& fields, const ModelParams& prm);

/// Contact boundary data. The value vectors are full nodal length; only the
/// entries listed in `nodes` are constrained.
struct DirichletData {
  std::vector<int> nodes;
  Eigen::VectorXd psi_values;      // applied voltage + electroneutral potential
  Eigen::VectorXd phi_values;      // applied voltage (both quasi-Fermi levels)
  Eigen::VectorXd n_values;        // electroneutral contact densities
  Eigen::VectorXd p_values;
};

/// Transport operator of one carrier in density unknowns:
/// (1/tau) M + mu (K + C(grad psi - grad E_L)) for electrons,
/// (1/tau) M + mu (K - C(grad psi - grad E_H)) for holes,
/// plus gamma * weighted_mass(reaction_density) for the Langevin term.
SpMat carrier_system_matrix(const FemCache& fem, const DeviceFields& fields,
                            const ModelParams& prm, double tau, bool electron,
                            const Eigen::MatrixXd& grad_psi,
                            const Eigen::VectorXd& reaction_density);

/// Residual of the fully implicit step in the unknowns (psi, phi_n, phi_p),
/// densities eliminated through the Boltzmann statistics; stacked ordering
/// [F_psi; F_n; F_p] with contact rows replaced by (u - g). When J is
/// non-null the analytic Jacobian is assembled with contact rows and columns
/// eliminated to the identity.
void coupled_residual_jacobian(const FemCache& fem, const DeviceFields& fields,
                               const ModelParams& prm, double tau, const State& cur,
                               const Eigen::VectorXd& n_old, const Eigen::VectorXd& p_old,
                               const Eigen::VectorXd& X_new, const DirichletData& bc,
                               Eigen::VectorXd& F, SpMat* J);

/// Poisson block at frozen quasi-Fermi levels (nonlinear in psi through the
/// carrier statistics).
void poisson_residual_jacobian(const FemCache& fem, const DeviceFields& fields,
                               const ModelParams& prm, const Eigen::VectorXd& psi,
                               const Eigen::VectorXd& phi_n, const Eigen::VectorXd& phi_p,
                               const DirichletData& bc, Eigen::VectorXd& F, SpMat* J);

/// Carrier block at frozen potential and frozen opposite-carrier density.
/// electron=true solves for phi_n, otherwise phi_p.
void carrier_residual_jacobian(const FemCache& fem, const DeviceFields& fields,
                               const ModelParams& prm, double tau, bool electron,
                               const Eigen::VectorXd& psi, const Eigen::VectorXd& phi,
                               const Eigen::VectorXd& other_density,
                               const Eigen::VectorXd& old_density, const Eigen::VectorXd& X_new,
                               const DirichletData& bc, Eigen::VectorXd& F, SpMat* J);

}  // namespace opvfem
