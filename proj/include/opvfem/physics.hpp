#pragma once

#include <Eigen/Core>

namespace opvfem {

struct EnergyLevels;

/// Nondimensional model constants. Defaults are the standard simulation set;
/// energies are in thermal units, carrier statistics use the low-density
/// Boltzmann closure of the Gauss-Fermi occupation.
struct ModelParams {
  double d_X = 1e-2;      // exciton diffusivity
  double G = 16990.0;     // exciton generation rate
  double eta_r = 1.0;     // exciton recombination rate
  double eta_d = 1.0;     // interface dissociation rate (interface width absorbed)
  double mu_n = 3.0;
  double mu_p = 1.0;
  double eps = 1e-1;      // permittivity
  double N_n0 = 1.0;      // transport state densities
  double N_p0 = 1.0;
  double sigma_n = 0.3868;  // Gaussian disorder widths, thermal units
  double sigma_p = 0.3868;
  double gamma = 0.6987;  // Langevin prefactor
  double N_intr = 0.0;    // intrinsic concentration (independent parameter)
  double E_L_p = -3.28;   // LUMO/HOMO endpoints: pure polymer / pure acceptor
  double E_L_nfa = -4.10;
  double E_H_p = -5.13;
  double E_H_nfa = -5.65;
  double tau = 1e-4;      // time step
  double tol = 1e-4;      // steady-state tolerance

  /// Throws config_error listing every violated constraint.
  void validate() const;
};

/// Characteristic scales of the dimensional->nondimensional map. The charge
/// scale is the elementary charge and the voltage scale the thermal voltage,
/// so only length, time, and temperature are free. The physical constants are
/// injectable to allow natural-unit checks.
struct Scales {
  double x_c = 1.0;
  double t_c = 1.0;
  double T_c = 300.0;
  double k_B = 1.380649e-23;     // J/K
  double q_e = 1.602176634e-19;  // C

  double thermal_voltage() const { return k_B * T_c / q_e; }
};

/// Dimensional counterparts of ModelParams plus the interface thickness
/// lambda (absorbed into eta_d by the map).
struct DimensionalParams {
  double d_X = 0, G = 0, eta_r = 0, eta_d = 0, lambda = 0;
  double mu_n = 0, mu_p = 0, eps = 0;
  double N_n0 = 0, N_p0 = 0, sigma_n = 0, sigma_p = 0;
  double gamma = 0, N_intr = 0;
  double E_L_p = 0, E_L_nfa = 0, E_H_p = 0, E_H_nfa = 0;
  double tau = 0, tol = 0;
};

ModelParams nondimensionalize(const DimensionalParams& in, const Scales& s);

/// Nodal unknowns at one time level.
struct State {
  Eigen::VectorXd psi;    // electric potential
  Eigen::VectorXd phi_n;  // electron quasi-Fermi level
  Eigen::VectorXd phi_p;  // hole quasi-Fermi level
  Eigen::VectorXd X;      // exciton density
};

/// exp with a blow-up guard: |e| > 600 throws divergence_error before the
/// Inf could propagate through the solver.
double guarded_exp(double e);

// Boltzmann carrier statistics and their exact log inversions. Scalar forms
// take the local energy level; vector forms map over nodal fields.
double electron_density(double psi, double phi_n, double E_L, const ModelParams& p);
double hole_density(double psi, double phi_p, double E_H, const ModelParams& p);
double quasi_fermi_from_electron_density(double n, double psi, double E_L, const ModelParams& p);
double quasi_fermi_from_hole_density(double pd, double psi, double E_H, const ModelParams& p);

void carrier_densities(const Eigen::VectorXd& psi, const Eigen::VectorXd& phi_n,
                       const Eigen::VectorXd& phi_p, const EnergyLevels& levels,
                       const ModelParams& p, Eigen::VectorXd& n, Eigen::VectorXd& pd);
Eigen::VectorXd quasi_fermi_from_density(const Eigen::VectorXd& n, const Eigen::VectorXd& psi,
                                         const EnergyLevels& levels, const ModelParams& p,
                                         bool electron);

/// Langevin rate gamma*(n*p - N_intr^2), nodewise.
Eigen::VectorXd recombination(const Eigen::VectorXd& n, const Eigen::VectorXd& p,
                              const ModelParams& prm);

/// N_intr^2 = N_n0*N_p0*exp(-(E_L - E_H)) at one point. The simulations keep
/// N_intr as an independent parameter; this is the consistency formula.
double intrinsic_concentration_sq(double E_L, double E_H, const ModelParams& p);

/// Gauss-Fermi integral: Gaussian density of states folded with the Fermi
/// function. Fixed-order composite quadrature over xi in [-12, 12], absolute
/// accuracy better than 1e-10. Validation oracle; transport uses the
/// Boltzmann closure.
double gauss_fermi_integral(double eta, double z);

/// Low-density limit exp(eta)*exp(z^2/2) of the Gauss-Fermi integral.
double boltzmann_approx(double eta, double z);

/// Contact potential making n = p under the Boltzmann statistics:
/// psi* = (E_L+E_H)/2 + (sigma_p^2-sigma_n^2)/4 + ln(N_p0/N_n0)/2.
double electroneutral_potential(double E_L, double E_H, const ModelParams& p);

}  // namespace opvfem
