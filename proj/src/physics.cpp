#include "opvfem/physics.hpp"

#include "opvfem/errors.hpp"
#include "opvfem/morphology.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace opvfem {

void ModelParams::validate() const {
  std::vector<std::string> bad;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0)) bad.push_back(std::string(name) + " must be > 0");
  };
  auto nonneg = [&](double v, const char* name) {
    if (!(v >= 0.0)) bad.push_back(std::string(name) + " must be >= 0");
  };
  positive(d_X, "d_X");
  positive(mu_n, "mu_n");
  positive(mu_p, "mu_p");
  positive(eps, "eps");
  positive(tau, "tau");
  nonneg(G, "G");
  nonneg(eta_r, "eta_r");
  nonneg(eta_d, "eta_d");
  nonneg(gamma, "gamma");
  nonneg(N_n0, "N_n0");
  nonneg(N_p0, "N_p0");
  nonneg(N_intr, "N_intr");
  nonneg(tol, "tol");
  if (!(E_L_p > E_H_p)) bad.push_back("E_L_p must be > E_H_p");
  if (!(E_L_nfa > E_H_nfa)) bad.push_back("E_L_nfa must be > E_H_nfa");
  if (!bad.empty()) throw config_error(bad);
}

ModelParams nondimensionalize(const DimensionalParams& in, const Scales& s) {
  if (!(s.x_c > 0.0) || !(s.t_c > 0.0) || !(s.T_c > 0.0) || !(s.k_B > 0.0) || !(s.q_e > 0.0))
    throw config_error("scales must all be positive");
  const double kT = s.k_B * s.T_c;
  const double x3 = s.x_c * s.x_c * s.x_c;
  ModelParams out;
  out.d_X = s.t_c / (s.x_c * s.x_c) * in.d_X;
  out.G = s.t_c * x3 * in.G;
  out.eta_r = s.t_c * in.eta_r;
  out.eta_d = s.t_c / s.x_c * in.lambda * in.eta_d;
  out.mu_n = kT * s.t_c / (s.x_c * s.x_c * s.q_e) * in.mu_n;
  out.mu_p = kT * s.t_c / (s.x_c * s.x_c * s.q_e) * in.mu_p;
  out.eps = kT * s.x_c / (s.q_e * s.q_e) * in.eps;
  out.N_n0 = x3 * in.N_n0;
  out.N_p0 = x3 * in.N_p0;
  out.sigma_n = in.sigma_n / kT;
  out.sigma_p = in.sigma_p / kT;
  out.gamma = s.t_c / x3 * in.gamma;
  out.N_intr = x3 * in.N_intr;  // N_intr^2 scales with x_c^6
  out.E_L_p = in.E_L_p / kT;
  out.E_L_nfa = in.E_L_nfa / kT;
  out.E_H_p = in.E_H_p / kT;
  out.E_H_nfa = in.E_H_nfa / kT;
  out.tau = in.tau / s.t_c;
  out.tol = in.tol;
  return out;
}

double guarded_exp(double e) {
  if (!std::isfinite(e) || std::abs(e) > 600.0)
    throw divergence_error("state exponent out of range: " + std::to_string(e));
  return std::exp(e);
}

double electron_density(double psi, double phi_n, double E_L, const ModelParams& p) {
  return p.N_n0 * std::exp(0.5 * p.sigma_n * p.sigma_n) * guarded_exp((psi - phi_n) - E_L);
}

double hole_density(double psi, double phi_p, double E_H, const ModelParams& p) {
  return p.N_p0 * std::exp(0.5 * p.sigma_p * p.sigma_p) * guarded_exp((phi_p - psi) + E_H);
}

double quasi_fermi_from_electron_density(double n, double psi, double E_L, const ModelParams& p) {
  if (!(n > 0.0)) throw std::domain_error("quasi_fermi_from_density: nonpositive density");
  return psi - E_L + std::log(p.N_n0) + 0.5 * p.sigma_n * p.sigma_n - std::log(n);
}

double quasi_fermi_from_hole_density(double pd, double psi, double E_H, const ModelParams& p) {
  if (!(pd > 0.0)) throw std::domain_error("quasi_fermi_from_density: nonpositive density");
  return psi - E_H - std::log(p.N_p0) - 0.5 * p.sigma_p * p.sigma_p + std::log(pd);
}

void carrier_densities(const Eigen::VectorXd& psi, const Eigen::VectorXd& phi_n,
                       const Eigen::VectorXd& phi_p, const EnergyLevels& levels,
                       const ModelParams& p, Eigen::VectorXd& n, Eigen::VectorXd& pd) {
  const long N = psi.size();
  if (phi_n.size() != N || phi_p.size() != N || levels.lumo.size() != N || levels.homo.size() != N)
    throw dimension_error("carrier_densities: field sizes differ");
  n.resize(N);
  pd.resize(N);
  for (long i = 0; i < N; ++i) {
    n[i] = electron_density(psi[i], phi_n[i], levels.lumo[i], p);
    pd[i] = hole_density(psi[i], phi_p[i], levels.homo[i], p);
  }
}

Eigen::VectorXd quasi_fermi_from_density(const Eigen::VectorXd& dens, const Eigen::VectorXd& psi,
                                         const EnergyLevels& levels, const ModelParams& p,
                                         bool electron) {
  const long N = dens.size();
  if (psi.size() != N) throw dimension_error("quasi_fermi_from_density: field sizes differ");
  Eigen::VectorXd phi(N);
  for (long i = 0; i < N; ++i)
    phi[i] = electron ? quasi_fermi_from_electron_density(dens[i], psi[i], levels.lumo[i], p)
                      : quasi_fermi_from_hole_density(dens[i], psi[i], levels.homo[i], p);
  return phi;
}

Eigen::VectorXd recombination(const Eigen::VectorXd& n, const Eigen::VectorXd& p,
                              const ModelParams& prm) {
  if (n.size() != p.size()) throw dimension_error("recombination: field sizes differ");
  const double N2 = prm.N_intr * prm.N_intr;
  return prm.gamma * (n.array() * p.array() - N2).matrix();
}

double intrinsic_concentration_sq(double E_L, double E_H, const ModelParams& p) {
  return p.N_n0 * p.N_p0 * std::exp(-(E_L - E_H));
}

namespace {

// 16-point Gauss-Legendre rule on [-1, 1]
constexpr double kGlNodes[8] = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
constexpr double kGlWeights[8] = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

}  // namespace

double gauss_fermi_integral(double eta, double z) {
  if (!std::isfinite(eta) || !std::isfinite(z))
    throw std::domain_error("gauss_fermi_integral: non-finite input");
  if (z < 0.0) throw std::domain_error("gauss_fermi_integral: z must be >= 0");
  // Beyond |xi| = 12 the Gaussian weight is below 1e-31; the truncated tail
  // is negligible against the 1e-10 accuracy target.
  constexpr double kLimit = 12.0;
  constexpr int kPanels = 48;
  const double h = 2.0 * kLimit / kPanels;
  const double inv_sqrt2pi = 0.3989422804014327;
  auto f = [&](double xi) {
    const double a = z * xi - eta;
    // stable logistic of -a
    const double fermi = a > 0.0 ? std::exp(-a) / (1.0 + std::exp(-a)) : 1.0 / (1.0 + std::exp(a));
    return inv_sqrt2pi * std::exp(-0.5 * xi * xi) * fermi;
  };
  double sum = 0.0;
  for (int p = 0; p < kPanels; ++p) {
    const double c = -kLimit + (p + 0.5) * h;
    for (int q = 0; q < 8; ++q) {
      const double dx = 0.5 * h * kGlNodes[q];
      sum += 0.5 * h * kGlWeights[q] * (f(c + dx) + f(c - dx));
    }
  }
  return sum;
}

double boltzmann_approx(double eta, double z) {
  return guarded_exp(eta + 0.5 * z * z);
}

double electroneutral_potential(double E_L, double E_H, const ModelParams& p) {
  if (!(p.N_n0 > 0.0) || !(p.N_p0 > 0.0))
    throw std::domain_error("electroneutral_potential: transport densities must be positive");
  return 0.5 * (E_L + E_H) + 0.25 * (p.sigma_p * p.sigma_p - p.sigma_n * p.sigma_n) +
         0.5 * std::log(p.N_p0 / p.N_n0);
}

}  // namespace opvfem
