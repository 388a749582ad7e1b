#pragma once

#include "opvfem/assembly.hpp"
#include "opvfem/linsolve.hpp"
#include "opvfem/morphology.hpp"
#include "opvfem/postprocess.hpp"
#include "opvfem/report.hpp"

#include <functional>
#include <memory>

namespace opvfem {

enum class Method { Newton, Gummel, SemiNewtonGummel };

struct NonlinearConfig {
  Method method = Method::SemiNewtonGummel;
  double newton_rtol = 1e-6;
  double newton_atol = 1e-10;
  int newton_max_iters = 30;
  // Newton updates larger than this (sup norm, thermal units) are scaled
  // back onto the ball; plain update damping, the direction is kept.
  double newton_update_clamp = 5.0;
  double alpha = 0.0;  // damping; 0 selects the per-method default
  double steady_tol = 1e-4;
  double tau = 1e-4;
  long max_time_steps = 2000000;
  // Deterministic startup schedule: the first tau_ramp_steps steps use
  // tau/2^(tau_ramp_steps), tau/2^(tau_ramp_steps-1), ... so the violent
  // initial transient is integrated with small steps. 0 disables the ramp.
  int tau_ramp_steps = 0;
  bool exciton_init_steady = false;  // start X at its own steady state instead of zero
  LinearSolverConfig lin;
  PreconditionerSpec precond;
  double density_floor = 1e-300;

  double resolved_alpha() const {
    if (alpha > 0.0) return alpha;
    return method == Method::Gummel ? 0.5 : 0.7;
  }
  void validate() const;
};

struct SweepConfig {
  double v_bot = 0.0;
  double v_start = 0.0;
  double v_stop = 0.0;
  double v_step = 0.02;

  void validate() const;
  std::vector<double> voltages() const;
};

/// Everything frozen for one (mesh, morphology, params, config) run: derived
/// coefficient fields, the constant matrices, and their preconditioners. One
/// context drives one sweep at a time; distinct sweeps need distinct contexts.
struct SolverContext {
  const Mesh* mesh = nullptr;
  ModelParams prm;
  NonlinearConfig cfg;
  DeviceFields fields;
  FemCache fem;
  Eigen::VectorXd psi_star;  // nodal electroneutral potential
  std::vector<int> top_nodes, bot_nodes, contact_nodes;
  std::vector<char> contact_flags;

  double current_tau = 0;  // step size in effect (differs from cfg.tau during the ramp)
  SpMat A_exciton;         // (1+tau*eta_r) M + tau d_X K + tau W_diss
  std::unique_ptr<Preconditioner> P_exciton;
  Eigen::VectorXd exciton_load;  // tau G M 1

  SpMat A_poisson_lin;  // eps K with contact rows eliminated (decoupled update + lift)
  std::unique_ptr<Preconditioner> P_poisson_lin;
};

SolverContext make_solver_context(const Mesh& mesh, const PhaseField& phi, const ModelParams& prm,
                                  const NonlinearConfig& cfg);

/// Rebuilds the tau-dependent exciton system; used by the startup ramp.
void set_time_step(SolverContext& ctx, double tau);

/// Contact Dirichlet data for one applied voltage pair: psi = V + psi*,
/// phi_n = phi_p = V, densities at their electroneutral contact values.
DirichletData make_boundary_data(const SolverContext& ctx, double v_top, double v_bot);

/// Overwrites the contact entries of psi, phi_n, phi_p with the Dirichlet
/// data, making the state admissible after a voltage change.
void impose_boundary_values(const SolverContext& ctx, const DirichletData& bc, State& s);

/// Cold-start state: psi is the discrete harmonic lift of its boundary data,
/// the quasi-Fermi levels interpolate the contact voltages linearly along the
/// vertical axis, X starts at zero (or its own steady state if configured).
State initial_state(const SolverContext& ctx, const DirichletData& bc);

/// Convex combination alpha*candidate + (1-alpha)*previous, alpha in (0,1].
Eigen::VectorXd damped_update(const Eigen::VectorXd& prev, const Eigen::VectorXd& candidate,
                              double alpha);

/// One backward-Euler step of the exciton equation with natural boundaries:
/// (M + tau d_X K + tau (eta_r + eta_d |grad phi|) M_w) X = tau G M 1 + M X_prev.
Eigen::VectorXd solve_exciton_step(const Eigen::VectorXd& X_prev, const InterfaceField& indicator,
                                   const ModelParams& prm, const Mesh& mesh,
                                   const LinearSolverConfig& lin = {},
                                   const PreconditionerSpec& precond = {});

/// Newton on the coupled (psi, phi_n, phi_p) system of one implicit step;
/// the exciton field is solved beforehand and enters the right sides.
/// Returns false when the iteration cap is hit.
bool newton_coupled_step(SolverContext& ctx, const DirichletData& bc, const State& prev,
                         const Eigen::VectorXd& n_old, const Eigen::VectorXd& p_old,
                         const Eigen::VectorXd& X_new, State& next, SolveReport& rep);

/// One damped decoupled pass: linear Poisson from the previous densities,
/// then the carrier systems in density unknowns with convection from the
/// damped potential, then quasi-Fermi recovery by log inversion.
bool gummel_step(SolverContext& ctx, const DirichletData& bc, const State& prev,
                 const Eigen::VectorXd& n_old, const Eigen::VectorXd& p_old,
                 const Eigen::VectorXd& X_new, State& next, SolveReport& rep);

/// Decoupled pass with a per-equation Newton solve inside each subproblem.
bool semi_newton_gummel_step(SolverContext& ctx, const DirichletData& bc, const State& prev,
                             const Eigen::VectorXd& n_old, const Eigen::VectorXd& p_old,
                             const Eigen::VectorXd& X_new, State& next, SolveReport& rep);

struct SteadyResult {
  State state;     // converged (or last) state
  State previous;  // one step earlier, for the displacement current
  SolveReport report;
};

/// Implicit-Euler time stepping until the largest mass-norm increment over
/// {psi, n, p, X} between consecutive steps drops below steady_tol.
SteadyResult advance_to_steady(SolverContext& ctx, State state, double v_top, double v_bot);

using SweepObserver = std::function<void(const IVPoint&, const State&)>;

/// Voltage continuation: each point warm-starts from the previous converged
/// state. Aborts on a nonconverged point, returning the partial curve.
IVCurve voltage_sweep(SolverContext& ctx, const SweepConfig& sweep,
                      const SweepObserver& on_point = {});

}  // namespace opvfem
