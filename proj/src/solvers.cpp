#include "opvfem/solvers.hpp"

#include "opvfem/errors.hpp"

#include <algorithm>
#include <cmath>

namespace opvfem {

void NonlinearConfig::validate() const {
  std::vector<std::string> bad;
  if (alpha != 0.0 && !(alpha > 0.0 && alpha < 1.0))
    bad.push_back("alpha must be in (0,1)");
  if (!(newton_update_clamp > 0.0)) bad.push_back("newton_update_clamp must be > 0");
  if (!(newton_rtol > 0.0)) bad.push_back("newton_rtol must be > 0");
  if (!(newton_atol > 0.0)) bad.push_back("newton_atol must be > 0");
  if (newton_max_iters < 1) bad.push_back("newton_max_iters must be >= 1");
  if (!(steady_tol > 0.0)) bad.push_back("steady_tol must be > 0");
  if (!(tau > 0.0)) bad.push_back("tau must be > 0");
  if (max_time_steps < 1) bad.push_back("max_time_steps must be >= 1");
  if (tau_ramp_steps < 0) bad.push_back("tau_ramp_steps must be >= 0");
  if (!(lin.rtol > 0.0)) bad.push_back("lin_rtol must be > 0");
  if (!(lin.atol > 0.0)) bad.push_back("lin_atol must be > 0");
  if (lin.max_iters < 1) bad.push_back("lin_max_iters must be >= 1");
  if (lin.restart < 1) bad.push_back("lin_restart must be >= 1");
  if (!(density_floor > 0.0)) bad.push_back("density_floor must be > 0");
  if (!bad.empty()) throw config_error(bad);
}

void SweepConfig::validate() const {
  std::vector<std::string> bad;
  if (!(v_step > 0.0)) bad.push_back("sweep step must be > 0");
  if (!(v_start <= v_stop)) bad.push_back("sweep start must be <= stop");
  if (!bad.empty()) throw config_error(bad);
}

std::vector<double> SweepConfig::voltages() const {
  validate();
  std::vector<double> v;
  for (int k = 0;; ++k) {
    const double x = v_start + k * v_step;
    if (x > v_stop + 1e-9 * v_step) break;
    v.push_back(x);
  }
  return v;
}

SolverContext make_solver_context(const Mesh& mesh, const PhaseField& phi, const ModelParams& prm,
                                  const NonlinearConfig& cfg) {
  prm.validate();
  cfg.validate();
  SolverContext ctx;
  ctx.mesh = &mesh;
  ctx.prm = prm;
  ctx.cfg = cfg;
  ctx.fields = make_device_fields(mesh, phi, prm);
  ctx.fem = build_fem_cache(mesh, ctx.fields, prm);

  const long N = mesh.num_nodes();
  ctx.psi_star.resize(N);
  for (long i = 0; i < N; ++i)
    ctx.psi_star[i] =
        electroneutral_potential(ctx.fields.levels.lumo[i], ctx.fields.levels.homo[i], prm);

  ctx.top_nodes = boundary_nodes(mesh, BoundaryTag::TopOrg);
  ctx.bot_nodes = boundary_nodes(mesh, BoundaryTag::BotOrg);
  ctx.contact_nodes = ctx.top_nodes;
  ctx.contact_nodes.insert(ctx.contact_nodes.end(), ctx.bot_nodes.begin(), ctx.bot_nodes.end());
  std::sort(ctx.contact_nodes.begin(), ctx.contact_nodes.end());
  ctx.contact_flags.assign(static_cast<std::size_t>(N), 0);
  for (int v : ctx.contact_nodes) ctx.contact_flags[static_cast<std::size_t>(v)] = 1;

  set_time_step(ctx, cfg.tau);

  ctx.A_poisson_lin = prm.eps * ctx.fem.K;
  Eigen::VectorXd dummy = Eigen::VectorXd::Zero(N);
  eliminate_dirichlet(ctx.A_poisson_lin, dummy, ctx.contact_flags, Eigen::VectorXd::Zero(N));
  ctx.P_poisson_lin = build_preconditioner(ctx.A_poisson_lin, cfg.precond);
  return ctx;
}

void set_time_step(SolverContext& ctx, double tau) {
  if (tau == ctx.current_tau) return;
  ctx.current_tau = tau;
  ctx.A_exciton = (1.0 + tau * ctx.prm.eta_r) * ctx.fem.M + (tau * ctx.prm.d_X) * ctx.fem.K +
                  tau * ctx.fem.W_diss;
  ctx.P_exciton = build_preconditioner(ctx.A_exciton, ctx.cfg.precond);
  ctx.exciton_load = tau * ctx.prm.G * ctx.fem.lumped;
}

DirichletData make_boundary_data(const SolverContext& ctx, double v_top, double v_bot) {
  const long N = ctx.mesh->num_nodes();
  DirichletData bc;
  bc.nodes = ctx.contact_nodes;
  bc.psi_values = Eigen::VectorXd::Zero(N);
  bc.phi_values = Eigen::VectorXd::Zero(N);
  bc.n_values = Eigen::VectorXd::Zero(N);
  bc.p_values = Eigen::VectorXd::Zero(N);
  auto fill = [&](const std::vector<int>& nodes, double v) {
    for (int i : nodes) {
      bc.psi_values[i] = v + ctx.psi_star[i];
      bc.phi_values[i] = v;
      // electroneutral contact densities (voltage independent by construction)
      bc.n_values[i] = electron_density(ctx.psi_star[i], 0.0, ctx.fields.levels.lumo[i], ctx.prm);
      bc.p_values[i] = hole_density(ctx.psi_star[i], 0.0, ctx.fields.levels.homo[i], ctx.prm);
    }
  };
  fill(ctx.top_nodes, v_top);
  fill(ctx.bot_nodes, v_bot);
  return bc;
}

void impose_boundary_values(const SolverContext& ctx, const DirichletData& bc, State& s) {
  (void)ctx;
  for (int i : bc.nodes) {
    s.psi[i] = bc.psi_values[i];
    s.phi_n[i] = bc.phi_values[i];
    s.phi_p[i] = bc.phi_values[i];
  }
}

namespace {

// rhs <- rhs adjusted for Dirichlet data of the *unconstrained* operator:
// rhs_free -= A[:,d] g_d, rhs_d = g_d. Pairs with a matrix that was already
// passed through eliminate_dirichlet.
void eliminate_rhs(const SpMat& A_orig, Eigen::VectorXd& rhs, const std::vector<char>& flags,
                   const Eigen::VectorXd& values) {
  const int n = static_cast<int>(A_orig.rows());
  const int* rowptr = A_orig.outerIndexPtr();
  const int* col = A_orig.innerIndexPtr();
  const double* val = A_orig.valuePtr();
  for (int i = 0; i < n; ++i) {
    if (flags[static_cast<std::size_t>(i)]) {
      rhs[i] = values[i];
    } else {
      for (int s = rowptr[i]; s < rowptr[i + 1]; ++s)
        if (flags[static_cast<std::size_t>(col[s])]) rhs[i] -= val[s] * values[col[s]];
    }
  }
}

int solve_or_throw(const SpMat& A, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                   const Preconditioner& P, const LinearSolverConfig& lin, const char* what) {
  const LinearSolveReport rep = gmres_solve(A, b, x, P, lin);
  if (!rep.converged)
    throw solver_error(std::string(what) + ": linear solve did not converge (residual " +
                       std::to_string(rep.residual) + ")");
  return rep.iterations;
}

Eigen::VectorXd context_exciton_step(SolverContext& ctx, const Eigen::VectorXd& X_prev,
                                     SolveReport& rep) {
  Eigen::VectorXd X = X_prev;
  const Eigen::VectorXd rhs = ctx.exciton_load + ctx.fem.M * X_prev;
  const int its = solve_or_throw(ctx.A_exciton, rhs, X, *ctx.P_exciton, ctx.cfg.lin, "exciton");
  rep.exciton.record(0, its);
  return X;
}

// Componentwise potential-update limiting: no nodal potential moves more
// than `clamp` thermal units per Newton iteration.
void clamp_update(Eigen::VectorXd& delta, double clamp) {
  for (long i = 0; i < delta.size(); ++i)
    delta[i] = std::clamp(delta[i], -clamp, clamp);
}

// Generic damped Newton-free iteration cap loop for one residual/Jacobian
// block. Returns false when the cap is hit before the residual target.
// The reachable residual floor is roundoff amplified by the 1/tau transient
// term; a converged iteration can sit just above newton_atol. Stagnation well
// below sqrt(atol*f0) therefore counts as converged.
bool newton_converged(double fn, double fn_prev, double f0, const NonlinearConfig& cfg, int m) {
  if (fn <= std::max(cfg.newton_rtol * f0, cfg.newton_atol)) return true;
  return m >= 2 && fn >= 0.5 * fn_prev && fn <= std::sqrt(cfg.newton_atol * f0);
}

template <typename EvalFn>
bool newton_solve_block(Eigen::VectorXd& u, EvalFn&& eval, const NonlinearConfig& cfg,
                        EquationStats& stats) {
  Eigen::VectorXd F;
  SpMat J;
  int max_gmres = 0;
  double f0 = -1.0;
  double fn_prev = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= cfg.newton_max_iters; ++m) {
    eval(u, F, J);
    const double fn = F.norm();
    if (f0 < 0.0) f0 = fn;
    if (newton_converged(fn, fn_prev, f0, cfg, m)) {
      stats.record(m, max_gmres);
      return true;
    }
    fn_prev = fn;
    if (m == cfg.newton_max_iters) break;
    auto P = build_preconditioner(J, cfg.precond);
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(u.size());
    const LinearSolveReport lrep = gmres_solve(J, -F, delta, *P, cfg.lin);
    if (!lrep.converged)
      throw solver_error("newton block: linear solve did not converge");
    max_gmres = std::max(max_gmres, lrep.iterations);
    clamp_update(delta, cfg.newton_update_clamp);
    u += delta;
  }
  stats.record(cfg.newton_max_iters, max_gmres);
  return false;
}

}  // namespace

State initial_state(const SolverContext& ctx, const DirichletData& bc) {
  const Mesh& mesh = *ctx.mesh;
  const long N = mesh.num_nodes();
  State s;
  s.psi = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
  eliminate_rhs(ctx.prm.eps * ctx.fem.K, rhs, ctx.contact_flags, bc.psi_values);
  LinearSolveReport rep = gmres_solve(ctx.A_poisson_lin, rhs, s.psi, *ctx.P_poisson_lin, ctx.cfg.lin);
  if (!rep.converged) throw solver_error("initial state: harmonic lift solve failed");

  const int vaxis = mesh.dim - 1;
  const double H = mesh.height();
  double v_top = 0.0, v_bot = 0.0;
  if (!ctx.top_nodes.empty()) v_top = bc.phi_values[ctx.top_nodes.front()];
  if (!ctx.bot_nodes.empty()) v_bot = bc.phi_values[ctx.bot_nodes.front()];
  s.phi_n.resize(N);
  for (long i = 0; i < N; ++i)
    s.phi_n[i] = v_bot + (v_top - v_bot) * mesh.vertices(i, vaxis) / H;
  s.phi_p = s.phi_n;

  if (ctx.cfg.exciton_init_steady) {
    SpMat S = ctx.prm.eta_r * ctx.fem.M + ctx.prm.d_X * ctx.fem.K + ctx.fem.W_diss;
    auto P = build_preconditioner(S, ctx.cfg.precond);
    s.X = Eigen::VectorXd::Zero(N);
    const Eigen::VectorXd load = ctx.prm.G * ctx.fem.lumped;
    LinearSolveReport xrep = gmres_solve(S, load, s.X, *P, ctx.cfg.lin);
    if (!xrep.converged) throw solver_error("initial state: steady exciton solve failed");
  } else {
    s.X = Eigen::VectorXd::Zero(N);
  }
  impose_boundary_values(ctx, bc, s);
  return s;
}

Eigen::VectorXd damped_update(const Eigen::VectorXd& prev, const Eigen::VectorXd& candidate,
                              double alpha) {
  if (prev.size() != candidate.size()) throw dimension_error("damped_update: size mismatch");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw config_error("damped_update: alpha must be in (0,1]");
  return alpha * candidate + (1.0 - alpha) * prev;
}

Eigen::VectorXd solve_exciton_step(const Eigen::VectorXd& X_prev, const InterfaceField& indicator,
                                   const ModelParams& prm, const Mesh& mesh,
                                   const LinearSolverConfig& lin,
                                   const PreconditionerSpec& precond) {
  if (X_prev.size() != mesh.num_nodes())
    throw dimension_error("solve_exciton_step: field size mismatch");
  const double tau = prm.tau;
  const SpMat M = assemble_mass(mesh);
  const SpMat K = assemble_stiffness(mesh, Eigen::VectorXd::Ones(mesh.num_nodes()));
  const SpMat W =
      assemble_weighted_mass(mesh, (prm.eta_r + prm.eta_d * indicator.values.array()).matrix());
  const SpMat A = M + (tau * prm.d_X) * K + tau * W;
  const Eigen::VectorXd rhs =
      tau * prm.G * (M * Eigen::VectorXd::Ones(mesh.num_nodes())) + M * X_prev;
  Eigen::VectorXd X = X_prev;
  auto P = build_preconditioner(A, precond);
  const LinearSolveReport rep = gmres_solve(A, rhs, X, *P, lin);
  if (!rep.converged) throw solver_error("solve_exciton_step: linear solve did not converge");
  return X;
}

bool newton_coupled_step(SolverContext& ctx, const DirichletData& bc, const State& prev,
                         const Eigen::VectorXd& n_old, const Eigen::VectorXd& p_old,
                         const Eigen::VectorXd& X_new, State& next, SolveReport& rep) {
  const long N = ctx.mesh->num_nodes();
  // ilu0 works much better on the coupled system when the three unknowns of
  // each node sit next to each other; permute field-major -> node-major
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm(3 * N);
  for (long i = 0; i < N; ++i)
    for (long f = 0; f < 3; ++f) perm.indices()[f * N + i] = static_cast<int>(3 * i + f);

  next = prev;
  next.X = X_new;
  Eigen::VectorXd F;
  SpMat J;
  int max_gmres = 0;
  double f0 = -1.0;
  double fn_prev = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= ctx.cfg.newton_max_iters; ++m) {
    coupled_residual_jacobian(ctx.fem, ctx.fields, ctx.prm, ctx.current_tau, next, n_old, p_old,
                              X_new, bc, F, &J);
    const double fn = F.norm();
    if (f0 < 0.0) f0 = fn;
    if (newton_converged(fn, fn_prev, f0, ctx.cfg, m)) {
      rep.coupled.record(m, max_gmres);
      return true;
    }
    fn_prev = fn;
    if (m == ctx.cfg.newton_max_iters) break;
    const SpMat Jp = perm * J * perm.transpose();
    auto P = build_preconditioner(Jp, ctx.cfg.precond);
    Eigen::VectorXd rhs = perm * (-F);
    Eigen::VectorXd dp = Eigen::VectorXd::Zero(3 * N);
    const LinearSolveReport lrep = gmres_solve(Jp, rhs, dp, *P, ctx.cfg.lin);
    if (!lrep.converged) throw solver_error("newton: coupled linear solve did not converge");
    max_gmres = std::max(max_gmres, lrep.iterations);
    Eigen::VectorXd delta = perm.inverse() * dp;
    clamp_update(delta, ctx.cfg.newton_update_clamp);
    next.psi += delta.segment(0, N);
    next.phi_n += delta.segment(N, N);
    next.phi_p += delta.segment(2 * N, N);
  }
  rep.coupled.record(ctx.cfg.newton_max_iters, max_gmres);
  return false;
}

bool gummel_step(SolverContext& ctx, const DirichletData& bc, const State& prev,
                 const Eigen::VectorXd& n_old, const Eigen::VectorXd& p_old,
                 const Eigen::VectorXd& X_new, State& next, SolveReport& rep) {
  const Mesh& mesh = *ctx.mesh;
  const ModelParams& prm = ctx.prm;
  const double tau = ctx.current_tau;
  const double alpha = ctx.cfg.resolved_alpha();
  const long N = mesh.num_nodes();

  // Poisson from the previous densities
  Eigen::VectorXd rhs = ctx.fem.M * (p_old - n_old);
  eliminate_rhs(prm.eps * ctx.fem.K, rhs, ctx.contact_flags, bc.psi_values);
  Eigen::VectorXd psi_cand = prev.psi;
  int its = solve_or_throw(ctx.A_poisson_lin, rhs, psi_cand, *ctx.P_poisson_lin, ctx.cfg.lin,
                           "gummel poisson");
  rep.poisson.record(0, its);
  next.psi = damped_update(prev.psi, psi_cand, alpha);

  // carrier systems in density unknowns, convection from the damped potential
  const Eigen::MatrixXd grad_psi = element_gradients(mesh, next.psi);
  const double N2 = prm.N_intr * prm.N_intr;

  auto solve_density = [&](bool electron, const Eigen::VectorXd& old_density,
                           const Eigen::VectorXd& react_density, const Eigen::VectorXd& bc_values,
                           EquationStats& stats) {
    SpMat A = carrier_system_matrix(ctx.fem, ctx.fields, prm, tau, electron, grad_psi,
                                    react_density);
    Eigen::VectorXd b = (1.0 / tau) * ctx.fem.lumped.cwiseProduct(old_density) +
                        ctx.fem.diss_lumped.cwiseProduct(X_new) + prm.gamma * N2 * ctx.fem.lumped;
    eliminate_dirichlet(A, b, ctx.contact_flags, bc_values);
    Eigen::VectorXd u = old_density;
    auto P = build_preconditioner(A, ctx.cfg.precond);
    const int gits = solve_or_throw(A, b, u, *P, ctx.cfg.lin,
                                    electron ? "gummel electron" : "gummel hole");
    stats.record(0, gits);
    return u;
  };

  Eigen::VectorXd n_cand = solve_density(true, n_old, p_old, bc.n_values, rep.electron);
  Eigen::VectorXd p_cand = solve_density(false, p_old, n_old, bc.p_values, rep.hole);

  Eigen::VectorXd n_new = damped_update(n_old, n_cand, alpha);
  Eigen::VectorXd p_new = damped_update(p_old, p_cand, alpha);
  // the clip floor must keep the recovered quasi-Fermi exponent inside the
  // +-600 blow-up guard, whatever the configured floor says
  const double floor_n = std::max(ctx.cfg.density_floor,
                                  prm.N_n0 * std::exp(0.5 * prm.sigma_n * prm.sigma_n - 550.0));
  const double floor_p = std::max(ctx.cfg.density_floor,
                                  prm.N_p0 * std::exp(0.5 * prm.sigma_p * prm.sigma_p - 550.0));
  for (long i = 0; i < N; ++i) {
    if (!(n_new[i] >= floor_n)) {
      n_new[i] = floor_n;
      ++rep.stabilization_clips;
    }
    if (!(p_new[i] >= floor_p)) {
      p_new[i] = floor_p;
      ++rep.stabilization_clips;
    }
  }

  next.phi_n = quasi_fermi_from_density(n_new, next.psi, ctx.fields.levels, prm, true);
  next.phi_p = quasi_fermi_from_density(p_new, next.psi, ctx.fields.levels, prm, false);
  next.X = X_new;
  return true;
}

bool semi_newton_gummel_step(SolverContext& ctx, const DirichletData& bc, const State& prev,
                             const Eigen::VectorXd& n_old, const Eigen::VectorXd& p_old,
                             const Eigen::VectorXd& X_new, State& next, SolveReport& rep) {
  const ModelParams& prm = ctx.prm;
  const double alpha = ctx.cfg.resolved_alpha();
  const double tau = ctx.current_tau;

  // Poisson block at frozen quasi-Fermi levels
  Eigen::VectorXd psi_cand = prev.psi;
  bool ok = newton_solve_block(
      psi_cand,
      [&](const Eigen::VectorXd& u, Eigen::VectorXd& F, SpMat& J) {
        poisson_residual_jacobian(ctx.fem, ctx.fields, prm, u, prev.phi_n, prev.phi_p, bc, F, &J);
      },
      ctx.cfg, rep.poisson);
  if (!ok) return false;
  next.psi = damped_update(prev.psi, psi_cand, alpha);

  // electron block at the updated potential, hole density frozen
  Eigen::VectorXd p_frozen(prev.phi_p.size()), n_frozen(prev.phi_n.size());
  for (long i = 0; i < prev.phi_p.size(); ++i) {
    p_frozen[i] = hole_density(next.psi[i], prev.phi_p[i], ctx.fields.levels.homo[i], prm);
    n_frozen[i] = electron_density(next.psi[i], prev.phi_n[i], ctx.fields.levels.lumo[i], prm);
  }

  Eigen::VectorXd phin_cand = prev.phi_n;
  ok = newton_solve_block(
      phin_cand,
      [&](const Eigen::VectorXd& u, Eigen::VectorXd& F, SpMat& J) {
        carrier_residual_jacobian(ctx.fem, ctx.fields, prm, tau, true, next.psi, u, p_frozen,
                                  n_old, X_new, bc, F, &J);
      },
      ctx.cfg, rep.electron);
  if (!ok) return false;
  next.phi_n = damped_update(prev.phi_n, phin_cand, alpha);

  // hole block, electron density frozen at the previous quasi-Fermi level
  Eigen::VectorXd phip_cand = prev.phi_p;
  ok = newton_solve_block(
      phip_cand,
      [&](const Eigen::VectorXd& u, Eigen::VectorXd& F, SpMat& J) {
        carrier_residual_jacobian(ctx.fem, ctx.fields, prm, tau, false, next.psi, u, n_frozen,
                                  p_old, X_new, bc, F, &J);
      },
      ctx.cfg, rep.hole);
  if (!ok) return false;
  next.phi_p = damped_update(prev.phi_p, phip_cand, alpha);

  next.X = X_new;
  return true;
}

SteadyResult advance_to_steady(SolverContext& ctx, State state, double v_top, double v_bot) {
  const DirichletData bc = make_boundary_data(ctx, v_top, v_bot);
  impose_boundary_values(ctx, bc, state);

  SteadyResult out;
  out.report = SolveReport{};
  Eigen::VectorXd n_old, p_old;
  carrier_densities(state.psi, state.phi_n, state.phi_p, ctx.fields.levels, ctx.prm, n_old, p_old);

  State prev = state;
  const int ramp = ctx.cfg.tau_ramp_steps;
  for (long step = 1; step <= ctx.cfg.max_time_steps; ++step) {
    set_time_step(ctx, step <= ramp ? ctx.cfg.tau * std::ldexp(1.0, static_cast<int>(step) - 1 - ramp)
                                    : ctx.cfg.tau);
    // The exciton equation is independent of the electronic unknowns; it is
    // advanced first and its updated field feeds the carrier right sides.
    Eigen::VectorXd X_cand = context_exciton_step(ctx, state.X, out.report);
    Eigen::VectorXd X_new = ctx.cfg.method == Method::Newton
                                ? std::move(X_cand)
                                : damped_update(state.X, X_cand, ctx.cfg.resolved_alpha());

    State next;
    bool ok = false;
    switch (ctx.cfg.method) {
      case Method::Newton:
        ok = newton_coupled_step(ctx, bc, state, n_old, p_old, X_new, next, out.report);
        break;
      case Method::Gummel:
        next = state;
        ok = gummel_step(ctx, bc, state, n_old, p_old, X_new, next, out.report);
        break;
      case Method::SemiNewtonGummel:
        next = state;
        ok = semi_newton_gummel_step(ctx, bc, state, n_old, p_old, X_new, next, out.report);
        break;
    }
    out.report.time_steps = step;
    if (!ok) {
      out.report.converged = false;
      out.state = state;
      out.previous = prev;
      return out;
    }

    Eigen::VectorXd n_new, p_new;
    carrier_densities(next.psi, next.phi_n, next.phi_p, ctx.fields.levels, ctx.prm, n_new, p_new);

    double inc = mass_norm(ctx.fem.M, next.psi - state.psi);
    inc = std::max(inc, mass_norm(ctx.fem.M, n_new - n_old));
    inc = std::max(inc, mass_norm(ctx.fem.M, p_new - p_old));
    inc = std::max(inc, mass_norm(ctx.fem.M, next.X - state.X));
    out.report.final_increment = inc;

    prev = state;
    state = next;
    n_old = std::move(n_new);
    p_old = std::move(p_new);

    if (inc < ctx.cfg.steady_tol && step > ramp) {
      out.report.converged = true;
      break;
    }
  }
  out.state = std::move(state);
  out.previous = std::move(prev);
  return out;
}

IVCurve voltage_sweep(SolverContext& ctx, const SweepConfig& sweep, const SweepObserver& on_point) {
  sweep.validate();
  const std::vector<double> voltages = sweep.voltages();
  IVCurve curve;
  if (voltages.empty()) return curve;

  const AuxWeight w_top = auxiliary_weight(*ctx.mesh, BoundaryTag::TopOrg);
  const AuxWeight w_bot = auxiliary_weight(*ctx.mesh, BoundaryTag::BotOrg);

  State state = initial_state(ctx, make_boundary_data(ctx, voltages.front(), sweep.v_bot));
  for (double v : voltages) {
    SteadyResult res;
    try {
      res = advance_to_steady(ctx, state, v, sweep.v_bot);
    } catch (const divergence_error&) {
      curve.complete = false;
      break;
    } catch (const solver_error&) {
      curve.complete = false;
      break;
    }

    IVPoint pt;
    pt.v_top = v;
    pt.v_bot = sweep.v_bot;
    pt.i_top = terminal_current(*ctx.mesh, ctx.fields, ctx.prm, ctx.cfg.tau, res.previous,
                                res.state, w_top);
    pt.i_bot = terminal_current(*ctx.mesh, ctx.fields, ctx.prm, ctx.cfg.tau, res.previous,
                                res.state, w_bot);
    pt.conservation = conservation_check(pt.i_top, pt.i_bot, 1.0);
    pt.report = res.report;
    curve.points.push_back(pt);
    if (on_point) on_point(pt, res.state);
    if (!res.report.converged) {
      curve.complete = false;
      break;
    }
    state = std::move(res.state);
  }
  return curve;
}

}  // namespace opvfem
