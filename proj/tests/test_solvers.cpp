#include "opvfem/errors.hpp"
#include "opvfem/solvers.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

using namespace opvfem;

namespace {

Mesh grid2(double lx, double ly, int nx, int ny) {
  const std::array<double, 2> e{lx, ly};
  const std::array<int, 2> c{nx, ny};
  return build_structured_mesh(e, c);
}

PhaseField uniform_field(const Mesh& m, double c) {
  PhaseField f;
  f.mesh = &m;
  f.values = Eigen::VectorXd::Constant(m.num_nodes(), c);
  return f;
}

// equilibrium setup shared by the fixed-point tests: uniform blend, zero
// generation, intrinsic concentration matched to the contact densities
struct Equilibrium {
  Mesh mesh;
  ModelParams prm;
  PhaseField phi;
  State state;
  double psi_star = 0, n_eq = 0, p_eq = 0;

  Equilibrium(int n, Method method, double tau) : mesh(grid2(10, 10, n, n)) {
    prm.G = 0.0;
    phi = uniform_field(mesh, 0.4);
    DeviceFields fields = make_device_fields(mesh, phi, prm);
    psi_star = electroneutral_potential(fields.levels.lumo[0], fields.levels.homo[0], prm);
    n_eq = electron_density(psi_star, 0, fields.levels.lumo[0], prm);
    p_eq = hole_density(psi_star, 0, fields.levels.homo[0], prm);
    prm.N_intr = std::sqrt(n_eq * p_eq);
    cfg.method = method;
    cfg.tau = tau;
    const long N = mesh.num_nodes();
    state.psi = Eigen::VectorXd::Constant(N, psi_star);
    state.phi_n = Eigen::VectorXd::Zero(N);
    state.phi_p = Eigen::VectorXd::Zero(N);
    state.X = Eigen::VectorXd::Zero(N);
  }

  NonlinearConfig cfg;
};

double state_update_norm(const SolverContext& ctx, const State& a, const State& b) {
  double m = mass_norm(ctx.fem.M, a.psi - b.psi);
  m = std::max(m, mass_norm(ctx.fem.M, a.phi_n - b.phi_n));
  m = std::max(m, mass_norm(ctx.fem.M, a.phi_p - b.phi_p));
  m = std::max(m, mass_norm(ctx.fem.M, a.X - b.X));
  return m;
}

}  // namespace

TEST_CASE("damped update") {
  Eigen::VectorXd prev(3), cand(3);
  prev << 0, 1, 2;
  cand << 2, 1, 0;
  CHECK((damped_update(prev, cand, 1.0) - cand).norm() == 0.0);
  Eigen::VectorXd half = damped_update(prev, cand, 0.5);
  CHECK(half[0] == doctest::Approx(1.0));
  CHECK(half[2] == doctest::Approx(1.0));
  CHECK(half[1] == doctest::Approx(1.0));  // equal entries stay put
  CHECK_THROWS_AS(damped_update(prev, cand, 0.0), config_error);
  CHECK_THROWS_AS(damped_update(prev, cand, 1.5), config_error);
}

TEST_CASE("exciton step") {
  Mesh m = grid2(10, 10, 5, 5);
  ModelParams prm;  // G = 16990, eta_r = 1

  SUBCASE("constant steady state is a fixed point") {
    InterfaceField ind;
    ind.mesh = &m;
    ind.values = Eigen::VectorXd::Zero(m.num_nodes());
    const double xeq = prm.G / prm.eta_r;
    Eigen::VectorXd X = Eigen::VectorXd::Constant(m.num_nodes(), xeq);
    Eigen::VectorXd X1 = solve_exciton_step(X, ind, prm, m);
    CHECK((X1 - X).lpNorm<Eigen::Infinity>() < 1e-8 * xeq);
  }

  SUBCASE("trajectory follows the scalar relaxation oracle") {
    prm.tau = 1e-3;
    InterfaceField ind;
    ind.mesh = &m;
    ind.values = Eigen::VectorXd::Zero(m.num_nodes());
    Eigen::VectorXd X = Eigen::VectorXd::Zero(m.num_nodes());
    double scalar = 0.0;
    for (int k = 0; k < 400; ++k) {
      X = solve_exciton_step(X, ind, prm, m);
      scalar = (scalar + prm.tau * prm.G) / (1.0 + prm.tau * prm.eta_r);
      if (k % 100 == 99) {
        CHECK(X.minCoeff() == doctest::Approx(scalar).epsilon(1e-7));
        CHECK(X.maxCoeff() == doctest::Approx(scalar).epsilon(1e-7));
      }
    }
  }

  SUBCASE("uniform dissociation shifts the balance to G/(eta_r + eta_d c)") {
    prm.tau = 2e-3;
    InterfaceField ind;
    ind.mesh = &m;
    ind.values = Eigen::VectorXd::Ones(m.num_nodes());  // c = 1
    Eigen::VectorXd X = Eigen::VectorXd::Zero(m.num_nodes());
    double scalar = 0.0;
    const double rate = prm.eta_r + prm.eta_d * 1.0;
    for (int k = 0; k < 4000; ++k) {
      X = solve_exciton_step(X, ind, prm, m);
      scalar = (scalar + prm.tau * prm.G) / (1.0 + prm.tau * rate);
    }
    CHECK(scalar == doctest::Approx(prm.G / rate).epsilon(1e-3));
    for (long i = 0; i < X.size(); ++i) CHECK(X[i] == doctest::Approx(scalar).epsilon(1e-6));
  }
}

TEST_CASE("every method preserves the constructed equilibrium") {
  for (Method method : {Method::Newton, Method::Gummel, Method::SemiNewtonGummel}) {
    CAPTURE(static_cast<int>(method));
    Equilibrium eq(5, method, 1e-4);
    SolverContext ctx = make_solver_context(eq.mesh, eq.phi, eq.prm, eq.cfg);
    const DirichletData bc = make_boundary_data(ctx, 0.0, 0.0);

    Eigen::VectorXd n0, p0;
    carrier_densities(eq.state.psi, eq.state.phi_n, eq.state.phi_p, ctx.fields.levels, ctx.prm,
                      n0, p0);
    SolveReport rep;
    State next = eq.state;
    bool ok = true;
    const Eigen::VectorXd X_new = eq.state.X;  // zero generation keeps X at zero
    switch (method) {
      case Method::Newton:
        ok = newton_coupled_step(ctx, bc, eq.state, n0, p0, X_new, next, rep);
        break;
      case Method::Gummel:
        ok = gummel_step(ctx, bc, eq.state, n0, p0, X_new, next, rep);
        break;
      case Method::SemiNewtonGummel:
        ok = semi_newton_gummel_step(ctx, bc, eq.state, n0, p0, X_new, next, rep);
        break;
    }
    CHECK(ok);
    CHECK(state_update_norm(ctx, next, eq.state) < 1e-10);
  }
}

TEST_CASE("advance_to_steady stops immediately at equilibrium") {
  Equilibrium eq(5, Method::SemiNewtonGummel, 1e-4);
  SolverContext ctx = make_solver_context(eq.mesh, eq.phi, eq.prm, eq.cfg);
  SteadyResult res = advance_to_steady(ctx, eq.state, 0.0, 0.0);
  CHECK(res.report.converged);
  CHECK(res.report.time_steps == 1);
  CHECK(res.report.final_increment <= ctx.cfg.steady_tol);
}

TEST_CASE("gummel pass equals the independent solves in the decoupled limit") {
  Mesh mesh = grid2(10, 10, 6, 6);
  ModelParams prm;
  prm.G = 0.0;
  prm.gamma = 0.0;
  prm.N_intr = 0.0;
  PhaseField phi = uniform_field(mesh, 0.4);
  NonlinearConfig cfg;
  cfg.method = Method::Gummel;
  cfg.alpha = 0.999;  // validation requires (0,1); candidate-passthrough checked separately
  cfg.tau = 0.1;
  SolverContext ctx = make_solver_context(mesh, phi, prm, cfg);
  const DirichletData bc = make_boundary_data(ctx, 0.0, 0.0);

  // non-equilibrium start: perturb the interior quasi-Fermi levels
  State s = initial_state(ctx, bc);
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    if (!ctx.contact_flags[static_cast<std::size_t>(i)]) {
      s.phi_n[i] += 0.05 * std::sin(2.0 * i);
      s.phi_p[i] -= 0.04 * std::cos(3.0 * i);
    }
  }
  Eigen::VectorXd n0, p0;
  carrier_densities(s.psi, s.phi_n, s.phi_p, ctx.fields.levels, ctx.prm, n0, p0);

  SolveReport rep;
  State next = s;
  Eigen::VectorXd X_new = damped_update(
      s.X, solve_exciton_step(s.X, InterfaceField{&mesh, ctx.fields.indicator}, prm, mesh),
      cfg.resolved_alpha());
  REQUIRE(gummel_step(ctx, bc, s, n0, p0, X_new, next, rep));

  // manual composition of the same three linear solves
  const double a = cfg.resolved_alpha();
  Eigen::VectorXd rhs = ctx.fem.M * (p0 - n0);
  {
    std::vector<char> flags = ctx.contact_flags;
    Eigen::VectorXd tmp = rhs;
    SpMat A = prm.eps * ctx.fem.K;
    eliminate_dirichlet(A, tmp, flags, bc.psi_values);
    Eigen::VectorXd psi = s.psi;
    gmres_solve(A, tmp, psi, cfg.precond, cfg.lin);
    Eigen::VectorXd psi_d = damped_update(s.psi, psi, a);
    CHECK((next.psi - psi_d).lpNorm<Eigen::Infinity>() < 1e-12);

    const Eigen::MatrixXd gpsi = element_gradients(mesh, psi_d);
    for (bool electron : {true, false}) {
      SpMat An = carrier_system_matrix(ctx.fem, ctx.fields, prm, cfg.tau, electron, gpsi,
                                       electron ? p0 : n0);
      Eigen::VectorXd b = (1.0 / cfg.tau) * ctx.fem.lumped.cwiseProduct(electron ? n0 : p0) +
                          ctx.fem.diss_lumped.cwiseProduct(X_new);
      eliminate_dirichlet(An, b, flags, electron ? bc.n_values : bc.p_values);
      Eigen::VectorXd u = electron ? n0 : p0;
      gmres_solve(An, b, u, cfg.precond, cfg.lin);
      Eigen::VectorXd u_d = damped_update(electron ? n0 : p0, u, a);
      Eigen::VectorXd phi_rec =
          quasi_fermi_from_density(u_d, psi_d, ctx.fields.levels, prm, electron);
      CHECK(((electron ? next.phi_n : next.phi_p) - phi_rec).lpNorm<Eigen::Infinity>() < 1e-10);
    }
  }
}

TEST_CASE("uniform blend relaxes to the scalar exciton balance under bias-free stepping") {
  Mesh mesh = grid2(10, 10, 6, 6);
  ModelParams prm;  // G = 16990
  PhaseField phi = uniform_field(mesh, 0.5);
  NonlinearConfig cfg;
  cfg.method = Method::SemiNewtonGummel;
  cfg.tau = 0.05;
  cfg.steady_tol = 1e-3;
  SolverContext ctx = make_solver_context(mesh, phi, prm, cfg);
  State s0 = initial_state(ctx, make_boundary_data(ctx, 0.0, 0.0));
  SteadyResult res = advance_to_steady(ctx, s0, 0.0, 0.0);
  REQUIRE(res.report.converged);
  CHECK(res.report.final_increment <= cfg.steady_tol);
  const double xeq = prm.G / prm.eta_r;
  for (long i = 0; i < res.state.X.size(); ++i)
    CHECK(res.state.X[i] == doctest::Approx(xeq).epsilon(2e-3));
  CHECK(res.state.X.minCoeff() > -1e-12);

  SUBCASE("steady state is robust under halving tau") {
    NonlinearConfig cfg2 = cfg;
    cfg2.tau = cfg.tau / 2;
    SolverContext ctx2 = make_solver_context(mesh, phi, prm, cfg2);
    SteadyResult res2 = advance_to_steady(ctx2, s0, 0.0, 0.0);
    REQUIRE(res2.report.converged);
    const double diff = state_update_norm(ctx, res.state, res2.state);
    CHECK(diff < 10.0 * cfg.steady_tol * std::max(1.0, res.state.X.maxCoeff() * 1e-3));
  }
}

TEST_CASE("methods agree on a checkerboard device") {
  Mesh mesh = grid2(10, 10, 12, 12);
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::Checkerboard;
  spec.period = 2.5;
  PhaseField phi = generate_synthetic(spec, mesh);
  ModelParams prm;

  std::vector<State> states;
  for (Method method : {Method::Newton, Method::Gummel, Method::SemiNewtonGummel}) {
    NonlinearConfig cfg;
    cfg.method = method;
    cfg.tau = 0.01;
    cfg.steady_tol = 1e-4;
    cfg.max_time_steps = 500000;
    SolverContext ctx = make_solver_context(mesh, phi, prm, cfg);
    State s0 = initial_state(ctx, make_boundary_data(ctx, 0.1, 0.0));
    SteadyResult res = advance_to_steady(ctx, s0, 0.1, 0.0);
    REQUIRE(res.report.converged);
    CHECK(res.state.X.minCoeff() > -1e-12);
    states.push_back(res.state);
  }

  SolverContext ctx = make_solver_context(mesh, phi, prm, NonlinearConfig{});
  for (std::size_t a = 0; a < states.size(); ++a)
    for (std::size_t b = a + 1; b < states.size(); ++b) {
      Eigen::VectorXd na, pa, nb, pb;
      carrier_densities(states[a].psi, states[a].phi_n, states[a].phi_p, ctx.fields.levels,
                        ctx.prm, na, pa);
      carrier_densities(states[b].psi, states[b].phi_n, states[b].phi_p, ctx.fields.levels,
                        ctx.prm, nb, pb);
      CHECK(mass_norm(ctx.fem.M, states[a].psi - states[b].psi) /
                mass_norm(ctx.fem.M, states[a].psi) <
            1e-3);
      CHECK(mass_norm(ctx.fem.M, na - nb) / mass_norm(ctx.fem.M, na) < 1e-3);
      CHECK(mass_norm(ctx.fem.M, pa - pb) / mass_norm(ctx.fem.M, pa) < 1e-3);
    }
}

TEST_CASE("warm-start jumps shrink linearly with the voltage step") {
  Mesh mesh = grid2(10, 10, 8, 8);
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::Checkerboard;
  spec.period = 2.5;
  PhaseField phi = generate_synthetic(spec, mesh);
  ModelParams prm;
  NonlinearConfig cfg;
  cfg.method = Method::SemiNewtonGummel;
  cfg.tau = 0.01;
  cfg.steady_tol = 1e-5;
  SolverContext ctx = make_solver_context(mesh, phi, prm, cfg);

  State base = initial_state(ctx, make_boundary_data(ctx, 0.2, 0.0));
  SteadyResult at_base = advance_to_steady(ctx, base, 0.2, 0.0);
  REQUIRE(at_base.report.converged);

  SteadyResult full = advance_to_steady(ctx, at_base.state, 0.3, 0.0);
  SteadyResult half = advance_to_steady(ctx, at_base.state, 0.25, 0.0);
  REQUIRE(full.report.converged);
  REQUIRE(half.report.converged);

  const double jump_full = mass_norm(ctx.fem.M, full.state.psi - at_base.state.psi);
  const double jump_half = mass_norm(ctx.fem.M, half.state.psi - at_base.state.psi);
  const double ratio = jump_half / jump_full;
  INFO("ratio ", ratio);
  CHECK(ratio > 0.3);
  CHECK(ratio < 0.7);
}

TEST_CASE("config validation") {
  NonlinearConfig cfg;
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg.alpha = 0.5;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), config_error);

  SweepConfig sw;
  sw.v_step = -1;
  CHECK_THROWS_AS(sw.validate(), config_error);
  sw = SweepConfig{};
  sw.v_start = 0;
  sw.v_stop = 1;
  sw.v_step = 0.5;
  const auto v = sw.voltages();
  REQUIRE(v.size() == 3);
  CHECK(v[2] == doctest::Approx(1.0));
}
