#include "opvfem/assembly.hpp"
#include "opvfem/errors.hpp"
#include "opvfem/linsolve.hpp"
#include "opvfem/solvers.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

using namespace opvfem;

namespace {

Mesh grid2(double lx, double ly, int nx, int ny) {
  const std::array<double, 2> e{lx, ly};
  const std::array<int, 2> c{nx, ny};
  return build_structured_mesh(e, c);
}

Mesh unit_right_triangle() {
  Mesh m;
  m.dim = 2;
  m.extent = {1, 1, 0};
  m.counts = {2, 2, 1};
  m.vertices.resize(3, 2);
  m.vertices << 0, 0, 1, 0, 0, 1;
  m.cells.resize(1, 3);
  m.cells << 0, 1, 2;
  compute_cell_geometry(m);
  return m;
}

Eigen::MatrixXd dense(const SpMat& A) { return Eigen::MatrixXd(A); }

}  // namespace

TEST_CASE("mass matrix") {
  SUBCASE("entries sum to the domain measure") {
    Mesh m = grid2(10, 10, 5, 4);
    CHECK(dense(assemble_mass(m)).sum() == doctest::Approx(100.0).epsilon(1e-12));
  }
  SUBCASE("closed form on the reference triangle") {
    Mesh m = unit_right_triangle();
    Eigen::MatrixXd M = dense(assemble_mass(m));
    const double s = 0.5 / 12.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(M(i, j) == doctest::Approx(s * (i == j ? 2 : 1)));
  }
  SUBCASE("symmetric") {
    Mesh m = grid2(3, 7, 4, 6);
    Eigen::MatrixXd M = dense(assemble_mass(m));
    CHECK((M - M.transpose()).norm() == 0.0);
  }
}

TEST_CASE("stiffness matrix") {
  SUBCASE("rows annihilate constants") {
    Mesh m = grid2(10, 10, 6, 6);
    Eigen::VectorXd rowsum = assemble_stiffness(m, 1.0) * Eigen::VectorXd::Ones(m.num_nodes());
    CHECK(rowsum.lpNorm<Eigen::Infinity>() < 1e-13);
  }
  SUBCASE("closed form on the reference triangle") {
    Mesh m = unit_right_triangle();
    Eigen::MatrixXd K = dense(assemble_stiffness(m, 1.0));
    Eigen::MatrixXd expect(3, 3);
    expect << 2, -1, -1, -1, 1, 0, -1, 0, 1;
    expect *= 0.5;
    CHECK((K - expect).lpNorm<Eigen::Infinity>() < 1e-14);
  }
  SUBCASE("positive definite after one Dirichlet node") {
    Mesh m = grid2(10, 10, 4, 4);
    AssembledSystem sys;
    sys.matrix = assemble_stiffness(m, 1.0);
    sys.rhs = Eigen::VectorXd::Zero(m.num_nodes());
    sys.dirichlet_nodes = {0};
    sys.dirichlet_values = Eigen::VectorXd::Zero(1);
    apply_dirichlet(sys);
    Eigen::MatrixXd A = dense(sys.matrix);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (A + A.transpose()));
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("convection matrix") {
  Mesh m = unit_right_triangle();
  SUBCASE("zero drift") {
    Eigen::MatrixXd drift = Eigen::MatrixXd::Zero(1, 2);
    CHECK(dense(assemble_convection(m, drift)).norm() == 0.0);
  }
  SUBCASE("constant drift, hand quadrature") {
    Eigen::MatrixXd drift(1, 2);
    drift << 2.0, -1.0;
    Eigen::MatrixXd C = dense(assemble_convection(m, drift));
    const ElementGeometry g = element_geometry(m, 0);
    for (int j = 0; j < 3; ++j) {
      const double expect = (drift.row(0).dot(g.grad_basis.row(j))) * g.volume / 3.0;
      for (int i = 0; i < 3; ++i) CHECK(C(i, j) == doctest::Approx(expect).epsilon(1e-14));
    }
  }
  SUBCASE("annihilates constants (partition of unity)") {
    Mesh g10 = grid2(10, 10, 7, 5);
    Eigen::MatrixXd drift = Eigen::MatrixXd::Random(g10.num_cells(), 2);
    Eigen::VectorXd r = assemble_convection(g10, drift) * Eigen::VectorXd::Ones(g10.num_nodes());
    CHECK(r.lpNorm<Eigen::Infinity>() < 1e-13);
  }
}

TEST_CASE("weighted mass matrix") {
  Mesh m = grid2(10, 10, 5, 5);
  SUBCASE("unit weight reproduces the mass matrix exactly") {
    Eigen::MatrixXd W = dense(assemble_weighted_mass(m, Eigen::VectorXd::Ones(m.num_nodes())));
    Eigen::MatrixXd M = dense(assemble_mass(m));
    CHECK((W - M).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("linear in the weight") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-2, 2);
    Eigen::VectorXd a(m.num_nodes()), b(m.num_nodes());
    for (long i = 0; i < a.size(); ++i) {
      a[i] = uni(rng);
      b[i] = uni(rng);
    }
    Eigen::MatrixXd lhs = dense(assemble_weighted_mass(m, 1.5 * a + 2.5 * b));
    Eigen::MatrixXd rhs = 1.5 * dense(assemble_weighted_mass(m, a)) +
                          2.5 * dense(assemble_weighted_mass(m, b));
    CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((dense(assemble_weighted_mass(m, 2.0 * Eigen::VectorXd::Ones(m.num_nodes()))) -
           2.0 * dense(assemble_mass(m)))
              .lpNorm<Eigen::Infinity>() < 1e-14);
  }
  SUBCASE("hat-function weight against exact monomial integrals") {
    Mesh t = unit_right_triangle();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
    w[0] = 1.0;  // weight = zeta_0
    Eigen::MatrixXd W = dense(assemble_weighted_mass(t, w));
    const double V = 0.5;
    // int zeta_0 zeta_i zeta_j: V/10 (i=j=0), V/30 (i=j!=0 or one index 0), V/60 (else)
    CHECK(W(0, 0) == doctest::Approx(V / 10.0));
    CHECK(W(1, 1) == doctest::Approx(V / 30.0));
    CHECK(W(2, 2) == doctest::Approx(V / 30.0));
    CHECK(W(0, 1) == doctest::Approx(V / 30.0));
    CHECK(W(0, 2) == doctest::Approx(V / 30.0));
    CHECK(W(1, 2) == doctest::Approx(V / 60.0));
  }
}

TEST_CASE("load vector") {
  Mesh m = grid2(1, 1, 6, 7);
  SUBCASE("constant source integrates to G times the measure") {
    const double G = 16990.0;
    Eigen::VectorXd b = assemble_load(m, Eigen::VectorXd::Constant(m.num_nodes(), G));
    CHECK(b.sum() == doctest::Approx(G * 1.0).epsilon(1e-12));
  }
  SUBCASE("zero source") {
    CHECK(assemble_load(m, Eigen::VectorXd::Zero(m.num_nodes())).norm() == 0.0);
  }
  SUBCASE("coordinate source integrates exactly") {
    Eigen::VectorXd x = m.vertices.col(0);
    CHECK(assemble_load(m, x).sum() == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("dirichlet elimination") {
  SUBCASE("linear solution on a strip is reproduced exactly") {
    Mesh m = grid2(1, 4, 3, 9);
    AssembledSystem sys;
    sys.matrix = assemble_stiffness(m, 1.0);
    sys.rhs = Eigen::VectorXd::Zero(m.num_nodes());
    for (int v : boundary_nodes(m, BoundaryTag::BotOrg)) {
      sys.dirichlet_nodes.push_back(v);
    }
    for (int v : boundary_nodes(m, BoundaryTag::TopOrg)) {
      sys.dirichlet_nodes.push_back(v);
    }
    sys.dirichlet_values.resize(static_cast<long>(sys.dirichlet_nodes.size()));
    for (std::size_t k = 0; k < sys.dirichlet_nodes.size(); ++k)
      sys.dirichlet_values[static_cast<long>(k)] =
          m.vertices(sys.dirichlet_nodes[k], 1) > 2.0 ? 1.0 : 0.0;
    apply_dirichlet(sys);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(m.num_nodes());
    LinearSolverConfig lin;
    lin.rtol = 1e-14;
    lin.atol = 1e-16;
    lin.max_iters = 2000;
    gmres_solve(sys.matrix, sys.rhs, x, {PrecondKind::Ilu0}, lin);
    for (int i = 0; i < m.num_nodes(); ++i)
      CHECK(std::abs(x[i] - m.vertices(i, 1) / 4.0) < 1e-12);
  }
  SUBCASE("all nodes constrained leaves the identity") {
    Mesh m = grid2(1, 1, 3, 3);
    AssembledSystem sys;
    sys.matrix = assemble_stiffness(m, 1.0);
    sys.rhs = Eigen::VectorXd::Zero(m.num_nodes());
    for (int i = 0; i < m.num_nodes(); ++i) sys.dirichlet_nodes.push_back(i);
    sys.dirichlet_values = Eigen::VectorXd::LinSpaced(m.num_nodes(), 0, 1);
    apply_dirichlet(sys);
    CHECK((dense(sys.matrix) - Eigen::MatrixXd::Identity(m.num_nodes(), m.num_nodes())).norm() ==
          0.0);
    CHECK((sys.rhs - sys.dirichlet_values).norm() == 0.0);
  }
  SUBCASE("matches the dense saddle-point oracle") {
    Mesh m = grid2(2, 2, 3, 3);
    const int N = m.num_nodes();
    SpMat A = assemble_stiffness(m, 1.0);
    SpMat Msp = assemble_mass(m);
    A = SpMat(A + 0.3 * Msp);  // make it invertible without constraints too
    Eigen::VectorXd b(N);
    for (int i = 0; i < N; ++i) b[i] = std::sin(1.7 * i);

    std::vector<int> cons = boundary_nodes(m, BoundaryTag::TopOrg);
    for (int v : boundary_nodes(m, BoundaryTag::BotOrg)) cons.push_back(v);
    const int nc = static_cast<int>(cons.size());
    Eigen::VectorXd g(nc);
    for (int k = 0; k < nc; ++k) g[k] = 0.25 * cons[static_cast<std::size_t>(k)];

    Eigen::MatrixXd KKT = Eigen::MatrixXd::Zero(N + nc, N + nc);
    KKT.topLeftCorner(N, N) = dense(A);
    for (int k = 0; k < nc; ++k) {
      KKT(N + k, cons[static_cast<std::size_t>(k)]) = 1.0;
      KKT(cons[static_cast<std::size_t>(k)], N + k) = 1.0;
    }
    Eigen::VectorXd rhs(N + nc);
    rhs << b, g;
    Eigen::VectorXd saddle = KKT.fullPivLu().solve(rhs);

    AssembledSystem sys;
    sys.matrix = A;
    sys.rhs = b;
    sys.dirichlet_nodes = cons;
    sys.dirichlet_values = g;
    apply_dirichlet(sys);
    Eigen::VectorXd x = dense(sys.matrix).fullPivLu().solve(sys.rhs);
    CHECK((x - saddle.head(N)).lpNorm<Eigen::Infinity>() < 1e-11);
  }
}

TEST_CASE("flux forms agree at second order under refinement") {
  // The quasi-Fermi and drift-diffusion forms of the electron flux are
  // algebraically identical for n = exp of the P1 exponent; assembled with
  // nodal interpolation their residual functionals differ by a quadrature
  // error that is second order against smooth test functions.
  const ModelParams prm;
  std::vector<double> errs;
  for (int n : {9, 17, 33, 65}) {
    Mesh m = grid2(10, 10, n, n);
    const long N = m.num_nodes();
    Eigen::VectorXd psi(N), phi_n(N), phival(N), w(N);
    for (long i = 0; i < N; ++i) {
      const double x = m.vertices(i, 0), y = m.vertices(i, 1);
      psi[i] = 0.5 * std::sin(2 * M_PI * x / 10) * std::cos(M_PI * y / 10);
      phi_n[i] = 0.3 * std::cos(M_PI * x / 10) + 0.05 * y;
      phival[i] = 0.5 + 0.5 * std::sin(M_PI * x / 10) * std::sin(M_PI * y / 10);
      w[i] = std::cos(M_PI * x / 10) * std::sin(M_PI * y / 10);
    }
    PhaseField pf;
    pf.mesh = &m;
    pf.values = phival;
    EnergyLevels lv = energy_levels(pf, prm);
    Eigen::VectorXd n_nodal(N);
    for (long i = 0; i < N; ++i)
      n_nodal[i] = electron_density(psi[i], phi_n[i], lv.lumo[i], prm);

    const SpMat K = assemble_stiffness(m, Eigen::VectorXd::Ones(N));
    const SpMat Kw = assemble_stiffness(m, n_nodal);
    const Eigen::VectorXd quasi_fermi_form = -prm.mu_n * (Kw * phi_n);
    const Eigen::VectorXd drift_diffusion_form =
        prm.mu_n * (K * n_nodal) - prm.mu_n * (Kw * (psi - lv.lumo));
    errs.push_back(std::abs((drift_diffusion_form - quasi_fermi_form).dot(w)));
  }
  for (std::size_t k = 1; k < errs.size(); ++k) {
    const double rate = std::log2(errs[k - 1] / errs[k]);
    INFO("refinement ", k, " rate ", rate);
    CHECK(rate >= 1.8);
  }
}

namespace {

struct JacobianProbe {
  Mesh mesh;
  DeviceFields fields;
  FemCache fem;
  ModelParams prm;
  DirichletData bc;
  State state;
  Eigen::VectorXd n_old, p_old, X_new;
  double tau = 1e-3;

  explicit JacobianProbe(std::uint64_t seed) : mesh(grid2(10, 10, 4, 4)) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-0.6, 0.6);
    const long N = mesh.num_nodes();
    prm = ModelParams{};
    prm.N_intr = 0.3;

    PhaseField pf;
    pf.mesh = &mesh;
    pf.values.resize(N);
    for (long i = 0; i < N; ++i) pf.values[i] = 0.5 + 0.4 * std::sin(3.0 * i);
    fields = make_device_fields(mesh, pf, prm);
    fem = build_fem_cache(mesh, fields, prm);

    state.psi.resize(N);
    state.phi_n.resize(N);
    state.phi_p.resize(N);
    for (long i = 0; i < N; ++i) {
      state.psi[i] = -4.5 + uni(rng);
      state.phi_n[i] = uni(rng);
      state.phi_p[i] = uni(rng);
    }
    state.X = Eigen::VectorXd::Constant(N, 2.0);
    X_new = state.X;
    n_old.resize(N);
    p_old.resize(N);
    for (long i = 0; i < N; ++i) {
      n_old[i] = 0.5 + 0.2 * std::cos(2.0 * i);
      p_old[i] = 0.4 + 0.2 * std::sin(1.0 + i);
    }

    bc.nodes = boundary_nodes(mesh, BoundaryTag::TopOrg);
    for (int v : boundary_nodes(mesh, BoundaryTag::BotOrg)) bc.nodes.push_back(v);
    bc.psi_values = state.psi;
    bc.phi_values = state.phi_n;
    // keep both quasi-Fermi levels consistent with the shared boundary value
    for (int v : bc.nodes) state.phi_p[v] = state.phi_n[v];
    bc.n_values = Eigen::VectorXd::Zero(N);
    bc.p_values = Eigen::VectorXd::Zero(N);
  }

  Eigen::VectorXd residual(const State& s) const {
    Eigen::VectorXd F;
    coupled_residual_jacobian(fem, fields, prm, tau, s, n_old, p_old, X_new, bc, F, nullptr);
    return F;
  }
};

}  // namespace

TEST_CASE("coupled Jacobian matches central finite differences") {
  JacobianProbe probe(42);
  const long N = probe.mesh.num_nodes();

  Eigen::VectorXd F;
  SpMat J;
  coupled_residual_jacobian(probe.fem, probe.fields, probe.prm, probe.tau, probe.state,
                            probe.n_old, probe.p_old, probe.X_new, probe.bc, F, &J);
  Eigen::MatrixXd Jd = dense(J);

  std::vector<char> is_contact(static_cast<std::size_t>(N), 0);
  for (int v : probe.bc.nodes) is_contact[static_cast<std::size_t>(v)] = 1;

  const double h = 1e-6;
  for (long j = 0; j < 3 * N; ++j) {
    if (is_contact[static_cast<std::size_t>(j % N)]) continue;  // free columns only
    State sp = probe.state, sm = probe.state;
    auto& up = (j < N) ? sp.psi : (j < 2 * N ? sp.phi_n : sp.phi_p);
    auto& um = (j < N) ? sm.psi : (j < 2 * N ? sm.phi_n : sm.phi_p);
    up[j % N] += h;
    um[j % N] -= h;
    const Eigen::VectorXd col = (probe.residual(sp) - probe.residual(sm)) / (2 * h);
    const double scale = col.lpNorm<Eigen::Infinity>();
    for (long i = 0; i < 3 * N; ++i) {
      const double err = std::abs(Jd(i, j) - col[i]);
      CHECK(err <= 1e-5 * std::max({std::abs(Jd(i, j)), std::abs(col[i])}) + 1e-8 * scale);
    }
  }
}

TEST_CASE("single-equation Jacobians match finite differences") {
  JacobianProbe probe(7);
  const long N = probe.mesh.num_nodes();
  std::vector<char> is_contact(static_cast<std::size_t>(N), 0);
  for (int v : probe.bc.nodes) is_contact[static_cast<std::size_t>(v)] = 1;
  const double h = 1e-6;

  SUBCASE("poisson block") {
    Eigen::VectorXd F;
    SpMat J;
    poisson_residual_jacobian(probe.fem, probe.fields, probe.prm, probe.state.psi,
                              probe.state.phi_n, probe.state.phi_p, probe.bc, F, &J);
    Eigen::MatrixXd Jd = dense(J);
    for (long j = 0; j < N; ++j) {
      if (is_contact[static_cast<std::size_t>(j)]) continue;
      Eigen::VectorXd up = probe.state.psi, um = probe.state.psi;
      up[j] += h;
      um[j] -= h;
      Eigen::VectorXd Fp, Fm;
      poisson_residual_jacobian(probe.fem, probe.fields, probe.prm, up, probe.state.phi_n,
                                probe.state.phi_p, probe.bc, Fp, nullptr);
      poisson_residual_jacobian(probe.fem, probe.fields, probe.prm, um, probe.state.phi_n,
                                probe.state.phi_p, probe.bc, Fm, nullptr);
      const Eigen::VectorXd col = (Fp - Fm) / (2 * h);
      for (long i = 0; i < N; ++i)
        CHECK(std::abs(Jd(i, j) - col[i]) <=
              1e-5 * std::max(std::abs(Jd(i, j)), std::abs(col[i])) +
                  1e-8 * col.lpNorm<Eigen::Infinity>());
    }
  }

  SUBCASE("carrier blocks") {
    for (bool electron : {true, false}) {
      const Eigen::VectorXd& phi = electron ? probe.state.phi_n : probe.state.phi_p;
      const Eigen::VectorXd other = electron ? probe.p_old : probe.n_old;
      const Eigen::VectorXd old = electron ? probe.n_old : probe.p_old;
      Eigen::VectorXd F;
      SpMat J;
      carrier_residual_jacobian(probe.fem, probe.fields, probe.prm, probe.tau, electron,
                                probe.state.psi, phi, other, old, probe.X_new, probe.bc, F, &J);
      Eigen::MatrixXd Jd = dense(J);
      for (long j = 0; j < N; ++j) {
        if (is_contact[static_cast<std::size_t>(j)]) continue;
        Eigen::VectorXd up = phi, um = phi;
        up[j] += h;
        um[j] -= h;
        Eigen::VectorXd Fp, Fm;
        carrier_residual_jacobian(probe.fem, probe.fields, probe.prm, probe.tau, electron,
                                  probe.state.psi, up, other, old, probe.X_new, probe.bc, Fp,
                                  nullptr);
        carrier_residual_jacobian(probe.fem, probe.fields, probe.prm, probe.tau, electron,
                                  probe.state.psi, um, other, old, probe.X_new, probe.bc, Fm,
                                  nullptr);
        const Eigen::VectorXd col = (Fp - Fm) / (2 * h);
        for (long i = 0; i < N; ++i)
          CHECK(std::abs(Jd(i, j) - col[i]) <=
                1e-5 * std::max(std::abs(Jd(i, j)), std::abs(col[i])) +
                    1e-8 * col.lpNorm<Eigen::Infinity>());
      }
    }
  }
}

TEST_CASE("constructed equilibrium is a discrete fixed point") {
  Mesh m = grid2(10, 10, 5, 5);
  const long N = m.num_nodes();
  ModelParams prm;
  prm.G = 0.0;
  PhaseField pf;
  pf.mesh = &m;
  pf.values = Eigen::VectorXd::Constant(N, 0.4);
  DeviceFields fields = make_device_fields(m, pf, prm);
  const double ps = electroneutral_potential(fields.levels.lumo[0], fields.levels.homo[0], prm);
  const double ne = electron_density(ps, 0, fields.levels.lumo[0], prm);
  const double pe = hole_density(ps, 0, fields.levels.homo[0], prm);
  prm.N_intr = std::sqrt(ne * pe);
  FemCache fem = build_fem_cache(m, fields, prm);

  State s;
  s.psi = Eigen::VectorXd::Constant(N, ps);
  s.phi_n = Eigen::VectorXd::Zero(N);
  s.phi_p = Eigen::VectorXd::Zero(N);
  s.X = Eigen::VectorXd::Zero(N);

  DirichletData bc;
  bc.nodes = boundary_nodes(m, BoundaryTag::TopOrg);
  for (int v : boundary_nodes(m, BoundaryTag::BotOrg)) bc.nodes.push_back(v);
  bc.psi_values = Eigen::VectorXd::Constant(N, ps);
  bc.phi_values = Eigen::VectorXd::Zero(N);
  bc.n_values = Eigen::VectorXd::Constant(N, ne);
  bc.p_values = Eigen::VectorXd::Constant(N, pe);

  Eigen::VectorXd n0 = Eigen::VectorXd::Constant(N, ne);
  Eigen::VectorXd p0 = Eigen::VectorXd::Constant(N, pe);
  Eigen::VectorXd F;
  coupled_residual_jacobian(fem, fields, prm, 1.0, s, n0, p0, s.X, bc, F, nullptr);
  CHECK(F.lpNorm<Eigen::Infinity>() < 1e-12);
}
