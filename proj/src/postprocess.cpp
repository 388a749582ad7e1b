#include "opvfem/postprocess.hpp"

#include "opvfem/errors.hpp"

#include <algorithm>
#include <cmath>

namespace opvfem {

AuxWeight auxiliary_weight(const Mesh& mesh, BoundaryTag contact) {
  if (contact == BoundaryTag::Ins)
    throw config_error("auxiliary_weight: contact must be TopOrg or BotOrg");
  const BoundaryTag other =
      contact == BoundaryTag::TopOrg ? BoundaryTag::BotOrg : BoundaryTag::TopOrg;

  AssembledSystem sys;
  sys.matrix = assemble_stiffness(mesh, 1.0);
  sys.rhs = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int v : boundary_nodes(mesh, contact)) sys.dirichlet_nodes.push_back(v);
  const std::size_t n_one = sys.dirichlet_nodes.size();
  for (int v : boundary_nodes(mesh, other)) sys.dirichlet_nodes.push_back(v);
  sys.dirichlet_values.resize(static_cast<long>(sys.dirichlet_nodes.size()));
  sys.dirichlet_values.setZero();
  sys.dirichlet_values.head(static_cast<long>(n_one)).setOnes();

  apply_dirichlet(sys);

  auto P = build_preconditioner(sys.matrix, {PrecondKind::Ilu0});
  LinearSolverConfig cfg;
  cfg.rtol = 1e-14;
  cfg.atol = 1e-300;  // drive to the numerical floor; stagnation stops the solve
  cfg.max_iters = 20000;
  cfg.restart = 200;

  AuxWeight w;
  w.contact = contact;
  w.values = Eigen::VectorXd::Zero(mesh.num_nodes());
  gmres_solve(sys.matrix, sys.rhs, w.values, *P, cfg);
  // one refinement pass squeezes out the remaining solver error
  Eigen::VectorXd r = sys.rhs - sys.matrix * w.values;
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(mesh.num_nodes());
  gmres_solve(sys.matrix, r, dx, *P, cfg);
  w.values += dx;
  return w;
}

double terminal_current(const Mesh& mesh, const DeviceFields& fields, const ModelParams& prm,
                        double tau, const State& prev, const State& cur, const AuxWeight& w) {
  const int d = mesh.dim;
  Eigen::VectorXd n, p;
  carrier_densities(cur.psi, cur.phi_n, cur.phi_p, fields.levels, prm, n, p);

  const Eigen::MatrixXd grad_w = element_gradients(mesh, w.values);
  const Eigen::MatrixXd grad_n = element_gradients(mesh, n);
  const Eigen::MatrixXd grad_p = element_gradients(mesh, p);
  const Eigen::MatrixXd grad_psi = element_gradients(mesh, cur.psi);
  const Eigen::MatrixXd grad_psi_old = element_gradients(mesh, prev.psi);

  double transport = 0.0, displacement = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    double nbar = 0.0, pbar = 0.0;
    for (int i = 0; i <= d; ++i) {
      nbar += n[mesh.cells(c, i)];
      pbar += p[mesh.cells(c, i)];
    }
    nbar /= (d + 1);
    pbar /= (d + 1);
    const auto dln = grad_psi.row(c) - fields.grad_lumo.row(c);
    const auto dhp = grad_psi.row(c) - fields.grad_homo.row(c);
    // j_n = mu_n grad n - mu_n n (grad psi - grad E_L)
    // j_p = -mu_p grad p - mu_p p (grad psi - grad E_H)
    const Eigen::RowVectorXd jn = prm.mu_n * grad_n.row(c) - prm.mu_n * nbar * dln;
    const Eigen::RowVectorXd jp = -prm.mu_p * grad_p.row(c) - prm.mu_p * pbar * dhp;
    const double vol = mesh.cell_volumes[c];
    transport += vol * grad_w.row(c).dot(jn + jp);
    displacement +=
        vol * prm.eps / tau * grad_w.row(c).dot(grad_psi.row(c) - grad_psi_old.row(c));
  }
  return transport + displacement;
}

double conservation_check(double i_top, double i_bot, double abs_floor) {
  if (!std::isfinite(i_top) || !std::isfinite(i_bot))
    throw std::domain_error("conservation_check: non-finite current");
  return std::abs(i_top + i_bot) / std::max({std::abs(i_top), std::abs(i_bot), abs_floor});
}

DeviceMetrics extract_metrics(const IVCurve& curve) {
  if (curve.points.empty()) throw config_error("extract_metrics: empty curve");
  DeviceMetrics m;

  auto interpolate_at = [&](double v) -> std::optional<double> {
    for (std::size_t k = 0; k + 1 < curve.points.size(); ++k) {
      const auto& a = curve.points[k];
      const auto& b = curve.points[k + 1];
      if ((a.v_top - v) * (b.v_top - v) <= 0.0) {
        const double t = (v - a.v_top) / (b.v_top - a.v_top);
        return a.i_bot + t * (b.i_bot - a.i_bot);
      }
    }
    if (curve.points.size() == 1 && curve.points[0].v_top == v) return curve.points[0].i_bot;
    return std::nullopt;
  };
  m.j_sc = interpolate_at(0.0);

  for (std::size_t k = 0; k + 1 < curve.points.size(); ++k) {
    const auto& a = curve.points[k];
    const auto& b = curve.points[k + 1];
    if (a.i_bot == 0.0) {
      m.v_oc = a.v_top;
      break;
    }
    if (a.i_bot * b.i_bot < 0.0) {
      m.v_oc = a.v_top - a.i_bot * (b.v_top - a.v_top) / (b.i_bot - a.i_bot);
      break;
    }
  }
  if (!m.v_oc && !curve.points.empty() && curve.points.back().i_bot == 0.0)
    m.v_oc = curve.points.back().v_top;

  if (m.v_oc && m.j_sc && *m.j_sc != 0.0 && *m.v_oc != 0.0) {
    double max_power = 0.0;
    for (const auto& pt : curve.points) max_power = std::max(max_power, std::abs(pt.v_top * pt.i_bot));
    m.ff = max_power / std::abs(*m.v_oc * *m.j_sc);
  }
  return m;
}

}  // namespace opvfem
