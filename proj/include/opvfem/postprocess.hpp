#pragma once

#include "opvfem/assembly.hpp"
#include "opvfem/linsolve.hpp"
#include "opvfem/report.hpp"

#include <optional>
#include <vector>

namespace opvfem {

/// Discrete harmonic weight: 1 on the chosen contact, 0 on the other one,
/// no-flux on the insulated boundary. Converts the boundary current integral
/// into a volume integral.
struct AuxWeight {
  BoundaryTag contact = BoundaryTag::TopOrg;
  Eigen::VectorXd values;
};

/// Solved with a tightly converged GMRES plus iterative refinement, so the
/// nodal values of exactly representable solutions are accurate to near
/// machine precision.
AuxWeight auxiliary_weight(const Mesh& mesh, BoundaryTag contact);

/// Terminal current out of the weight's contact at the end of a step:
/// transport fluxes in drift-diffusion form plus the displacement term
/// (1/tau) int grad(w) . eps (grad psi_new - grad psi_old).
double terminal_current(const Mesh& mesh, const DeviceFields& fields, const ModelParams& prm,
                        double tau, const State& prev, const State& cur, const AuxWeight& w);

/// |i_top + i_bot| / max(|i_top|, |i_bot|, abs_floor)
double conservation_check(double i_top, double i_bot, double abs_floor);

struct IVPoint {
  double v_top = 0, v_bot = 0;
  double i_top = 0, i_bot = 0;
  double conservation = 0;
  SolveReport report;
};

struct IVCurve {
  std::vector<IVPoint> points;  // voltages strictly increasing
  bool complete = true;         // false when the sweep aborted at a point
};

struct DeviceMetrics {
  std::optional<double> v_oc;  // zero crossing of the bottom-contact current
  std::optional<double> j_sc;  // bottom-contact current at zero bias
  std::optional<double> ff;    // max power rectangle over recorded points
};

DeviceMetrics extract_metrics(const IVCurve& curve);

}  // namespace opvfem
