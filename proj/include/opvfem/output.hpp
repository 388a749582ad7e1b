#pragma once

#include "opvfem/mesh.hpp"
#include "opvfem/postprocess.hpp"

#include <string>
#include <utility>
#include <vector>

namespace opvfem {

/// CSV with header v_top,v_bot,i_top,i_bot,conservation,converged and one row
/// per sweep point; floats in full round-trip precision.
void write_iv_csv(const IVCurve& curve, const std::string& path);

/// Legacy ASCII VTK: STRUCTURED_GRID in 2D, UNSTRUCTURED_GRID (tetrahedra)
/// in 3D, one POINT_DATA scalar array per named field.
void write_vtk(const Mesh& mesh,
               const std::vector<std::pair<std::string, Eigen::VectorXd>>& fields,
               const std::string& path);

struct RunSummary {
  IVCurve curve;
  std::vector<std::string> outputs;  // files written, in order
  double wall_clock_s = 0;
  bool all_converged = false;
};

void write_report_json(const RunSummary& summary, const std::string& path);

}  // namespace opvfem
