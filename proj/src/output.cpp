#include "opvfem/output.hpp"

#include "opvfem/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace opvfem {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_iv_csv(const IVCurve& curve, const std::string& path) {
  if (curve.points.empty()) throw config_error("write_iv_csv: empty curve");
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "v_top,v_bot,i_top,i_bot,conservation,converged\n";
  for (const auto& p : curve.points)
    out << fmt(p.v_top) << ',' << fmt(p.v_bot) << ',' << fmt(p.i_top) << ',' << fmt(p.i_bot)
        << ',' << fmt(p.conservation) << ',' << (p.report.converged ? 1 : 0) << "\n";
  if (!out) throw io_error("write failed: " + path);
}

void write_vtk(const Mesh& mesh,
               const std::vector<std::pair<std::string, Eigen::VectorXd>>& fields,
               const std::string& path) {
  if (fields.empty()) throw config_error("write_vtk: no fields");
  for (const auto& f : fields)
    if (f.second.size() != mesh.num_nodes())
      throw dimension_error("write_vtk: field '" + f.first + "' size mismatch");

  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "# vtk DataFile Version 3.0\n";
  out << "opvfem fields\n";
  out << "ASCII\n";

  if (mesh.dim == 2) {
    out << "DATASET STRUCTURED_GRID\n";
    out << "DIMENSIONS " << mesh.counts[0] << ' ' << mesh.counts[1] << " 1\n";
    out << "POINTS " << mesh.num_nodes() << " double\n";
    for (int i = 0; i < mesh.num_nodes(); ++i)
      out << fmt(mesh.vertices(i, 0)) << ' ' << fmt(mesh.vertices(i, 1)) << " 0\n";
  } else {
    out << "DATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.num_nodes() << " double\n";
    for (int i = 0; i < mesh.num_nodes(); ++i)
      out << fmt(mesh.vertices(i, 0)) << ' ' << fmt(mesh.vertices(i, 1)) << ' '
          << fmt(mesh.vertices(i, 2)) << "\n";
    out << "CELLS " << mesh.num_cells() << ' ' << 5L * mesh.num_cells() << "\n";
    for (int c = 0; c < mesh.num_cells(); ++c)
      out << "4 " << mesh.cells(c, 0) << ' ' << mesh.cells(c, 1) << ' ' << mesh.cells(c, 2) << ' '
          << mesh.cells(c, 3) << "\n";
    out << "CELL_TYPES " << mesh.num_cells() << "\n";
    for (int c = 0; c < mesh.num_cells(); ++c) out << "10\n";
  }

  out << "POINT_DATA " << mesh.num_nodes() << "\n";
  for (const auto& [name, values] : fields) {
    out << "SCALARS " << name << " double 1\n";
    out << "LOOKUP_TABLE default\n";
    for (long i = 0; i < values.size(); ++i) out << fmt(values[i]) << "\n";
  }
  if (!out) throw io_error("write failed: " + path);
}

void write_report_json(const RunSummary& summary, const std::string& path) {
  nlohmann::json j;
  j["all_converged"] = summary.all_converged;
  j["complete"] = summary.curve.complete;
  j["wall_clock_s"] = summary.wall_clock_s;
  j["outputs"] = summary.outputs;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : summary.curve.points) {
    nlohmann::json e;
    e["v_top"] = p.v_top;
    e["v_bot"] = p.v_bot;
    e["i_top"] = p.i_top;
    e["i_bot"] = p.i_bot;
    e["conservation"] = p.conservation;
    e["converged"] = p.report.converged;
    e["time_steps"] = p.report.time_steps;
    e["final_increment"] = p.report.final_increment;
    e["max_newton"] = p.report.max_newton();
    e["max_gmres"] = p.report.max_gmres();
    e["stabilization_clips"] = p.report.stabilization_clips;
    pts.push_back(e);
  }
  j["points"] = pts;
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw io_error("write failed: " + path);
}

}  // namespace opvfem
