#include "opvfem/run.hpp"

#include "opvfem/errors.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

namespace opvfem {

namespace fs = std::filesystem;

std::string resolve_output_dir(const std::string& configured) {
  fs::path p(configured);
  if (p.is_absolute()) return p.string();
  if (const char* root = std::getenv("OPVFEM_OUTPUT_ROOT"))
    return (fs::path(root) / p).string();
  return p.string();
}

Mesh build_mesh(const MeshSection& ms) {
  return build_structured_mesh(std::span<const double>(ms.extent),
                               std::span<const int>(ms.counts));
}

PhaseField obtain_morphology(const RunConfig& cfg, const Mesh& mesh) {
  if (cfg.morphology.from_file) return load_phase_field(cfg.morphology.path, mesh);
  return generate_synthetic(cfg.morphology.synth, mesh);
}

namespace {

std::string voltage_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

RunSummary run_simulate(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();

  const std::string dir = resolve_output_dir(cfg.output.directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory " + dir + ": " + ec.message());

  const Mesh mesh = build_mesh(cfg.mesh);
  const PhaseField phi = obtain_morphology(cfg, mesh);
  SolverContext ctx = make_solver_context(mesh, phi, cfg.params, cfg.solver);

  RunSummary summary;
  auto snapshot_requested = [&](double v) {
    for (double s : cfg.output.snapshots)
      if (std::abs(s - v) <= 1e-9 * std::max(1.0, std::abs(v))) return true;
    return false;
  };

  SweepObserver observer = [&](const IVPoint& pt, const State& state) {
    std::printf("V_top=%-8g steps=%-7ld newton<=%-3d gmres<=%-3d I_top=% .6e I_bot=% .6e cons=%.2e%s\n",
                pt.v_top, pt.report.time_steps, pt.report.max_newton(), pt.report.max_gmres(),
                pt.i_top, pt.i_bot, pt.conservation, pt.report.converged ? "" : "  [NOT CONVERGED]");
    std::fflush(stdout);
    if (cfg.output.vtk && snapshot_requested(pt.v_top)) {
      Eigen::VectorXd n, p;
      carrier_densities(state.psi, state.phi_n, state.phi_p, ctx.fields.levels, ctx.prm, n, p);
      const std::string path = dir + "/fields_v" + voltage_label(pt.v_top) + ".vtk";
      write_vtk(mesh,
                {{"phi", phi.values}, {"psi", state.psi}, {"n", n}, {"p", p}, {"X", state.X}},
                path);
      summary.outputs.push_back(path);
    }
  };

  summary.curve = voltage_sweep(ctx, cfg.sweep, observer);

  if (cfg.output.csv && !summary.curve.points.empty()) {
    const std::string csv = dir + "/iv.csv";
    write_iv_csv(summary.curve, csv);
    summary.outputs.push_back(csv);
  }

  summary.all_converged = summary.curve.complete && !summary.curve.points.empty();
  for (const auto& p : summary.curve.points)
    summary.all_converged = summary.all_converged && p.report.converged;

  long clips = 0;
  for (const auto& p : summary.curve.points) clips += p.report.stabilization_clips;
  if (clips > 0)
    std::fprintf(stderr, "[opvfem] %ld density-floor stabilization events during the sweep\n",
                 clips);

  summary.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string report = dir + "/report.json";
  write_report_json(summary, report);
  summary.outputs.push_back(report);
  return summary;
}

std::string run_generate_morphology(const RunConfig& cfg, const std::string& out_path) {
  std::string path = out_path.empty() ? cfg.morphology.out : out_path;
  if (path.empty())
    throw config_error("morphology generation needs an output path ([morphology] out or --out)");
  if (cfg.morphology.from_file)
    throw config_error("morphology generation requires a synthetic source, not a file");
  const Mesh mesh = build_mesh(cfg.mesh);
  const PhaseField phi = generate_synthetic(cfg.morphology.synth, mesh);
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
  }
  save_phase_field(phi, path);
  return path;
}

}  // namespace opvfem
