#pragma once

#include "opvfem/config.hpp"
#include "opvfem/output.hpp"

#include <string>

namespace opvfem {

/// Resolves the output directory: absolute paths pass through, relative ones
/// are prefixed by $OPVFEM_OUTPUT_ROOT when set.
std::string resolve_output_dir(const std::string& configured);

Mesh build_mesh(const MeshSection& ms);
PhaseField obtain_morphology(const RunConfig& cfg, const Mesh& mesh);

/// Full batch run: voltage sweep, iv.csv, VTK snapshots at the requested
/// voltages, report.json. The summary lists the files written.
RunSummary run_simulate(const RunConfig& cfg);

/// Writes the configured synthetic morphology as a PHF file. An empty
/// out_path falls back to the config's morphology.out entry.
std::string run_generate_morphology(const RunConfig& cfg, const std::string& out_path = "");

}  // namespace opvfem
