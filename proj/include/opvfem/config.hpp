#pragma once

#include "opvfem/morphology.hpp"
#include "opvfem/physics.hpp"
#include "opvfem/solvers.hpp"

#include <string>
#include <vector>

namespace opvfem {

struct MeshSection {
  int dim = 2;
  std::vector<int> counts;
  std::vector<double> extent;
};

struct MorphologySection {
  bool from_file = false;
  std::string path;     // PHF input when from_file
  SyntheticSpec synth;  // otherwise
  std::string out;      // PHF output target of the morphology subcommand
};

struct OutputSection {
  std::string directory = "out";
  std::vector<double> snapshots;  // voltages at which to dump VTK fields
  bool csv = true;
  bool vtk = true;
};

/// One simulation run, parsed from a sectioned key/value file. Unknown keys
/// are rejected; missing physical parameters fall back to the standard
/// defaults; validation reports every problem at once.
struct RunConfig {
  MeshSection mesh;
  MorphologySection morphology;
  ModelParams params;
  NonlinearConfig solver;
  SweepConfig sweep;
  OutputSection output;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

}  // namespace opvfem
