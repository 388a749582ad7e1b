#pragma once

#include "opvfem/mesh.hpp"

#include <cstdint>
#include <string>

namespace opvfem {

struct ModelParams;

/// Nodal acceptor volume fraction on a mesh, values in [0,1].
struct PhaseField {
  const Mesh* mesh = nullptr;
  Eigen::VectorXd values;
};

/// Nodal |grad phi|: zero in pure phases, positive at donor-acceptor
/// interfaces. The characteristic interface thickness is absorbed into the
/// dissociation rate, so this is the plain gradient magnitude.
struct InterfaceField {
  const Mesh* mesh = nullptr;
  Eigen::VectorXd values;
};

/// Nodal LUMO/HOMO levels, linearly interpolated between the pure-material
/// endpoints by the local acceptor fraction.
struct EnergyLevels {
  Eigen::VectorXd lumo;  // E_L
  Eigen::VectorXd homo;  // E_H
};

/// PHF morphology file: "PHF1 <dim>", node counts, extents, then one nodal
/// value per line in row-major order (x fastest, vertical axis slowest).
PhaseField load_phase_field(const std::string& path, const Mesh& mesh);
void save_phase_field(const PhaseField& field, const std::string& path);

/// Test-fixture morphologies; not a physical formation model.
struct SyntheticSpec {
  enum class Kind { Uniform, Bilayer, Checkerboard, SmoothedNoise };
  Kind kind = Kind::Uniform;
  double c = 0.5;                // uniform value
  double h_split = 0.0;          // bilayer split height
  double period = 0.0;           // checkerboard block size
  std::uint64_t seed = 0;        // smoothed_noise
  double blend_ratio = 0.5;      // target acceptor fraction, in (0,1)
  int smoothing_passes = 10;
};

/// Deterministic for a fixed spec; smoothed_noise matches the requested blend
/// ratio within 2% of nodes above 0.5.
PhaseField generate_synthetic(const SyntheticSpec& spec, const Mesh& mesh);

/// Per-element P1 gradient magnitude, projected to nodes by volume-weighted
/// averaging over the adjacent elements.
InterfaceField interface_indicator(const PhaseField& phi);

EnergyLevels energy_levels(const PhaseField& phi, const ModelParams& params);

}  // namespace opvfem
