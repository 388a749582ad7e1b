#include "opvfem/morphology.hpp"

#include "opvfem/errors.hpp"
#include "opvfem/physics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

namespace opvfem {

PhaseField load_phase_field(const std::string& path, const Mesh& mesh) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open morphology file: " + path);

  std::string magic;
  int dim = 0;
  if (!(in >> magic >> dim) || magic != "PHF1")
    throw io_error("malformed PHF header in " + path);
  if (dim != mesh.dim)
    throw dimension_error("PHF dimension " + std::to_string(dim) + " does not match mesh");

  std::vector<long> counts(static_cast<std::size_t>(dim));
  for (auto& c : counts)
    if (!(in >> c)) throw io_error("malformed PHF node counts in " + path);
  std::vector<double> extent(static_cast<std::size_t>(dim));
  for (auto& e : extent)
    if (!(in >> e)) throw io_error("malformed PHF extents in " + path);

  long n_expected = 1;
  for (int a = 0; a < dim; ++a) {
    if (counts[static_cast<std::size_t>(a)] != mesh.counts[static_cast<std::size_t>(a)])
      throw dimension_error("PHF node counts do not match mesh");
    const double me = mesh.extent[static_cast<std::size_t>(a)];
    if (std::abs(extent[static_cast<std::size_t>(a)] - me) > 1e-9 * std::max(1.0, me))
      throw dimension_error("PHF extents do not match mesh");
    n_expected *= counts[static_cast<std::size_t>(a)];
  }

  PhaseField field;
  field.mesh = &mesh;
  field.values.resize(n_expected);
  for (long i = 0; i < n_expected; ++i) {
    double v;
    if (!(in >> v)) throw io_error("PHF file truncated at value " + std::to_string(i));
    if (v < -1e-9 || v > 1.0 + 1e-9)
      throw io_error("PHF value out of [0,1] at node " + std::to_string(i) + ": " +
                     std::to_string(v));
    field.values[i] = std::clamp(v, 0.0, 1.0);
  }
  return field;
}

void save_phase_field(const PhaseField& field, const std::string& path) {
  const Mesh& mesh = *field.mesh;
  std::ofstream out(path);
  if (!out) throw io_error("cannot write morphology file: " + path);
  out << "PHF1 " << mesh.dim << "\n";
  for (int a = 0; a < mesh.dim; ++a)
    out << mesh.counts[static_cast<std::size_t>(a)] << (a + 1 < mesh.dim ? " " : "\n");
  char buf[64];
  for (int a = 0; a < mesh.dim; ++a) {
    std::snprintf(buf, sizeof buf, "%.17g", mesh.extent[static_cast<std::size_t>(a)]);
    out << buf << (a + 1 < mesh.dim ? " " : "\n");
  }
  for (long i = 0; i < field.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", field.values[i]);
    out << buf << "\n";
  }
  if (!out) throw io_error("write failed: " + path);
}

namespace {

// one Jacobi smoothing pass over the structured grid (axis neighbors)
void smooth_pass(const Mesh& mesh, Eigen::VectorXd& v) {
  const int nx = mesh.counts[0], ny = mesh.counts[1], nz = mesh.counts[2];
  Eigen::VectorXd out(v.size());
  auto vid = [&](int i, int j, int k) { return (static_cast<long>(k) * ny + j) * nx + i; };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double sum = v[vid(i, j, k)];
        int cnt = 1;
        if (i > 0) { sum += v[vid(i - 1, j, k)]; ++cnt; }
        if (i + 1 < nx) { sum += v[vid(i + 1, j, k)]; ++cnt; }
        if (j > 0) { sum += v[vid(i, j - 1, k)]; ++cnt; }
        if (j + 1 < ny) { sum += v[vid(i, j + 1, k)]; ++cnt; }
        if (mesh.dim == 3) {
          if (k > 0) { sum += v[vid(i, j, k - 1)]; ++cnt; }
          if (k + 1 < nz) { sum += v[vid(i, j, k + 1)]; ++cnt; }
        }
        out[vid(i, j, k)] = sum / cnt;
      }
  v.swap(out);
}

}  // namespace

PhaseField generate_synthetic(const SyntheticSpec& spec, const Mesh& mesh) {
  using Kind = SyntheticSpec::Kind;
  const long N = mesh.num_nodes();
  PhaseField field;
  field.mesh = &mesh;
  field.values.resize(N);

  switch (spec.kind) {
    case Kind::Uniform: {
      if (spec.c < 0.0 || spec.c > 1.0)
        throw config_error("uniform morphology: c must be in [0,1]");
      field.values.setConstant(spec.c);
      break;
    }
    case Kind::Bilayer: {
      if (!(spec.h_split > 0.0) || !(spec.h_split < mesh.height()))
        throw config_error("bilayer morphology: h_split must be inside (0, height)");
      const int vaxis = mesh.dim - 1;
      for (long i = 0; i < N; ++i)
        field.values[i] = mesh.vertices(i, vaxis) >= spec.h_split - 1e-12 ? 1.0 : 0.0;
      break;
    }
    case Kind::Checkerboard: {
      if (!(spec.period > 0.0))
        throw config_error("checkerboard morphology: period must be > 0");
      for (long i = 0; i < N; ++i) {
        long parity = 0;
        for (int a = 0; a < mesh.dim; ++a)
          parity += static_cast<long>(std::floor(mesh.vertices(i, a) / spec.period + 1e-9));
        field.values[i] = static_cast<double>(parity & 1);
      }
      break;
    }
    case Kind::SmoothedNoise: {
      if (!(spec.blend_ratio > 0.0) || !(spec.blend_ratio < 1.0))
        throw config_error("smoothed_noise morphology: blend_ratio must be in (0,1)");
      if (spec.smoothing_passes < 0)
        throw config_error("smoothed_noise morphology: smoothing_passes must be >= 0");
      std::mt19937_64 rng(spec.seed);
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      for (long i = 0; i < N; ++i) field.values[i] = uni(rng);
      for (int s = 0; s < spec.smoothing_passes; ++s) smooth_pass(mesh, field.values);
      // threshold at the empirical quantile so the acceptor fraction lands on
      // the requested blend ratio, then soften the interfaces
      std::vector<double> sorted(field.values.data(), field.values.data() + N);
      std::sort(sorted.begin(), sorted.end());
      const long cut = std::clamp(static_cast<long>((1.0 - spec.blend_ratio) * N), 0L, N - 1);
      const double threshold = sorted[static_cast<std::size_t>(cut)];
      for (long i = 0; i < N; ++i)
        field.values[i] = field.values[i] >= threshold ? 1.0 : 0.0;
      smooth_pass(mesh, field.values);
      smooth_pass(mesh, field.values);
      break;
    }
  }
  return field;
}

InterfaceField interface_indicator(const PhaseField& phi) {
  const Mesh& mesh = *phi.mesh;
  const int d = mesh.dim;
  InterfaceField out;
  out.mesh = phi.mesh;
  out.values = Eigen::VectorXd::Zero(mesh.num_nodes());
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(mesh.num_nodes());

  for (int c = 0; c < mesh.num_cells(); ++c) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
    for (int i = 0; i <= d; ++i)
      g += phi.values[mesh.cells(c, i)] *
           mesh.cell_grads.block(c, i * d, 1, d).transpose();
    const double mag = g.norm();
    const double vol = mesh.cell_volumes[c];
    for (int i = 0; i <= d; ++i) {
      out.values[mesh.cells(c, i)] += vol * mag;
      weight[mesh.cells(c, i)] += vol;
    }
  }
  out.values.array() /= weight.array();
  return out;
}

EnergyLevels energy_levels(const PhaseField& phi, const ModelParams& params) {
  EnergyLevels lv;
  lv.lumo = params.E_L_p + (params.E_L_nfa - params.E_L_p) * phi.values.array();
  lv.homo = params.E_H_p + (params.E_H_nfa - params.E_H_p) * phi.values.array();
  return lv;
}

}  // namespace opvfem
