#pragma once

#include <Eigen/Core>

#include <array>
#include <span>
#include <vector>

namespace opvfem {

/// Boundary partition of the box: the full top and bottom faces are the
/// electrode contacts, every lateral face is insulated.
enum class BoundaryTag { TopOrg, BotOrg, Ins };

struct BoundaryFacet {
  std::array<int, 3> nodes{-1, -1, -1};  // first `dim` entries are valid
  BoundaryTag tag = BoundaryTag::Ins;
};

/// Conforming simplicial triangulation of an axis-aligned box.
///
/// The vertical axis is the last coordinate (y in 2D, z in 3D). Nodes are
/// ordered row-major with x fastest and the vertical axis slowest, matching
/// the on-disk morphology layout. Meshes are immutable after construction.
struct Mesh {
  int dim = 2;
  std::array<int, 3> counts{0, 0, 1};      // nodes per axis (counts[2]=1 in 2D)
  std::array<double, 3> extent{0, 0, 0};   // box side lengths
  Eigen::MatrixXd vertices;                // n_nodes x dim
  Eigen::MatrixXi cells;                   // n_cells x (dim+1), positively oriented
  std::vector<BoundaryFacet> boundary_facets;

  // per-cell P1 geometry, filled by compute_cell_geometry
  Eigen::VectorXd cell_volumes;            // n_cells
  Eigen::MatrixXd cell_grads;              // n_cells x (dim+1)*dim; basis i occupies cols [i*dim, (i+1)*dim)

  int num_nodes() const { return static_cast<int>(vertices.rows()); }
  int num_cells() const { return static_cast<int>(cells.rows()); }
  double height() const { return extent[static_cast<std::size_t>(dim) - 1]; }
  double box_measure() const {
    double m = 1.0;
    for (int a = 0; a < dim; ++a) m *= extent[static_cast<std::size_t>(a)];
    return m;
  }
};

/// Exact simplex measure and the constant gradients of the P1 basis.
struct ElementGeometry {
  double volume = 0.0;
  Eigen::MatrixXd grad_basis;  // (dim+1) x dim, rows sum to zero
};

/// Uniform triangulation of the box: each grid quad is split into 2 triangles
/// along a fixed diagonal, each grid hex into 6 tetrahedra (Kuhn pattern), so
/// the mesh is deterministic and conforming. counts are node counts (>= 2).
Mesh build_structured_mesh(std::span<const double> extent, std::span<const int> counts);

/// Orients all cells positively and fills the cached per-cell volumes and
/// basis gradients. Called by build_structured_mesh; needed after assembling
/// a Mesh by hand.
void compute_cell_geometry(Mesh& mesh);

/// Extracts boundary facets (facets incident to exactly one cell) and tags
/// them by position. Called by build_structured_mesh.
void tag_boundary_facets(Mesh& mesh);

ElementGeometry element_geometry(const Mesh& mesh, int cell);

/// All vertex indices incident to a facet with the given tag. A corner node
/// shared between Ins and a contact belongs to the contact set only.
std::vector<int> boundary_nodes(const Mesh& mesh, BoundaryTag tag);

}  // namespace opvfem
