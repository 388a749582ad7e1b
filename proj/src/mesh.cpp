#include "opvfem/mesh.hpp"

#include "opvfem/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace opvfem {

namespace {

// Kuhn split of the unit hex into 6 tets: one tet per permutation of the
// axes, walking from corner (0,0,0) to (1,1,1). Faces of neighboring hexes
// receive matching diagonals, so the global mesh conforms.
constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                              {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

ElementGeometry simplex_geometry(const Eigen::MatrixXd& coords, int dim) {
  Eigen::MatrixXd T(dim, dim);
  for (int i = 0; i < dim; ++i)
    T.col(i) = (coords.row(i + 1) - coords.row(0)).transpose();
  const double det = T.determinant();
  const double factorial = (dim == 2) ? 2.0 : 6.0;
  ElementGeometry g;
  g.volume = std::abs(det) / factorial;
  if (!(g.volume > 0.0) || !std::isfinite(g.volume))
    throw geometry_error("degenerate cell: zero simplex volume");
  // rows of T^{-1} are the gradients of basis functions 1..dim
  Eigen::MatrixXd Tinv = T.inverse();
  g.grad_basis.resize(dim + 1, dim);
  for (int i = 0; i < dim; ++i) g.grad_basis.row(i + 1) = Tinv.row(i);
  g.grad_basis.row(0) = -g.grad_basis.bottomRows(dim).colwise().sum();
  return g;
}

double signed_volume(const Mesh& mesh, int cell) {
  const int d = mesh.dim;
  Eigen::MatrixXd T(d, d);
  for (int i = 0; i < d; ++i)
    T.col(i) = (mesh.vertices.row(mesh.cells(cell, i + 1)) -
                mesh.vertices.row(mesh.cells(cell, 0)))
                   .transpose();
  return T.determinant();
}

}  // namespace

void compute_cell_geometry(Mesh& mesh) {
  const int d = mesh.dim;
  const int nc = mesh.num_cells();
  mesh.cell_volumes.resize(nc);
  mesh.cell_grads.resize(nc, (d + 1) * d);
  for (int c = 0; c < nc; ++c) {
    if (signed_volume(mesh, c) < 0.0)
      std::swap(mesh.cells(c, 1), mesh.cells(c, 2));
    Eigen::MatrixXd coords(d + 1, d);
    for (int i = 0; i <= d; ++i) coords.row(i) = mesh.vertices.row(mesh.cells(c, i));
    ElementGeometry g = simplex_geometry(coords, d);
    mesh.cell_volumes[c] = g.volume;
    for (int i = 0; i <= d; ++i)
      mesh.cell_grads.block(c, i * d, 1, d) = g.grad_basis.row(i);
  }
}

void tag_boundary_facets(Mesh& mesh) {
  const int d = mesh.dim;
  // a facet is on the boundary iff it belongs to exactly one cell
  std::map<std::array<int, 3>, int> count;
  auto facet_key = [&](int cell, int skip) {
    std::array<int, 3> key{-1, -1, -1};
    int k = 0;
    for (int i = 0; i <= d; ++i)
      if (i != skip) key[k++] = mesh.cells(cell, i);
    std::sort(key.begin(), key.begin() + d);
    return key;
  };
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int s = 0; s <= d; ++s) ++count[facet_key(c, s)];

  const double v_top = mesh.extent[static_cast<std::size_t>(d) - 1];
  const double tol = 1e-12 * std::max(1.0, v_top);
  mesh.boundary_facets.clear();
  for (const auto& [key, n] : count) {
    if (n != 1) continue;
    BoundaryFacet f;
    f.nodes = key;
    bool all_top = true, all_bot = true;
    for (int i = 0; i < d; ++i) {
      const double v = mesh.vertices(key[static_cast<std::size_t>(i)], d - 1);
      all_top = all_top && std::abs(v - v_top) <= tol;
      all_bot = all_bot && std::abs(v) <= tol;
    }
    f.tag = all_top ? BoundaryTag::TopOrg
                    : (all_bot ? BoundaryTag::BotOrg : BoundaryTag::Ins);
    mesh.boundary_facets.push_back(f);
  }
}

Mesh build_structured_mesh(std::span<const double> extent, std::span<const int> counts) {
  if (extent.size() != counts.size() || (extent.size() != 2 && extent.size() != 3))
    throw dimension_error("mesh: extent/counts must both have 2 or 3 entries");
  const int d = static_cast<int>(extent.size());
  for (int a = 0; a < d; ++a) {
    if (counts[a] < 2) throw dimension_error("mesh: node count must be >= 2 on every axis");
    if (!(extent[a] > 0.0)) throw dimension_error("mesh: extent must be positive on every axis");
  }

  Mesh mesh;
  mesh.dim = d;
  for (int a = 0; a < d; ++a) {
    mesh.counts[static_cast<std::size_t>(a)] = counts[a];
    mesh.extent[static_cast<std::size_t>(a)] = extent[a];
  }

  const int nx = counts[0], ny = counts[1], nz = (d == 3) ? counts[2] : 1;
  const double hx = extent[0] / (nx - 1), hy = extent[1] / (ny - 1);
  const double hz = (d == 3) ? extent[2] / (nz - 1) : 0.0;

  mesh.vertices.resize(static_cast<long>(nx) * ny * nz, d);
  auto vid = [&](int i, int j, int k) { return (k * ny + j) * nx + i; };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int v = vid(i, j, k);
        mesh.vertices(v, 0) = i * hx;
        mesh.vertices(v, 1) = j * hy;
        if (d == 3) mesh.vertices(v, 2) = k * hz;
      }

  if (d == 2) {
    mesh.cells.resize(2L * (nx - 1) * (ny - 1), 3);
    long c = 0;
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i + 1 < nx; ++i) {
        const int v00 = vid(i, j, 0), v10 = vid(i + 1, j, 0);
        const int v01 = vid(i, j + 1, 0), v11 = vid(i + 1, j + 1, 0);
        mesh.cells.row(c++) << v00, v10, v11;  // diagonal v00-v11 everywhere
        mesh.cells.row(c++) << v00, v11, v01;
      }
  } else {
    mesh.cells.resize(6L * (nx - 1) * (ny - 1) * (nz - 1), 4);
    long c = 0;
    for (int k = 0; k + 1 < nz; ++k)
      for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
          const int base[3] = {i, j, k};
          for (const auto& p : kPerms) {
            int node[4];
            int pos[3] = {base[0], base[1], base[2]};
            node[0] = vid(pos[0], pos[1], pos[2]);
            for (int s = 0; s < 3; ++s) {
              ++pos[p[s]];
              node[s + 1] = vid(pos[0], pos[1], pos[2]);
            }
            mesh.cells.row(c++) << node[0], node[1], node[2], node[3];
          }
        }
  }

  compute_cell_geometry(mesh);
  tag_boundary_facets(mesh);
  return mesh;
}

ElementGeometry element_geometry(const Mesh& mesh, int cell) {
  if (cell < 0 || cell >= mesh.num_cells())
    throw dimension_error("element_geometry: cell index out of range");
  const int d = mesh.dim;
  Eigen::MatrixXd coords(d + 1, d);
  for (int i = 0; i <= d; ++i) coords.row(i) = mesh.vertices.row(mesh.cells(cell, i));
  return simplex_geometry(coords, d);
}

std::vector<int> boundary_nodes(const Mesh& mesh, BoundaryTag tag) {
  const int d = mesh.dim;
  std::set<int> wanted, contacts;
  for (const auto& f : mesh.boundary_facets) {
    for (int i = 0; i < d; ++i) {
      const int v = f.nodes[static_cast<std::size_t>(i)];
      if (f.tag == tag) wanted.insert(v);
      if (f.tag != BoundaryTag::Ins) contacts.insert(v);
    }
  }
  // Dirichlet wins: contact corners are excluded from the insulated set
  if (tag == BoundaryTag::Ins)
    for (int v : contacts) wanted.erase(v);
  return {wanted.begin(), wanted.end()};
}

}  // namespace opvfem
