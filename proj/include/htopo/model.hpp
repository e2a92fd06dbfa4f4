#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "htopo/config.hpp"
#include "htopo/errors.hpp"
#include "htopo/grid.hpp"
#include "htopo/io.hpp"

namespace htopo {

struct MaterialConstants {
  double k0 = 1.0;
  double kmin = 1e-3;
  double penal = 3.0;
};

/// Discretized steady conduction problem on a unit-element structured grid.
/// Dirichlet nodes are held at T = 0.
template <int Dim>
struct ThermalModel {
  StructuredGrid<Dim> grid;
  MaterialConstants material;
  Vector source;                       // volumetric heat generation per element
  std::vector<Index> dirichlet;        // sorted node ids
  std::vector<std::uint8_t> is_fixed;  // per-node mask of the same set
  int levels = 3;                      // multigrid coarsening level nl

  /// Side length used by the filter schedule: the longest axis.
  double side_length() const { return *std::max_element(grid.nel.begin(), grid.nel.end()); }
  Index num_nodes() const { return grid.num_nodes(); }
  Index num_elements() const { return grid.num_elements(); }
};

/// Checks the model invariants; throws ValidationError.
template <int Dim>
void validate_model(const ThermalModel<Dim>& m) {
  const auto& mat = m.material;
  if (!(mat.kmin > 0.0 && mat.k0 > mat.kmin)) throw ValidationError("material", "require k0 > kmin > 0");
  if (m.levels < 1) throw ValidationError("solver.nl", "must be >= 1");
  const int divisor = 1 << (m.levels - 1);
  for (int d = 0; d < Dim; ++d)
    if (m.grid.nel[d] <= 0 || m.grid.nel[d] % divisor != 0)
      throw ValidationError("mesh.nel", "element counts must be positive multiples of 2^(nl-1) = " +
                                            std::to_string(divisor));
  if (m.source.size() != m.grid.num_elements()) throw ValidationError("source", "one value per element expected");
  if ((m.source.array() < 0.0).any()) throw ValidationError("source", "heat source values must be >= 0");
  if (!(m.source.array() > 0.0).any()) throw ValidationError("source", "at least one heat source value must be > 0");
  if (m.dirichlet.empty()) throw ValidationError("boundary", "Dirichlet node set is empty");
  if (static_cast<Index>(m.is_fixed.size()) != m.grid.num_nodes())
    throw ValidationError("boundary", "node mask size mismatch");
}

/// Builds the node mask and sorted, de-duplicated node list.
template <int Dim>
void set_dirichlet(ThermalModel<Dim>& m, std::vector<Index> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  const Index n = m.grid.num_nodes();
  m.is_fixed.assign(static_cast<std::size_t>(n), 0);
  for (Index id : nodes) {
    if (id < 0 || id >= n) throw ValidationError("boundary", "node index " + std::to_string(id) + " out of range");
    m.is_fixed[static_cast<std::size_t>(id)] = 1;
  }
  m.dirichlet = std::move(nodes);
}

namespace model_detail {

/// Element count nearest to `target` having the parity of `n`, so a span of
/// that many elements can be centered on an axis of n elements. Ties round up.
inline int centered_span(int n, double target) {
  int best = n % 2;
  for (int s = n % 2; s <= n; s += 2)
    if (std::abs(s - target) <= std::abs(best - target)) best = s;
  return best;
}

}  // namespace model_detail

/// Dirichlet node set for a named preset.
///  - mid-left (2D): nodes on x = 0 within the centered segment of length L/10.
///  - back-center (3D): nodes on z = 0 within the centered square of side L/8.
///  - back-center-quarter (3D): quarter-symmetry mesh of a cube whose full side
///    is nel_z; the symmetry planes are x = nel_x and y = nel_y, so the quarter of
///    the L/8 patch sits in that corner of the z = 0 face.
template <int Dim>
std::vector<Index> dirichlet_preset(const StructuredGrid<Dim>& grid, const std::string& preset) {
  std::vector<Index> nodes;
  if constexpr (Dim == 2) {
    if (preset == "mid-left") {
      const int ny = grid.nel[1];
      const int span = model_detail::centered_span(ny, ny / 10.0);
      for (int j = (ny - span) / 2; j <= (ny + span) / 2; ++j) nodes.push_back(grid.node_id({0, j}));
      return nodes;
    }
  } else {
    const int nx = grid.nel[0], ny = grid.nel[1];
    if (preset == "back-center") {
      const int sx = model_detail::centered_span(nx, nx / 8.0);
      const int sy = model_detail::centered_span(ny, ny / 8.0);
      for (int j = (ny - sy) / 2; j <= (ny + sy) / 2; ++j)
        for (int i = (nx - sx) / 2; i <= (nx + sx) / 2; ++i) nodes.push_back(grid.node_id({i, j, 0}));
      return nodes;
    }
    if (preset == "back-center-quarter") {
      const int half = static_cast<int>(std::lround(grid.nel[2] / 16.0));
      for (int j = std::max(0, ny - half); j <= ny; ++j)
        for (int i = std::max(0, nx - half); i <= nx; ++i) nodes.push_back(grid.node_id({i, j, 0}));
      return nodes;
    }
  }
  throw ValidationError("boundary.preset", "unknown preset '" + preset + "' for a " + std::to_string(Dim) + "D mesh");
}

/// Per-element source: quadrant values are indexed by
/// (x in upper half) + 2 * (y in upper half).
template <int Dim>
Vector quadrant_source(const StructuredGrid<Dim>& grid, const std::vector<double>& values) {
  Vector q(grid.num_elements());
  for (Index e = 0; e < grid.num_elements(); ++e) {
    const auto c = grid.element_coords(e);
    const int qx = 2 * c[0] >= grid.nel[0] ? 1 : 0;
    const int qy = 2 * c[1] >= grid.nel[1] ? 1 : 0;
    q[e] = values.at(static_cast<std::size_t>(qx + 2 * qy));
  }
  return q;
}

template <int Dim>
ThermalModel<Dim> build_model(const ParsedConfig& config) {
  if (config.dim != Dim) throw ValidationError("mesh.dim", "model dimension mismatch");
  ThermalModel<Dim> m;
  for (int d = 0; d < Dim; ++d) m.grid.nel[d] = config.nel.at(static_cast<std::size_t>(d));
  m.material = {config.k0, config.kmin, config.penal};
  m.levels = config.nl;

  switch (config.source_kind) {
    case SourceKind::uniform: m.source = Vector::Constant(m.grid.num_elements(), config.source_values.at(0)); break;
    case SourceKind::quadrants: m.source = quadrant_source(m.grid, config.source_values); break;
    case SourceKind::file: m.source = read_field_csv(config.source_file, m.grid); break;
  }

  if (!config.boundary_file.empty()) {
    std::vector<Index> nodes;
    for (double v : read_numbers(config.boundary_file)) {
      if (v != std::floor(v)) throw ValidationError(config.boundary_file, "node indices must be integers");
      nodes.push_back(static_cast<Index>(v));
    }
    set_dirichlet(m, std::move(nodes));
  } else {
    set_dirichlet(m, dirichlet_preset(m.grid, config.boundary_preset));
  }
  validate_model(m);
  return m;
}

/// Consistent nodal heat load: every element spreads Q_e * V_e equally over its
/// corners (exact for a constant source with multilinear shape functions).
/// Entries at Dirichlet nodes are zeroed after assembly.
template <int Dim>
Vector heat_load(const ThermalModel<Dim>& m) {
  Vector q = Vector::Zero(m.num_nodes());
  constexpr double share = 1.0 / StructuredGrid<Dim>::nodes_per_element;
  for_each_element(m.grid, [&](Index e, const auto& nodes) {
    const double qe = m.source[e] * share;  // unit element volume
    for (Index n : nodes) q[n] += qe;
  });
  for (Index n : m.dirichlet) q[n] = 0.0;
  return q;
}

}  // namespace htopo
