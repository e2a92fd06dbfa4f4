#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>

#include <Eigen/Core>

namespace htopo {

using Vector = Eigen::VectorXd;
using Index = std::ptrdiff_t;

/// Corner offsets of the unit element, counter-clockwise from the origin in 2D;
/// in 3D the bottom face (z = 0) counter-clockwise, then the top face.
template <int Dim>
constexpr std::array<std::array<int, Dim>, (1 << Dim)> corner_offsets() {
  static_assert(Dim == 2 || Dim == 3, "only 2D and 3D grids are supported");
  if constexpr (Dim == 2) {
    return {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  } else {
    return {{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};
  }
}

/// Structured grid of unit square/cube elements with lexicographic
/// numbering (x fastest) of both nodes and elements.
template <int Dim>
struct StructuredGrid {
  static_assert(Dim == 2 || Dim == 3, "only 2D and 3D grids are supported");
  static constexpr int dim = Dim;
  static constexpr int nodes_per_element = 1 << Dim;
  using Coords = std::array<int, Dim>;
  using ElementNodes = std::array<Index, nodes_per_element>;

  Coords nel{};

  Coords nodes_per_axis() const {
    Coords n{};
    for (int d = 0; d < Dim; ++d) n[d] = nel[d] + 1;
    return n;
  }

  Index num_elements() const {
    Index n = 1;
    for (int d = 0; d < Dim; ++d) n *= nel[d];
    return n;
  }

  Index num_nodes() const {
    Index n = 1;
    for (int d = 0; d < Dim; ++d) n *= nel[d] + 1;
    return n;
  }

  Index node_id(const Coords& c) const {
    Index id = 0;
    for (int d = Dim - 1; d >= 0; --d) id = id * (nel[d] + 1) + c[d];
    return id;
  }

  Coords node_coords(Index id) const {
    Coords c{};
    for (int d = 0; d < Dim; ++d) {
      c[d] = static_cast<int>(id % (nel[d] + 1));
      id /= nel[d] + 1;
    }
    return c;
  }

  Index element_id(const Coords& c) const {
    Index id = 0;
    for (int d = Dim - 1; d >= 0; --d) id = id * nel[d] + c[d];
    return id;
  }

  Coords element_coords(Index id) const {
    Coords c{};
    for (int d = 0; d < Dim; ++d) {
      c[d] = static_cast<int>(id % nel[d]);
      id /= nel[d];
    }
    return c;
  }

  ElementNodes element_nodes(Index e) const {
    const Coords base = element_coords(e);
    ElementNodes nodes{};
    constexpr auto offsets = corner_offsets<Dim>();
    for (int a = 0; a < nodes_per_element; ++a) {
      Coords c = base;
      for (int d = 0; d < Dim; ++d) c[d] += offsets[a][d];
      nodes[a] = node_id(c);
    }
    return nodes;
  }

  std::array<double, Dim> centroid(Index e) const {
    const Coords c = element_coords(e);
    std::array<double, Dim> x{};
    for (int d = 0; d < Dim; ++d) x[d] = c[d] + 0.5;
    return x;
  }

  /// Grid with every per-axis element count halved.
  StructuredGrid coarsened() const {
    StructuredGrid g;
    for (int d = 0; d < Dim; ++d) g.nel[d] = nel[d] / 2;
    return g;
  }

  bool operator==(const StructuredGrid&) const = default;
};

/// Calls fn(e, nodes) for every element in lexicographic order. Avoids the
/// per-element divisions of element_nodes() in hot loops.
template <int Dim, typename Fn>
void for_each_element(const StructuredGrid<Dim>& grid, Fn&& fn) {
  constexpr auto offsets = corner_offsets<Dim>();
  constexpr int npe = StructuredGrid<Dim>::nodes_per_element;
  const auto np = grid.nodes_per_axis();
  std::array<Index, npe> shift{};
  for (int a = 0; a < npe; ++a) {
    Index s = 0, stride = 1;
    for (int d = 0; d < Dim; ++d) {
      s += offsets[a][d] * stride;
      stride *= np[d];
    }
    shift[a] = s;
  }
  typename StructuredGrid<Dim>::ElementNodes nodes{};
  Index e = 0;
  const int nz = Dim == 3 ? grid.nel[Dim - 1] : 1;
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < grid.nel[1]; ++j) {
      Index base = (static_cast<Index>(k) * np[1] + j) * np[0];
      for (int i = 0; i < grid.nel[0]; ++i, ++e, ++base) {
        for (int a = 0; a < npe; ++a) nodes[a] = base + shift[a];
        fn(e, nodes);
      }
    }
  }
}

}  // namespace htopo
