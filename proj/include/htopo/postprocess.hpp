#pragma once

// Boundary smoothing applied once after the design loop. Element sensitivities
// are projected to the nodes with a cone filter, a nodal iso-level is chosen
// by bisection to keep the volume fraction, and elements cut by the level get
// the fraction of a sub-element lattice lying above it.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "htopo/config.hpp"
#include "htopo/errors.hpp"
#include "htopo/fem.hpp"
#include "htopo/grid.hpp"
#include "htopo/model.hpp"
#include "htopo/optimizer.hpp"

namespace htopo {

/// ns_j = sum_e w_{j,e} s_e with w_{j,e} proportional to max(0, r - |x_j - c_e|).
template <int Dim>
Vector nodal_projection(const Vector& sens, const StructuredGrid<Dim>& grid, double r) {
  if (sens.size() != grid.num_elements()) throw ValidationError("nodal_projection", "sensitivity size mismatch");
  if (!(r > 0.0)) throw ValidationError("postprocess.r_proj", "must be > 0");
  const int reach = static_cast<int>(std::ceil(r));
  Vector ns(grid.num_nodes());
  std::array<int, 3> lo{0, 0, 0}, hi{0, 0, 0};
  for (Index j = 0; j < grid.num_nodes(); ++j) {
    const auto x = grid.node_coords(j);
    for (int d = 0; d < Dim; ++d) {
      lo[d] = std::max(0, x[d] - reach);
      hi[d] = std::min(grid.nel[d] - 1, x[d] + reach - 1);
    }
    double total = 0.0, acc = 0.0;
    const int kz0 = Dim == 3 ? lo[2] : 0, kz1 = Dim == 3 ? hi[2] : 0;
    for (int k = kz0; k <= kz1; ++k) {
      for (int jj = lo[1]; jj <= hi[1]; ++jj) {
        for (int i = lo[0]; i <= hi[0]; ++i) {
          const double dx = i + 0.5 - x[0], dy = jj + 0.5 - x[1];
          double d2 = dx * dx + dy * dy;
          if constexpr (Dim == 3) d2 += (k + 0.5 - x[2]) * (k + 0.5 - x[2]);
          const double w = r - std::sqrt(d2);
          if (w <= 0.0) continue;
          typename StructuredGrid<Dim>::Coords c{};
          c[0] = i;
          c[1] = jj;
          if constexpr (Dim == 3) c[2] = k;
          acc += w * sens[grid.element_id(c)];
          total += w;
        }
      }
    }
    if (!(total > 0.0)) throw ValidationError("nodal_projection", "node " + std::to_string(j) + " has no support");
    ns[j] = acc / total;
  }
  return ns;
}

namespace pp_detail {

/// Multilinear shape-function values at the (s+1)^Dim lattice of local
/// coordinates in [-1, 1]^Dim; one row per lattice point, one column per corner.
template <int Dim>
Eigen::MatrixXd lattice_shapes(int s) {
  constexpr int npe = 1 << Dim;
  constexpr auto offsets = corner_offsets<Dim>();
  int points = 1;
  for (int d = 0; d < Dim; ++d) points *= s + 1;
  Eigen::MatrixXd n(points, npe);
  for (int p = 0; p < points; ++p) {
    std::array<double, Dim> xi{};
    int rem = p;
    for (int d = 0; d < Dim; ++d) {
      xi[d] = -1.0 + 2.0 * (rem % (s + 1)) / s;
      rem /= s + 1;
    }
    for (int a = 0; a < npe; ++a) {
      double v = 1.0;
      for (int d = 0; d < Dim; ++d) v *= 0.5 * (1.0 + xi[d] * (2 * offsets[a][d] - 1));
      n(p, a) = v;
    }
  }
  return n;
}

}  // namespace pp_detail

/// Element densities from nodal values: 1 when every corner is above the
/// level, 0 when every corner is below, otherwise the fraction of the
/// (s+1)^Dim interpolation lattice above the level.
template <int Dim>
Vector smooth_densities(const Vector& ns, double level, const StructuredGrid<Dim>& grid, int s) {
  if (s < 1) throw ValidationError("postprocess.subdiv", "must be >= 1");
  if (ns.size() != grid.num_nodes()) throw ValidationError("smooth_densities", "nodal field size mismatch");
  const Eigen::MatrixXd shapes = pp_detail::lattice_shapes<Dim>(s);
  const double points = static_cast<double>(shapes.rows());
  Vector rho(grid.num_elements());
  Eigen::Matrix<double, (1 << Dim), 1> corner;
  for_each_element(grid, [&](Index e, const auto& nodes) {
    bool above = true, below = true;
    for (int a = 0; a < (1 << Dim); ++a) {
      corner[a] = ns[nodes[a]];
      above = above && corner[a] > level;
      below = below && corner[a] < level;
    }
    if (above) {
      rho[e] = 1.0;
    } else if (below) {
      rho[e] = 0.0;
    } else {
      const Vector values = shapes * corner;
      rho[e] = static_cast<double>((values.array() > level).count()) / points;
    }
  });
  return rho;
}

struct LevelResult {
  double level = 0.0;
  double volume = 0.0;
  int steps = 0;
};

/// Bisection on the level over [min ns, max ns] for the target volume fraction.
/// Returns the closest level found within max_steps.
template <int Dim>
LevelResult find_level(const Vector& ns, const StructuredGrid<Dim>& grid, double target, int s,
                       int max_steps = 100) {
  if (!(target >= 0.0 && target <= 1.0)) throw ValidationError("find_level", "target volume outside [0, 1]");
  double lo = ns.minCoeff(), hi = ns.maxCoeff();
  if (!(hi > lo)) throw ValidationError("find_level", "nodal field is constant");
  auto volume = [&](double level) { return smooth_densities(ns, level, grid, s).mean(); };

  LevelResult best{lo, volume(lo), 0};
  const LevelResult top{hi, volume(hi), 0};
  if (std::abs(top.volume - target) < std::abs(best.volume - target)) best = top;
  for (int it = 1; it <= max_steps; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = volume(mid);
    if (std::abs(v - target) < std::abs(best.volume - target)) best = {mid, v, it};
    if (v == target || !(mid > lo && mid < hi)) break;
    if (v > target) lo = mid;
    else hi = mid;
  }
  return best;
}

struct PostprocessResult {
  Vector smoothed;
  Vector nodal;
  double level = 0.0;
  double volume_before = 0.0;
  double volume_after = 0.0;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

/// Smooths a physical density field. The projected scalar is the negated
/// sensitivity with respect to the physical densities (larger = more useful
/// material); both objectives come from converged MGCG solves.
template <int Dim>
PostprocessResult postprocess(const ThermalModel<Dim>& m, const ParsedConfig& c, const Vector& rho_phys) {
  if (rho_phys.size() != m.num_elements()) throw ValidationError("postprocess", "density field size mismatch");
  PostprocessResult out;
  const DesignEvaluation before = evaluate_design(m, rho_phys, c);
  out.objective_before = before.objective;
  out.volume_before = rho_phys.mean();

  const Vector sens = -element_sensitivities(m, before.t, rho_phys);
  out.nodal = nodal_projection(sens, m.grid, c.effective_r_proj());
  const LevelResult lvl = find_level(out.nodal, m.grid, c.volfrac, c.subdiv);
  out.level = lvl.level;
  out.smoothed = smooth_densities(out.nodal, lvl.level, m.grid, c.subdiv);
  out.volume_after = out.smoothed.mean();

  const DesignEvaluation after = evaluate_design(m, out.smoothed, c, before.t);
  out.objective_after = after.objective;
  return out;
}

}  // namespace htopo
