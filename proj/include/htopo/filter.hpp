#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "htopo/errors.hpp"
#include "htopo/grid.hpp"

namespace htopo {

/// Normalized cone-filter weights in compressed-row form: row e holds the
/// neighbors i with centroid distance < r and weights w_{e,i} summing to 1.
struct FilterWeights {
  double radius = 0.0;
  std::vector<Index> row_start;
  std::vector<Index> cols;
  std::vector<double> weights;

  Index rows() const { return static_cast<Index>(row_start.size()) - 1; }
};

/// Cone-weighted density filter max(0, r - |x_e - x_i|) over element centroids.
/// Element volumes are uniform and cancel in the normalization.
template <int Dim>
FilterWeights build_filter(const StructuredGrid<Dim>& grid, double r) {
  if (!(r > 0.0)) throw ValidationError("filter.radius", "must be > 0");
  FilterWeights w;
  w.radius = r;
  const int reach = std::max(0, static_cast<int>(std::ceil(r)) - 1);
  const Index ne = grid.num_elements();
  w.row_start.reserve(static_cast<std::size_t>(ne) + 1);
  w.row_start.push_back(0);

  std::array<int, 3> lo{0, 0, 0}, hi{0, 0, 0};
  for (Index e = 0; e < ne; ++e) {
    const auto c = grid.element_coords(e);
    for (int d = 0; d < Dim; ++d) {
      lo[d] = std::max(0, c[d] - reach);
      hi[d] = std::min(grid.nel[d] - 1, c[d] + reach);
    }
    const std::size_t begin = w.weights.size();
    double total = 0.0;
    const int kz0 = Dim == 3 ? lo[2] : 0, kz1 = Dim == 3 ? hi[2] : 0;
    for (int k = kz0; k <= kz1; ++k) {
      for (int j = lo[1]; j <= hi[1]; ++j) {
        for (int i = lo[0]; i <= hi[0]; ++i) {
          double d2 = double(i - c[0]) * (i - c[0]) + double(j - c[1]) * (j - c[1]);
          if constexpr (Dim == 3) d2 += double(k - c[2]) * (k - c[2]);
          const double wt = r - std::sqrt(d2);
          if (wt <= 0.0) continue;
          typename StructuredGrid<Dim>::Coords nb{};
          nb[0] = i;
          nb[1] = j;
          if constexpr (Dim == 3) nb[2] = k;
          w.cols.push_back(grid.element_id(nb));
          w.weights.push_back(wt);
          total += wt;
        }
      }
    }
    for (std::size_t p = begin; p < w.weights.size(); ++p) w.weights[p] /= total;
    w.row_start.push_back(static_cast<Index>(w.weights.size()));
  }
  return w;
}

/// rho_phys_e = sum_i w_{e,i} rho_i.
inline Vector filter_density(const Vector& rho, const FilterWeights& w) {
  if (rho.size() != w.rows()) throw ValidationError("filter", "density field size does not match the filter");
  Vector out(rho.size());
  for (Index e = 0; e < w.rows(); ++e) {
    double s = 0.0;
    for (Index p = w.row_start[e]; p < w.row_start[e + 1]; ++p) s += w.weights[p] * rho[w.cols[p]];
    out[e] = s;
  }
  return out;
}

/// Transpose of filter_density: df/drho_e = sum_i w_{i,e} df/drho_phys_i.
inline Vector chain_sensitivity(const Vector& dfdrho_phys, const FilterWeights& w) {
  if (dfdrho_phys.size() != w.rows())
    throw ValidationError("filter", "sensitivity field size does not match the filter");
  Vector out = Vector::Zero(dfdrho_phys.size());
  for (Index i = 0; i < w.rows(); ++i) {
    const double g = dfdrho_phys[i];
    for (Index p = w.row_start[i]; p < w.row_start[i + 1]; ++p) out[w.cols[p]] += w.weights[p] * g;
  }
  return out;
}

/// Geometrically decaying filter radius r(k) = max(r_min, decay * r(k-1)),
/// r(0) = alpha * L, with the decay chosen so that r(lp) = r_min.
struct RadiusSchedule {
  double r_min = 3.0;
  double alpha = 1.4 / 50.0;
  double side_length = 96.0;
  int lp = 250;

  double initial() const { return alpha * side_length; }

  /// Per-cycle decay factor; 1 when the initial radius is already at or
  /// below r_min (the radius then stays at r_min).
  double decay() const {
    const double r0 = initial();
    if (r0 <= r_min) return 1.0;
    return std::exp((std::log(r_min) - std::log(r0)) / lp);
  }

  double radius_at(int k) const {
    const double r0 = initial();
    if (r0 <= r_min) return r_min;
    return std::max(r_min, r0 * std::pow(decay(), k));
  }
};

/// Keeps the filter weights for the current radius and rebuilds them only
/// when ceil(r) changes, unless per-cycle rebuilding is requested.
template <int Dim>
class FilterCache {
 public:
  FilterCache(StructuredGrid<Dim> grid, bool rebuild_every_cycle)
      : grid_(grid), rebuild_every_cycle_(rebuild_every_cycle) {}

  std::shared_ptr<const FilterWeights> at_radius(double r) {
    const int key = static_cast<int>(std::ceil(r - 1e-12));
    if (!weights_ || key != key_ || (rebuild_every_cycle_ && r != weights_->radius)) {
      weights_ = std::make_shared<const FilterWeights>(build_filter(grid_, r));
      key_ = key;
      ++builds_;
    }
    return weights_;
  }

  int builds() const { return builds_; }

 private:
  StructuredGrid<Dim> grid_;
  bool rebuild_every_cycle_;
  std::shared_ptr<const FilterWeights> weights_;
  int key_ = 0;
  int builds_ = 0;
};

}  // namespace htopo
