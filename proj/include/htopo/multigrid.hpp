#pragma once

// Geometric multigrid on nested structured grids.
//
// Level 0 is the fine grid and is applied matrix-free. Coarser levels carry
// explicit sparse Galerkin operators A_{l+1} = P_l^T A_l P_l, built element by
// element: every level-l element lies inside exactly one level-(l+1) element,
// so the triple product reduces to summing W_c^T A_child W_c over the 2^dim
// children of each coarse element, where W_c is the local interpolation.
//
// Dirichlet convention on every level: constrained rows/columns are zero
// except for a unit diagonal. A coarse node is constrained iff the fine node
// it coincides with is constrained, and P has zero rows at constrained fine
// nodes and zero columns at constrained coarse nodes.

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "htopo/errors.hpp"
#include "htopo/fem.hpp"
#include "htopo/grid.hpp"
#include "htopo/model.hpp"

namespace htopo {

struct MgOptions {
  int levels = 3;
  double omega = 0.6;  // Jacobi damping
  int nu_pre = 1;
  int nu_post = 1;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

namespace mg_detail {

/// Interpolation weights from the corners of a coarse element to the corners
/// of its child with offset `child` (0/1 per axis).
template <int Dim>
ElementMatrix<Dim> child_interpolation(const std::array<int, Dim>& child) {
  constexpr auto offsets = corner_offsets<Dim>();
  constexpr int npe = 1 << Dim;
  ElementMatrix<Dim> w;
  for (int a = 0; a < npe; ++a) {
    for (int b = 0; b < npe; ++b) {
      double v = 1.0;
      for (int d = 0; d < Dim; ++d) {
        const int p = child[d] + offsets[a][d];  // position in half coarse cells: 0, 1, 2
        if (p == 1) v *= 0.5;
        else if ((p == 0) != (offsets[b][d] == 0)) v = 0.0;
      }
      w(a, b) = v;
    }
  }
  return w;
}

template <int Dim>
std::vector<std::uint8_t> coarse_mask(const StructuredGrid<Dim>& fine, const std::vector<std::uint8_t>& fine_fixed,
                                      const StructuredGrid<Dim>& coarse) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(coarse.num_nodes()), 0);
  for (Index c = 0; c < coarse.num_nodes(); ++c) {
    auto x = coarse.node_coords(c);
    for (int d = 0; d < Dim; ++d) x[d] *= 2;
    mask[static_cast<std::size_t>(c)] = fine_fixed[static_cast<std::size_t>(fine.node_id(x))];
  }
  return mask;
}

/// Multilinear prolongation coarse -> fine on nested grids.
template <int Dim>
SparseMatrix prolongation(const StructuredGrid<Dim>& fine, const std::vector<std::uint8_t>& fine_fixed,
                          const StructuredGrid<Dim>& coarse, const std::vector<std::uint8_t>& coarse_fixed) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(fine.num_nodes()) * 4);
  for (Index f = 0; f < fine.num_nodes(); ++f) {
    if (fine_fixed[static_cast<std::size_t>(f)]) continue;
    const auto x = fine.node_coords(f);
    // per-axis parents: even index -> one parent weight 1, odd -> two parents weight 1/2
    std::array<std::array<int, 2>, Dim> idx{};
    std::array<std::array<double, 2>, Dim> wt{};
    std::array<int, Dim> cnt{};
    for (int d = 0; d < Dim; ++d) {
      if (x[d] % 2 == 0) {
        idx[d] = {x[d] / 2, 0};
        wt[d] = {1.0, 0.0};
        cnt[d] = 1;
      } else {
        idx[d] = {(x[d] - 1) / 2, (x[d] + 1) / 2};
        wt[d] = {0.5, 0.5};
        cnt[d] = 2;
      }
    }
    int total = 1;
    for (int d = 0; d < Dim; ++d) total *= cnt[d];
    for (int combo = 0; combo < total; ++combo) {
      std::array<int, Dim> c{};
      double w = 1.0;
      int rest = combo;
      for (int d = 0; d < Dim; ++d) {
        const int pick = rest % cnt[d];
        rest /= cnt[d];
        c[d] = idx[d][pick];
        w *= wt[d][pick];
      }
      const Index col = coarse.node_id(c);
      if (coarse_fixed[static_cast<std::size_t>(col)]) continue;
      trips.emplace_back(f, col, w);
    }
  }
  SparseMatrix p(fine.num_nodes(), coarse.num_nodes());
  p.setFromTriplets(trips.begin(), trips.end());
  return p;
}

/// Sums element matrices into a global matrix, masking constrained
/// rows/columns and placing 1 on their diagonal.
template <int Dim>
SparseMatrix assemble(const StructuredGrid<Dim>& grid, const std::vector<ElementMatrix<Dim>>& mats,
                      const std::vector<std::uint8_t>& fixed) {
  constexpr int npe = 1 << Dim;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mats.size() * npe * npe + fixed.size());
  for_each_element(grid, [&](Index e, const auto& nodes) {
    const auto& ke = mats[static_cast<std::size_t>(e)];
    for (int a = 0; a < npe; ++a) {
      if (fixed[static_cast<std::size_t>(nodes[a])]) continue;
      for (int b = 0; b < npe; ++b) {
        if (fixed[static_cast<std::size_t>(nodes[b])]) continue;
        trips.emplace_back(nodes[a], nodes[b], ke(a, b));
      }
    }
  });
  for (std::size_t n = 0; n < fixed.size(); ++n)
    if (fixed[n]) trips.emplace_back(static_cast<Index>(n), static_cast<Index>(n), 1.0);
  SparseMatrix a(grid.num_nodes(), grid.num_nodes());
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

}  // namespace mg_detail

/// Multigrid hierarchy for one conductivity field. Immutable once built; the
/// referenced model must outlive it.
template <int Dim>
class MgHierarchy {
 public:
  static constexpr int npe = 1 << Dim;

  MgHierarchy(const ThermalModel<Dim>& model, Vector k_elem, MgOptions opts)
      : model_(&model), k_(std::move(k_elem)), opts_(opts) {
    if (opts_.levels < 1) throw ValidationError("solver.nl", "must be >= 1");
    if (k_.size() != model.num_elements()) throw ValidationError("conductivity", "one value per element expected");
    const int divisor = 1 << (opts_.levels - 1);
    for (int d = 0; d < Dim; ++d)
      if (model.grid.nel[d] % divisor != 0)
        throw ValidationError("mesh.nel", "element counts must be multiples of 2^(nl-1) = " + std::to_string(divisor));
    build();
  }

  int num_levels() const { return static_cast<int>(levels_.size()); }
  const MgOptions& options() const { return opts_; }
  const ThermalModel<Dim>& model() const { return *model_; }
  const Vector& conductivity() const { return k_; }
  const StructuredGrid<Dim>& grid(int l) const { return levels_[l].grid; }
  const std::vector<std::uint8_t>& fixed(int l) const { return levels_[l].fixed; }
  Index size(int l) const { return levels_[l].grid.num_nodes(); }
  const Vector& diagonal(int l) const { return levels_[l].diag; }
  /// Prolongation from level l+1 to level l.
  const SparseMatrix& prolongation(int l) const { return levels_[l].p; }
  /// Explicit operator; present for l >= 1, and for l = 0 only when nl = 1.
  const SparseMatrix& matrix(int l) const { return levels_[l].a; }

  void apply(int l, const Vector& x, Vector& y) const {
    if (l == 0 && levels_.size() > 1) {
      apply_K(*model_, k_, x, y);
    } else {
      y.noalias() = levels_[l].a * x;
    }
  }

  /// `sweeps` damped-Jacobi sweeps x += omega D^{-1} (b - A x) on free nodes.
  void smooth(int l, const Vector& b, Vector& x, int sweeps) const {
    const auto& lev = levels_[l];
    Vector ax;
    for (int s = 0; s < sweeps; ++s) {
      apply(l, x, ax);
      for (Index i = 0; i < x.size(); ++i)
        if (!lev.fixed[static_cast<std::size_t>(i)]) x[i] += opts_.omega * (b[i] - ax[i]) / lev.diag[i];
    }
  }

  /// One V-cycle on level l: pre-smooth, restrict the residual, coarse
  /// correction (direct on the coarsest level), prolongate, post-smooth.
  void vcycle(int l, const Vector& b, Vector& x) const {
    if (l == num_levels() - 1) {
      x = coarse_solver_->solve(b);
      return;
    }
    const auto& lev = levels_[l];
    smooth(l, b, x, opts_.nu_pre);
    Vector ax;
    apply(l, x, ax);
    const Vector rc = lev.p.transpose() * (b - ax);
    Vector xc = Vector::Zero(rc.size());
    vcycle(l + 1, rc, xc);
    x.noalias() += lev.p * xc;
    smooth(l, b, x, opts_.nu_post);
  }

  void vcycle(const Vector& b, Vector& x) const { vcycle(0, b, x); }

  /// Preconditioner application: one V-cycle from a zero initial guess.
  Vector precondition(const Vector& r) const {
    Vector z = Vector::Zero(r.size());
    vcycle(0, r, z);
    return z;
  }

 private:
  struct Level {
    StructuredGrid<Dim> grid;
    std::vector<std::uint8_t> fixed;
    SparseMatrix a;  // unused on level 0 when nl > 1
    SparseMatrix p;  // to level l+1
    Vector diag;
  };

  void build() {
    const auto& ref = fem_detail::cached_reference<Dim>();
    const int nl = opts_.levels;
    levels_.resize(static_cast<std::size_t>(nl));
    levels_[0].grid = model_->grid;
    levels_[0].fixed = model_->is_fixed;
    levels_[0].diag = diagonal_of_K(*model_, k_);

    std::array<ElementMatrix<Dim>, npe> interp;
    constexpr auto offsets = corner_offsets<Dim>();
    for (int c = 0; c < npe; ++c) {
      std::array<int, Dim> child{};
      for (int d = 0; d < Dim; ++d) child[d] = offsets[c][d];
      interp[c] = mg_detail::child_interpolation<Dim>(child);
    }

    std::vector<ElementMatrix<Dim>> fine_mats;  // element matrices of level l (l >= 1)
    if (nl == 1) {
      fine_mats.resize(static_cast<std::size_t>(model_->num_elements()));
      for (Index e = 0; e < model_->num_elements(); ++e) fine_mats[static_cast<std::size_t>(e)] = k_[e] * ref;
      levels_[0].a = mg_detail::assemble(levels_[0].grid, fine_mats, levels_[0].fixed);
    }

    for (int l = 0; l + 1 < nl; ++l) {
      Level& fine = levels_[l];
      Level& coarse = levels_[l + 1];
      coarse.grid = fine.grid.coarsened();
      coarse.fixed = mg_detail::coarse_mask(fine.grid, fine.fixed, coarse.grid);
      fine.p = mg_detail::prolongation(fine.grid, fine.fixed, coarse.grid, coarse.fixed);

      std::vector<ElementMatrix<Dim>> coarse_mats(static_cast<std::size_t>(coarse.grid.num_elements()));
      for_each_element(coarse.grid, [&](Index ce, const auto& cnodes) {
        const auto cc = coarse.grid.element_coords(ce);
        ElementMatrix<Dim> sum = ElementMatrix<Dim>::Zero();
        for (int c = 0; c < npe; ++c) {
          std::array<int, Dim> fc{};
          for (int d = 0; d < Dim; ++d) fc[d] = 2 * cc[d] + offsets[c][d];
          const Index fe = fine.grid.element_id(fc);
          ElementMatrix<Dim> w = interp[c];
          // mask rows of constrained fine nodes and columns of constrained coarse nodes
          for (int a = 0; a < npe; ++a) {
            std::array<int, Dim> fx = fc;
            for (int d = 0; d < Dim; ++d) fx[d] += offsets[a][d];
            if (fine.fixed[static_cast<std::size_t>(fine.grid.node_id(fx))]) w.row(a).setZero();
          }
          for (int b = 0; b < npe; ++b)
            if (coarse.fixed[static_cast<std::size_t>(cnodes[b])]) w.col(b).setZero();
          if (l == 0) {
            sum.noalias() += k_[fe] * (w.transpose() * ref * w);
          } else {
            sum.noalias() += w.transpose() * fine_mats[static_cast<std::size_t>(fe)] * w;
          }
        }
        coarse_mats[static_cast<std::size_t>(ce)] = sum;
      });
      coarse.a = mg_detail::assemble(coarse.grid, coarse_mats, coarse.fixed);
      coarse.diag = coarse.a.diagonal();
      fine_mats = std::move(coarse_mats);
    }

    coarse_solver_ = std::make_unique<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
    const Eigen::SparseMatrix<double> coarsest = levels_.back().a;
    coarse_solver_->compute(coarsest);
    if (coarse_solver_->info() != Eigen::Success)
      throw NumericalError("coarsest multigrid operator is not positive definite (Dirichlet set lost under coarsening?)");
  }

  const ThermalModel<Dim>* model_;
  Vector k_;
  MgOptions opts_;
  std::vector<Level> levels_;
  std::unique_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> coarse_solver_;
};

}  // namespace htopo
