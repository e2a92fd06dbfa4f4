#pragma once

// Multigrid-assisted combined-approximation reanalysis.
//
// The reference state (densities, their multigrid hierarchy and temperature)
// stands in for a factorized reference matrix K0. For a modified design with
// K = K0 + dK the basis is r_1 = t_prev, r_i = MG(K0, -dK r_{i-1}, r_{i-1}),
// i.e. one V-cycle of the reference hierarchy with right-hand side -dK r_{i-1}
// started from r_{i-1}. The basis is orthonormalized through its thin SVD and
// the temperature is the Galerkin solution in that subspace.

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SVD>

#include "htopo/config.hpp"
#include "htopo/errors.hpp"
#include "htopo/fem.hpp"
#include "htopo/mgcg.hpp"
#include "htopo/multigrid.hpp"

namespace htopo {

/// Snapshot taken whenever the full MGCG solver runs.
template <int Dim>
struct CarmReference {
  Vector rho_ref;
  Vector k_ref;
  std::shared_ptr<const MgHierarchy<Dim>> hierarchy;
  Vector t0;
};

/// Reduced model for the current design.
struct Carm {
  Eigen::MatrixXd basis;            // n x m, orthonormal columns
  Eigen::VectorXd singular_values;  // of the raw basis, descending
  int requested = 0;                // m before rank truncation
  int vcycles = 0;                  // V-cycles spent building the basis

  int size() const { return static_cast<int>(basis.cols()); }
};

inline constexpr double rank_tolerance = 1e-12;

/// Raw combined-approximation vectors [r_1 ... r_m] (before orthogonalization).
template <int Dim>
Eigen::MatrixXd carm_raw_basis(const ThermalModel<Dim>& m, const Vector& k_cur, const CarmReference<Dim>& ref,
                               const Vector& r1, int size) {
  if (size < 1) throw ValidationError("solver.m_basis", "must be >= 1");
  if (!r1.allFinite()) throw NumericalError("non-finite initial basis vector");
  Eigen::MatrixXd raw(r1.size(), size);
  raw.col(0) = r1;
  Vector dkr;
  for (int i = 1; i < size; ++i) {
    Vector prev = raw.col(i - 1);
    apply_deltaK(m, k_cur, ref.k_ref, prev, dkr);
    const Vector rhs = -dkr;
    ref.hierarchy->vcycle(rhs, prev);
    raw.col(i) = prev;
  }
  return raw;
}

/// Orthonormal basis of the column space via a thin SVD, dropping directions
/// whose singular value falls below rank_tolerance * sigma_max.
inline Carm orthonormalize(const Eigen::MatrixXd& raw) {
  Carm carm;
  carm.requested = static_cast<int>(raw.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(raw, Eigen::ComputeThinU);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || !(s[0] > 0.0)) throw NumericalError("reduced basis is identically zero");
  int keep = 0;
  while (keep < s.size() && s[keep] >= rank_tolerance * s[0]) ++keep;
  carm.basis = svd.matrixU().leftCols(keep);
  carm.singular_values = s;
  return carm;
}

template <int Dim>
Carm build_carm(const ThermalModel<Dim>& m, const Vector& k_cur, const CarmReference<Dim>& ref, const Vector& r1,
                int size) {
  Carm carm = orthonormalize(carm_raw_basis(m, k_cur, ref, r1, size));
  carm.vcycles = size - 1;
  return carm;
}

struct ReducedSolution {
  Eigen::VectorXd y;
  Vector t;
  Eigen::MatrixXd reduced_matrix;
};

/// Solves (R^T K R) y = R^T q and returns t = R y. Throws NumericalError when
/// the reduced matrix is not positive definite.
template <int Dim>
ReducedSolution reduced_solve(const ThermalModel<Dim>& m, const Carm& carm, const Vector& k_cur, const Vector& q) {
  const auto& r = carm.basis;
  const int size = static_cast<int>(r.cols());
  Eigen::MatrixXd kr(r.rows(), size);
  Vector col;
  for (int j = 0; j < size; ++j) {
    apply_K(m, k_cur, Vector(r.col(j)), col);
    kr.col(j) = col;
  }
  ReducedSolution sol;
  sol.reduced_matrix = r.transpose() * kr;
  const Eigen::VectorXd qr = r.transpose() * q;
  Eigen::LLT<Eigen::MatrixXd> llt(sol.reduced_matrix.selfadjointView<Eigen::Lower>());
  if (llt.info() != Eigen::Success) throw NumericalError("reduced conductivity matrix is not positive definite");
  sol.y = llt.solve(qr);
  sol.t = r * sol.y;
  return sol;
}

/// Relative residual ||K t - q|| / ||q||.
template <int Dim>
double residual_norm(const ThermalModel<Dim>& m, const Vector& k_cur, const Vector& t, const Vector& q) {
  const double qn = q.norm();
  if (!(qn > 0.0)) throw ValidationError("load", "zero load vector");
  Vector kt;
  apply_K(m, k_cur, t, kt);
  return (kt - q).norm() / qn;
}

enum class SolverPath { mgcg, mgar, mgcg_fallback };

inline std::string to_string(SolverPath p) {
  switch (p) {
    case SolverPath::mgcg: return "mgcg";
    case SolverPath::mgar: return "mgar";
    case SolverPath::mgcg_fallback: return "mgcg-fallback";
  }
  return "?";
}

struct DispatchPolicy {
  SolverMethod method = SolverMethod::mgar;
  int n_on = 40;
  double eps1 = 0.5;
  double eps2 = 1e-6;
  int cg_max = 200;
  int m_basis = 2;
};

struct DispatchResult {
  Vector t;
  SolverPath path = SolverPath::mgcg;
  double res = 0.0;  // relative residual of t
  double rejected_res = std::numeric_limits<double>::quiet_NaN();  // reduced-model residual on fallback
  int cg_iters = 0;
  int vcycles = 0;
  int basis_size = 0;
  bool mgcg_converged = true;
};

/// Chooses between the full MGCG solver and the reduced model each design
/// cycle, keeping the reference snapshot that the reduced model is built on.
template <int Dim>
class SolveDispatcher {
 public:
  SolveDispatcher(const ThermalModel<Dim>& model, MgOptions mg, DispatchPolicy policy)
      : model_(&model), mg_(mg), policy_(policy) {}

  DispatchResult solve(int cycle, const Vector& rho_phys, const Vector& k_cur, const Vector& t_prev, const Vector& q) {
    if (policy_.method == SolverMethod::mgcg || cycle < policy_.n_on || !reference_) {
      return full_solve(rho_phys, k_cur, t_prev, q, SolverPath::mgcg);
    }

    std::optional<ReducedSolution> reduced;
    Carm carm = build_carm(*model_, k_cur, *reference_, t_prev, policy_.m_basis);
    last_carm_ = carm;
    ++carm_builds_;
    try {
      reduced = reduced_solve(*model_, carm, k_cur, q);
    } catch (const NumericalError&) {
      reduced.reset();
    }

    if (reduced) {
      const double res = residual_norm(*model_, k_cur, reduced->t, q);
      if (res <= policy_.eps1) {
        DispatchResult out;
        out.t = std::move(reduced->t);
        out.path = SolverPath::mgar;
        out.res = res;
        out.vcycles = carm.vcycles;
        out.basis_size = carm.size();
        return out;
      }
      DispatchResult out = full_solve(rho_phys, k_cur, reduced->t, q, SolverPath::mgcg_fallback);
      out.rejected_res = res;
      out.vcycles += carm.vcycles;
      out.basis_size = carm.size();
      return out;
    }
    DispatchResult out = full_solve(rho_phys, k_cur, t_prev, q, SolverPath::mgcg_fallback);
    out.vcycles += carm.vcycles;
    return out;
  }

  const std::optional<CarmReference<Dim>>& reference() const { return reference_; }
  const std::optional<Carm>& last_carm() const { return last_carm_; }
  int carm_builds() const { return carm_builds_; }
  const DispatchPolicy& policy() const { return policy_; }

 private:
  DispatchResult full_solve(const Vector& rho_phys, const Vector& k_cur, const Vector& x0, const Vector& q,
                            SolverPath path) {
    auto h = std::make_shared<const MgHierarchy<Dim>>(*model_, k_cur, mg_);
    Vector t = x0.size() == q.size() ? x0 : Vector::Zero(q.size());
    const SolveStats stats = mgcg_solve(*h, q, t, policy_.eps2, policy_.cg_max);
    DispatchResult out;
    out.path = path;
    out.res = stats.final_rel_residual;
    out.cg_iters = stats.cg_iterations;
    out.vcycles = stats.vcycles_used;
    out.mgcg_converged = stats.converged;
    if (policy_.method == SolverMethod::mgar) reference_ = CarmReference<Dim>{rho_phys, k_cur, std::move(h), t};
    out.t = std::move(t);
    return out;
  }

  const ThermalModel<Dim>* model_;
  MgOptions mg_;
  DispatchPolicy policy_;
  std::optional<CarmReference<Dim>> reference_;
  std::optional<Carm> last_carm_;
  int carm_builds_ = 0;
};

}  // namespace htopo
