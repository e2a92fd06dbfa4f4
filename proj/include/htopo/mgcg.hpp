#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "htopo/errors.hpp"
#include "htopo/multigrid.hpp"

namespace htopo {

struct SolveStats {
  int cg_iterations = 0;
  double final_rel_residual = 0.0;  // ||q - K t|| / ||q|| of the returned iterate
  int vcycles_used = 0;
  bool converged = false;
};

/// Optional per-iteration observer: (iteration, recurrence relative residual, iterate).
using CgObserver = std::function<void(int, double, const Vector&)>;

/// Conjugate gradients preconditioned by one V-cycle per application.
/// Stops when ||q - K t|| / ||q|| <= eps or after cg_max iterations and
/// returns the iterate with the smallest residual seen (x0 included).
template <int Dim>
SolveStats mgcg_solve(const MgHierarchy<Dim>& h, const Vector& q, Vector& x, double eps, int cg_max,
                      const CgObserver& observer = {}) {
  SolveStats stats;
  const double qnorm = q.norm();
  if (!(qnorm > 0.0)) throw ValidationError("load", "zero load vector");
  if (x.size() != q.size()) x = Vector::Zero(q.size());
  if (!x.allFinite()) throw ValidationError("initial guess", "non-finite entries");

  Vector kx;
  h.apply(0, x, kx);
  Vector r = q - kx;
  double rel = r.norm() / qnorm;
  if (observer) observer(0, rel, x);

  Vector best = x;
  double best_rel = rel;
  if (rel <= eps) {
    stats.converged = true;
    stats.final_rel_residual = rel;
    return stats;
  }

  Vector z = h.precondition(r);
  ++stats.vcycles_used;
  Vector p = z;
  double rz = r.dot(z);
  Vector kp;
  while (stats.cg_iterations < cg_max) {
    h.apply(0, p, kp);
    const double pkp = p.dot(kp);
    if (!(pkp > 0.0))
      throw NumericalError("CG breakdown: p^T K p = " + std::to_string(pkp) + " (operator not SPD)");
    const double alpha = rz / pkp;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * kp;
    ++stats.cg_iterations;
    rel = r.norm() / qnorm;
    if (observer) observer(stats.cg_iterations, rel, x);
    if (rel < best_rel) {
      best = x;
      best_rel = rel;
    }
    if (rel <= eps) break;
    if (stats.cg_iterations == cg_max) break;
    z = h.precondition(r);
    ++stats.vcycles_used;
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }

  x = best;
  h.apply(0, x, kx);
  stats.final_rel_residual = (q - kx).norm() / qnorm;
  stats.converged = stats.final_rel_residual <= eps;
  return stats;
}

}  // namespace htopo
