#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "htopo/config.hpp"
#include "htopo/errors.hpp"
#include "htopo/fem.hpp"
#include "htopo/filter.hpp"
#include "htopo/metrics.hpp"
#include "htopo/mgcg.hpp"
#include "htopo/model.hpp"
#include "htopo/reanalysis.hpp"

namespace htopo {

struct OcParams {
  double move = 0.2;
  double damping = 0.5;
  double volume_tol = 1e-4;
  double bracket_growth = 2.0;
  int max_bracket_steps = 200;
  int max_bisections = 200;
};

/// Optimality-criteria update
///   rho_new = clamp(rho * (-dfdrho / lambda)^damping, [rho - move, rho + move] n [0, 1])
/// with lambda found by bisection so that volume(rho_new) hits vol_target.
/// `volume` maps a candidate design to its (filtered) volume fraction.
template <typename VolumeFn>
Vector oc_update(const Vector& rho, const Vector& dfdrho, double vol_target, const OcParams& p, VolumeFn&& volume) {
  if (rho.size() != dfdrho.size()) throw ValidationError("oc_update", "size mismatch");
  const Vector drive = (-dfdrho).cwiseMax(0.0);  // positive round-off in dfdrho is clamped to 0
  const Vector lower = (rho.array() - p.move).cwiseMax(0.0);
  const Vector upper = (rho.array() + p.move).cwiseMin(1.0);

  auto candidate = [&](double lambda) {
    Vector x(rho.size());
    for (Index e = 0; e < rho.size(); ++e) {
      const double v = rho[e] * std::pow(drive[e] / lambda, p.damping);
      x[e] = std::clamp(v, lower[e], upper[e]);
    }
    return x;
  };

  double scale = drive.maxCoeff();
  if (!(scale > 0.0)) scale = 1.0;
  double hi = scale, lo = scale;
  // a candidate pinned at its bound cannot move further; the bracket ends there
  int steps = 0;
  for (Vector x = candidate(hi); volume(x) > vol_target && x != lower; x = candidate(hi)) {
    hi *= p.bracket_growth;
    if (++steps > p.max_bracket_steps) throw NumericalError("oc_update: cannot bracket the volume multiplier (upper)");
  }
  steps = 0;
  for (Vector x = candidate(lo); volume(x) < vol_target && x != upper; x = candidate(lo)) {
    lo /= p.bracket_growth;
    if (++steps > p.max_bracket_steps) throw NumericalError("oc_update: cannot bracket the volume multiplier (lower)");
  }

  // volume is nonincreasing in lambda: lo gives >= target, hi gives <= target
  Vector best = candidate(lo);
  double best_err = std::abs(volume(best) - vol_target);
  for (int it = 0; it < p.max_bisections && best_err > p.volume_tol; ++it) {
    const double mid = std::sqrt(lo * hi);
    Vector x = candidate(mid);
    const double v = volume(x);
    const double err = std::abs(v - vol_target);
    if (err < best_err) {
      best = std::move(x);
      best_err = err;
    }
    if (v > vol_target) lo = mid;
    else hi = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  return best;
}

/// OC update whose volume is the mean of the filtered candidate design.
inline Vector oc_update(const Vector& rho, const Vector& dfdrho, double vol_target, const OcParams& p,
                        const FilterWeights& w) {
  return oc_update(rho, dfdrho, vol_target, p, [&](const Vector& x) { return filter_density(x, w).mean(); });
}

inline OcParams oc_params(const ParsedConfig& c) {
  OcParams p;
  p.move = c.move;
  p.damping = c.damping;
  p.volume_tol = c.volume_tol;
  p.bracket_growth = c.bracket_growth;
  return p;
}

inline MgOptions mg_options(const ParsedConfig& c) { return {c.nl, c.omega_jac, c.nu_pre, c.nu_post}; }

inline DispatchPolicy dispatch_policy(const ParsedConfig& c) {
  return {c.solver, c.effective_n_on(), c.eps1, c.eps2, c.cg_max, c.m_basis};
}

template <int Dim>
RadiusSchedule radius_schedule(const ThermalModel<Dim>& m, const ParsedConfig& c) {
  return {c.r_min, c.alpha, m.side_length(), c.effective_lp()};
}

/// Temperature and objective of a fixed design from a converged MGCG solve.
struct DesignEvaluation {
  Vector t;
  double objective = 0.0;
  SolveStats stats;
};

template <int Dim>
DesignEvaluation evaluate_design(const ThermalModel<Dim>& m, const Vector& rho_phys, const ParsedConfig& c,
                                 const Vector& x0 = Vector()) {
  const Vector q = heat_load(m);
  const MgHierarchy<Dim> h(m, conductivities(m, rho_phys), mg_options(c));
  DesignEvaluation ev;
  ev.t = x0.size() == q.size() ? x0 : Vector::Zero(q.size());
  ev.stats = mgcg_solve(h, q, ev.t, c.eps2, std::max(c.cg_max, 1000));
  ev.objective = objective(ev.t, q);
  return ev;
}

template <int Dim>
struct OptResult {
  Vector rho;           // design after the last update
  Vector rho_phys;      // physical densities of the last analyzed cycle
  Vector t;             // temperature of the last analyzed cycle
  Vector dfdrho;        // design sensitivities of the last analyzed cycle
  double final_radius = 0.0;
  std::vector<IterationRecord> history;
  RunSummary summary;
  int filter_builds = 0;
  int carm_builds = 0;
  double max_orthonormality_error = 0.0;  // max |R^T R - I| over all reduced-basis builds
};

using RecordObserver = std::function<void(const IterationRecord&)>;

/// The design loop: filter, solve, sensitivities, chain rule, OC update.
/// The OC bisection targets the volume under the filter of the next cycle, so
/// each analyzed design meets the volume fraction.
template <int Dim>
OptResult<Dim> run_optimization(const ThermalModel<Dim>& m, const ParsedConfig& c, const RecordObserver& observer = {}) {
  using clock = std::chrono::steady_clock;
  const Vector q = heat_load(m);
  const RadiusSchedule schedule = radius_schedule(m, c);
  FilterCache<Dim> filters(m.grid, c.rebuild_filter_every_cycle);
  SolveDispatcher<Dim> dispatcher(m, mg_options(c), dispatch_policy(c));
  const OcParams oc = oc_params(c);

  OptResult<Dim> result;
  Vector rho = Vector::Constant(m.num_elements(), c.volfrac);
  Vector t_prev = Vector::Zero(m.num_nodes());

  for (int k = 0; k < c.max_cycles; ++k) {
    const auto start = clock::now();
    const double radius = schedule.radius_at(k);
    const auto weights = filters.at_radius(radius);
    Vector rho_phys = filter_density(rho, *weights);
    const Vector k_elem = conductivities(m, rho_phys);

    const int builds_before = dispatcher.carm_builds();
    DispatchResult solved = dispatcher.solve(k, rho_phys, k_elem, t_prev, q);
    if (dispatcher.carm_builds() != builds_before) {
      const auto& basis = dispatcher.last_carm()->basis;
      const Eigen::MatrixXd gram = basis.transpose() * basis;
      const double err = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
      result.max_orthonormality_error = std::max(result.max_orthonormality_error, err);
    }
    const double f = objective(solved.t, q);
    if (!std::isfinite(f)) throw NumericalError("non-finite objective at cycle " + std::to_string(k));

    const Vector sens_phys = element_sensitivities(m, solved.t, rho_phys);
    Vector sens = chain_sensitivity(sens_phys, *weights);
    const auto next_weights = filters.at_radius(schedule.radius_at(k + 1));
    Vector rho_new = oc_update(rho, sens, c.volfrac, oc, *next_weights);
    const double change = (rho_new - rho).cwiseAbs().maxCoeff();

    IterationRecord rec;
    rec.cycle = k;
    rec.objective = f;
    rec.volume = rho_phys.mean();
    rec.radius = radius;
    rec.solver_path = solved.path;
    rec.res = solved.res;
    rec.cg_iters = solved.cg_iters;
    rec.vcycles = solved.vcycles;
    rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    result.history.push_back(rec);
    if (observer) observer(rec);

    result.rho_phys = std::move(rho_phys);
    result.t = solved.t;
    result.dfdrho = std::move(sens);
    result.final_radius = radius;
    rho = std::move(rho_new);
    t_prev = std::move(solved.t);
    if (c.change_tol > 0.0 && change < c.change_tol) break;
  }
  result.rho = std::move(rho);
  result.summary = summarize(result.history);
  result.filter_builds = filters.builds();
  result.carm_builds = dispatcher.carm_builds();
  return result;
}

}  // namespace htopo
