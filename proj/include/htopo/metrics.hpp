#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "htopo/errors.hpp"
#include "htopo/io.hpp"
#include "htopo/reanalysis.hpp"

namespace htopo {

struct IterationRecord {
  int cycle = 0;
  double objective = 0.0;
  double volume = 0.0;
  double radius = 0.0;
  SolverPath solver_path = SolverPath::mgcg;
  double res = 0.0;
  int cg_iters = 0;
  int vcycles = 0;
  double wall_ms = 0.0;
};

struct RunSummary {
  int cycles = 0;
  long total_vcycles = 0;
  long total_cg_iterations = 0;
  int mgcg_evaluations = 0;
  double total_wall_ms = 0.0;
  double final_objective = 0.0;
  // Relative to a baseline run, when one was supplied.
  std::optional<double> normalized_cost;        // vcycles / baseline vcycles
  std::optional<double> improvement;            // 1 - normalized_cost
  std::optional<double> wall_time_improvement;  // 1 - wall / baseline wall
};

/// Totals over a run history, optionally normalized by a baseline summary.
/// Cost is counted in V-cycles; wall time is reported alongside.
inline RunSummary summarize(const std::vector<IterationRecord>& history,
                            const std::optional<RunSummary>& baseline = std::nullopt) {
  if (history.empty()) throw ValidationError("history", "cannot summarize an empty run");
  RunSummary s;
  s.cycles = static_cast<int>(history.size());
  for (const auto& r : history) {
    s.total_vcycles += r.vcycles;
    s.total_cg_iterations += r.cg_iters;
    s.total_wall_ms += r.wall_ms;
    if (r.solver_path != SolverPath::mgar) ++s.mgcg_evaluations;
  }
  s.final_objective = history.back().objective;
  if (baseline) {
    if (baseline->total_vcycles > 0) {
      s.normalized_cost = static_cast<double>(s.total_vcycles) / static_cast<double>(baseline->total_vcycles);
      s.improvement = 1.0 - *s.normalized_cost;
    }
    if (baseline->total_wall_ms > 0.0) s.wall_time_improvement = 1.0 - s.total_wall_ms / baseline->total_wall_ms;
  }
  return s;
}

inline constexpr const char* metrics_header = "cycle,objective,volume,radius,solver_path,res,cg_iters,vcycles,wall_ms";

inline void write_metrics_csv(const std::vector<IterationRecord>& history, std::ostream& out) {
  using io_detail::real;
  out << metrics_header << '\n';
  for (const auto& r : history) {
    out << r.cycle << ',' << real(r.objective) << ',' << real(r.volume) << ',' << real(r.radius) << ','
        << to_string(r.solver_path) << ',' << real(r.res) << ',' << r.cg_iters << ',' << r.vcycles << ','
        << real(r.wall_ms) << '\n';
  }
}

}  // namespace htopo
