// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "htopo/config.hpp"
#include "htopo/filter.hpp"
#include "htopo/mgcg.hpp"
#include "htopo/model.hpp"
#include "htopo/optimizer.hpp"
#include "htopo/postprocess.hpp"
#include "oracles.hpp"

using namespace htopo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::abs(b); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
  }
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << title << " (" << fmt(seconds_since(t0))
            << " s) -- " << o.detail << std::endl;
}

template <int Dim>
struct Run {
  ParsedConfig config;
  ThermalModel<Dim> model;
  OptResult<Dim> result;
  double converged_objective = 0.0;
  double seconds = 0.0;
};

template <int Dim>
Run<Dim> optimize(const ParsedConfig& c) {
  const auto t0 = Clock::now();
  Run<Dim> r{c, build_model<Dim>(c), {}, 0.0, 0.0};
  r.result = run_optimization(r.model, c);
  r.converged_objective = evaluate_design(r.model, r.result.rho_phys, c, r.result.t).objective;
  r.seconds = seconds_since(t0);
  return r;
}

ParsedConfig run5_config(SolverMethod method) {
  ParsedConfig c;
  c.nel = {120, 120};
  c.source_values = {1e-4};
  c.volfrac = 0.5;
  c.r_min = 3.0;
  c.max_cycles = 150;
  c.solver = method;
  validate(c);
  return c;
}

// --- 1 ---------------------------------------------------------------------
Outcome linear_solve() {
  const auto t0 = Clock::now();
  ParsedConfig c;
  c.nel = {8, 8};
  const auto m = build_model<2>(c);
  const Vector k = conductivities(m, Vector::Constant(m.num_elements(), 0.5));
  MgHierarchy<2> h(m, k, {3, 0.6, 1, 1});
  Vector t;
  mgcg_solve(h, heat_load(m), t, 1e-10, 200);
  const Vector exact = oracle::dense_solve(oracle::dense_K(m, k), oracle::dense_load(m));
  const double err = (t - exact).norm() / exact.norm();
  const double secs = seconds_since(t0);
  Outcome o;
  o.check(err <= 1e-8, "relative error " + fmt(err) + " <= 1e-8");
  o.check(secs < 1.0, "runtime " + fmt(secs) + " s < 1 s");
  return o;
}

// --- 2 ---------------------------------------------------------------------
Outcome sensitivities() {
  const auto t0 = Clock::now();
  const auto m = oracle::small_model<2>({6, 6});
  Vector rho(m.num_elements());
  for (Index e = 0; e < rho.size(); ++e) rho[e] = 0.3 + 0.5 * std::abs(std::sin(1.7 * e + 0.4));
  const Vector k = conductivities(m, rho);
  const Vector t = oracle::dense_solve(oracle::dense_K(m, k), heat_load(m));
  const Vector analytic = element_sensitivities(m, t, rho);
  const Vector fd = oracle::fd_sensitivities(m, rho, 1e-6);
  double worst = 0.0;
  for (Index e = 0; e < rho.size(); ++e) worst = std::max(worst, std::abs(analytic[e] - fd[e]) / std::abs(fd[e]));
  const double secs = seconds_since(t0);
  Outcome o;
  o.check(worst <= 1e-4, "max per-element relative error " + fmt(worst) + " <= 1e-4");
  o.check(secs < 5.0, "runtime " + fmt(secs) + " s < 5 s");
  return o;
}

// --- 3 ---------------------------------------------------------------------
Outcome multigrid_identities() {
  const auto t0 = Clock::now();
  Outcome o;
  {
    const auto m = oracle::small_model<2>({4, 4});
    Vector k(m.num_elements());
    for (Index e = 0; e < k.size(); ++e) k[e] = 1e-3 + std::abs(std::cos(0.9 * e));
    MgHierarchy<2> h(m, k, {2, 0.6, 1, 1});
    const Eigen::MatrixXd p = oracle::dense_prolongation(m.grid, m.is_fixed);
    Eigen::MatrixXd expected = p.transpose() * oracle::dense_K(m, k) * p;
    for (Index i = 0; i < expected.rows(); ++i)
      if (h.fixed(1)[static_cast<std::size_t>(i)]) expected(i, i) += 1.0;
    const double err = (Eigen::MatrixXd(h.matrix(1)) - expected).cwiseAbs().maxCoeff();
    o.check(err <= 1e-13, "Galerkin max deviation " + fmt(err) + " <= 1e-13");
  }
  {
    const auto m = oracle::small_model<2>({64, 64});
    const Vector k = Vector::Constant(m.num_elements(), simp_conductivity(0.5, m.material));
    MgHierarchy<2> h(m, k, {3, 0.6, 1, 1});
    const Vector q = heat_load(m);
    Vector x = oracle::random_vector(m.num_nodes(), 7);
    for (Index i = 0; i < x.size(); ++i)
      if (m.is_fixed[static_cast<std::size_t>(i)]) x[i] = 0.0;
    double prev = (q - apply_K(m, k, x)).norm(), worst = 0.0;
    for (int c = 0; c < 10; ++c) {
      h.vcycle(q, x);
      const double r = (q - apply_K(m, k, x)).norm();
      worst = std::max(worst, r / prev);
      prev = r;
    }
    o.check(worst <= 0.5, "worst residual reduction factor over 10 cycles " + fmt(worst) + " <= 0.5");

    const Eigen::SparseMatrix<double> K = oracle::sparse_K(m, k);
    const Vector exact = oracle::sparse_solve(K, q);
    auto energy = [&](const Vector& e) { return std::sqrt(e.dot(K * e)); };
    x.setZero();
    double eprev = energy(exact), eworst = 0.0;
    for (int c = 0; c < 5; ++c) {
      h.vcycle(q, x);
      const double e = energy(exact - x);
      eworst = std::max(eworst, e / eprev);
      eprev = e;
    }
    o.check(eworst <= 0.5, "worst energy-error reduction from zero guess " + fmt(eworst) + " <= 0.5");
  }
  {
    const auto m = oracle::small_model<2>({32, 32});
    Vector k(m.num_elements());
    for (Index e = 0; e < k.size(); ++e) k[e] = simp_conductivity(std::abs(std::sin(0.37 * e)), m.material);
    MgHierarchy<2> h(m, k, {3, 0.6, 1, 1});
    double worst = 0.0;
    for (unsigned s = 0; s < 10; ++s) {
      const Vector u = oracle::random_vector(m.num_nodes(), 100 + s), v = oracle::random_vector(m.num_nodes(), 200 + s);
      const double a = u.dot(h.precondition(v)), b = v.dot(h.precondition(u));
      worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), std::abs(b)));
    }
    o.check(worst <= 1e-10, "preconditioner asymmetry " + fmt(worst) + " <= 1e-10");
  }
  const double secs = seconds_since(t0);
  o.check(secs < 10.0, "runtime " + fmt(secs) + " s < 10 s");
  return o;
}

// --- 4 ---------------------------------------------------------------------
Outcome reanalysis_checks() {
  Outcome o;
  {
    const auto m = oracle::small_model<2>({6, 6});
    Vector k(m.num_elements());
    for (Index e = 0; e < k.size(); ++e) k[e] = simp_conductivity(0.2 + 0.7 * std::abs(std::sin(1.3 * e)), m.material);
    const Vector q = heat_load(m);
    const Vector t0 = oracle::dense_solve(oracle::dense_K(m, k), q);
    CarmReference<2> ref{Vector::Zero(m.num_elements()), k,
                         std::make_shared<const MgHierarchy<2>>(m, k, MgOptions{2, 0.6, 1, 1}), t0};
    const Carm carm = build_carm(m, k, ref, t0, 2);
    const ReducedSolution sol = reduced_solve(m, carm, k, q);
    const double diff = (sol.t - t0).norm() / t0.norm();
    const double res = residual_norm(m, k, sol.t, q);
    o.check(diff <= 1e-12, "|t - t0|/|t0| = " + fmt(diff));
    o.check(res <= 1e-12, "Res " + fmt(res) + " <= 1e-12");
  }
  {
    ParsedConfig c;
    c.nel = {48, 48};
    c.max_cycles = 50;
    c.postprocess = false;
    const auto m = build_model<2>(c);
    const auto r = run_optimization(m, c);
    o.check(r.carm_builds > 0, std::to_string(r.carm_builds) + " basis builds in a 50-cycle run");
    o.check(r.max_orthonormality_error <= 1e-10,
            "max |R^T R - I| over builds " + fmt(r.max_orthonormality_error) + " <= 1e-10");
  }
  return o;
}

// --- 5, 6, 7, 9 --------------------------------------------------------------
std::optional<Run<2>> run5_mgar, run5_mgcg;

void ensure_run5() {
  if (!run5_mgar) run5_mgar = optimize<2>(run5_config(SolverMethod::mgar));
  if (!run5_mgcg) run5_mgcg = optimize<2>(run5_config(SolverMethod::mgcg));
}

Outcome parity_120() {
  ensure_run5();
  const auto& a = *run5_mgar;
  const auto& b = *run5_mgcg;
  const double conv = rel_diff(a.converged_objective, b.converged_objective);
  const double last = rel_diff(a.result.history.back().objective, b.result.history.back().objective);
  Outcome o;
  o.check(conv <= 5e-3, "converged final objective " + fmt(a.converged_objective) + " vs " +
                            fmt(b.converged_objective) + ", rel diff " + fmt(conv) + " <= 0.005");
  o.check(last <= 5e-3, "last-cycle objective rel diff " + fmt(last) + " <= 0.005");
  o.check(a.config.effective_n_on() == 20, "N_on = " + std::to_string(a.config.effective_n_on()));
  o.check(a.seconds + b.seconds < 300.0, "runtime " + fmt(a.seconds) + " s + " + fmt(b.seconds) + " s < 300 s");
  return o;
}

Outcome reconstruction_criterion() {
  ensure_run5();
  const auto& h = run5_mgar->result.history;
  const int n_on = run5_mgar->config.effective_n_on();
  int mgar = 0, fallback = 0, bad_res = 0, early_non_mgcg = 0;
  double worst = 0.0;
  for (const auto& r : h) {
    if (r.solver_path == SolverPath::mgar) {
      ++mgar;
      worst = std::max(worst, r.res);
      if (r.res > 0.5) ++bad_res;
    }
    if (r.solver_path == SolverPath::mgcg_fallback) ++fallback;
    if (r.cycle < n_on && r.solver_path != SolverPath::mgcg) ++early_non_mgcg;
  }
  Outcome o;
  o.check(bad_res == 0, std::to_string(mgar) + " mgar cycles, max res " + fmt(worst) + " <= 0.5");
  o.check(early_non_mgcg == 0, "cycles 0.." + std::to_string(n_on - 1) + " all mgcg");
  o.detail += "; " + std::to_string(fallback) + " fallbacks";
  return o;
}

Outcome cost_proxy() {
  ensure_run5();
  const RunSummary s = summarize(run5_mgar->result.history, run5_mgcg->result.summary);
  const long a = run5_mgar->result.summary.total_vcycles, b = run5_mgcg->result.summary.total_vcycles;
  Outcome o;
  o.check(a < b, "total V-cycles mgar " + std::to_string(a) + " < mgcg " + std::to_string(b));
  o.detail += "; ratio " + fmt(*s.normalized_cost) + ", improvement " + fmt(*s.improvement) +
              ", wall-time improvement " + fmt(*s.wall_time_improvement) + ", MGCG evaluations " +
              std::to_string(run5_mgar->result.summary.mgcg_evaluations) + "/" +
              std::to_string(run5_mgcg->result.summary.mgcg_evaluations);
  return o;
}

Outcome postprocessing() {
  ensure_run5();
  const auto& r = *run5_mgar;
  const PostprocessResult pp = postprocess(r.model, r.config, r.result.rho_phys);
  const double dv = std::abs(pp.volume_after - r.config.volfrac);
  const double increase = (pp.objective_after - pp.objective_before) / pp.objective_before;
  Outcome o;
  o.check(dv <= 1e-3, "smoothed volume " + fmt(pp.volume_after) + ", |dV| " + fmt(dv) + " <= 1e-3");
  o.check(increase >= 0.0 && increase <= 0.10, "objective " + fmt(pp.objective_before) + " -> " +
                                                    fmt(pp.objective_after) + " (+" + fmt(100 * increase) +
                                                    "%), within [0, 10%]");
  const double lo = pp.nodal.minCoeff(), hi = pp.nodal.maxCoeff();
  double prev = 2.0;
  bool monotone = true;
  for (int i = 0; i < 20; ++i) {
    const double level = lo + (hi - lo) * (i + 0.5) / 20.0;
    const double v = smooth_densities(pp.nodal, level, r.model.grid, r.config.subdiv).mean();
    monotone = monotone && v <= prev;
    prev = v;
  }
  o.check(monotone, "volume nonincreasing over 20 sampled levels");
  return o;
}

// --- 8 ---------------------------------------------------------------------
Outcome quadrant_checks() {
  ParsedConfig c;
  c.nel = {96, 96};
  c.source_kind = SourceKind::quadrants;
  c.source_values = {5e-5, 1e-4, 1.5e-4, 3e-4};
  c.volfrac = 0.4;
  c.max_cycles = 100;
  validate(c);
  const auto a = optimize<2>(c);
  c.solver = SolverMethod::mgcg;
  const auto b = optimize<2>(c);
  double worst = 0.0;
  for (const auto* r : {&a, &b})
    for (const auto& rec : r->result.history) worst = std::max(worst, std::abs(rec.volume - 0.4));
  const double conv = rel_diff(a.converged_objective, b.converged_objective);
  const double last = rel_diff(a.result.history.back().objective, b.result.history.back().objective);
  Outcome o;
  o.check(a.result.history.size() == 100 && b.result.history.size() == 100, "both runs completed 100 cycles");
  o.check(conv <= 5e-3, "converged objective rel diff " + fmt(conv) + " <= 0.005");
  o.check(last <= 5e-3, "last-cycle objective rel diff " + fmt(last) + " <= 0.005");
  o.check(worst <= 1e-3, "max volume deviation " + fmt(worst) + " <= 1e-3");
  return o;
}

// --- 10 --------------------------------------------------------------------
Outcome smoke_3d() {
  ParsedConfig c = parse_config("mesh.dim = 3\n");
  c.nel = {32, 32, 64};
  c.boundary_preset = "back-center-quarter";
  c.volfrac = 0.3;
  c.cg_max = 50;
  c.max_cycles = 60;
  validate(c);
  const auto a = optimize<3>(c);
  c.solver = SolverMethod::mgcg;
  const auto b = optimize<3>(c);
  const auto& h = a.result.history;
  const double conv = rel_diff(a.converged_objective, b.converged_objective);
  const double last = rel_diff(h.back().objective, b.result.history.back().objective);
  Outcome o;
  o.check(h.size() == 60, "completed " + std::to_string(h.size()) + " cycles");
  o.check(h.back().objective < h.front().objective,
          "objective " + fmt(h.front().objective) + " -> " + fmt(h.back().objective));
  o.check(conv <= 1e-2, "converged objective rel diff " + fmt(conv) + " <= 0.01");
  o.check(last <= 1e-2, "last-cycle objective rel diff " + fmt(last) + " <= 0.01");
  o.check(a.seconds + b.seconds < 600.0, "runtime " + fmt(a.seconds) + " s + " + fmt(b.seconds) + " s < 600 s");
  o.detail += "; V-cycles " + std::to_string(a.result.summary.total_vcycles) + " vs " +
              std::to_string(b.result.summary.total_vcycles);
  return o;
}

// --- 11 --------------------------------------------------------------------
Outcome schedule_and_filter() {
  Outcome o;
  double worst = 0.0;
  for (double side : {120.0, 480.0, 1000.0})
    for (int lp : {83, 125, 250}) {
      const RadiusSchedule s{3.0, 1.4 / 50.0, side, lp};
      worst = std::max(worst, std::abs(s.radius_at(lp) - 3.0));
    }
  o.check(worst <= 1e-9, "max |r(lp) - r_min| " + fmt(worst) + " <= 1e-9");

  double pou = 0.0, adj = 0.0;
  StructuredGrid<2> g2{{40, 30}};
  StructuredGrid<3> g3{{12, 10, 8}};
  auto check_filter = [&](const FilterWeights& w, Index n) {
    for (Index e = 0; e < w.rows(); ++e) {
      double s = 0.0;
      for (Index p = w.row_start[e]; p < w.row_start[e + 1]; ++p) s += w.weights[p];
      pou = std::max(pou, std::abs(s - 1.0));
    }
    for (unsigned k = 0; k < 10; ++k) {
      const Vector a = oracle::random_vector(n, 300 + k), b = oracle::random_vector(n, 400 + k);
      const double lhs = a.dot(filter_density(b, w)), rhs = chain_sensitivity(a, w).dot(b);
      adj = std::max(adj, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
  };
  for (double r : {1.5, 3.0, 3.36, 5.2}) check_filter(build_filter(g2, r), g2.num_elements());
  for (double r : {1.5, 2.5}) check_filter(build_filter(g3, r), g3.num_elements());
  o.check(pou <= 1e-12, "partition of unity deviation " + fmt(pou) + " <= 1e-12");
  o.check(adj <= 1e-12, "adjoint identity deviation " + fmt(adj) + " <= 1e-12");
  return o;
}

// --- 12 --------------------------------------------------------------------
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "htopo_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "det.cfg";
  std::ofstream(cfg) << "mesh.nel = 48,48\noptimizer.max_cycles = 60\npostprocess.enabled = true\n";
  auto invoke = [&](const std::string& out) {
    const std::string cmd = std::string("\"") + HTOPO_CLI + "\" run -q \"" + cfg.string() + "\" --out \"" +
                            (dir / out).string() + "\" > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  Outcome o;
  const int s1 = invoke("a"), s2 = invoke("b");
  o.check(s1 == 0 && s2 == 0, "both runs exit 0");
  const std::string a = slurp(dir / "a" / "metrics.csv"), b = slurp(dir / "b" / "metrics.csv");
  o.check(!a.empty() && a == b, "metrics.csv byte-identical (" + std::to_string(a.size()) + " bytes)");
  return o;
}

}  // namespace

int main() {
  std::cout << "acceptance suite" << std::endl;
  report(1, "linear solve matches dense oracle", linear_solve);
  report(2, "sensitivities match finite differences", sensitivities);
  report(3, "Galerkin and multigrid identities", multigrid_identities);
  report(4, "reanalysis exactness and orthonormality", reanalysis_checks);
  report(5, "MGAR/MGCG objective parity, 120x120", parity_120);
  report(6, "reconstruction criterion enforcement", reconstruction_criterion);
  report(7, "V-cycle cost proxy", cost_proxy);
  report(8, "non-uniform source, 96x96", quadrant_checks);
  report(9, "post-processing", postprocessing);
  report(10, "3D quarter-model smoke run", smoke_3d);
  report(11, "schedule and filter properties", schedule_and_filter);
  report(12, "determinism of metrics.csv", determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures;
}
