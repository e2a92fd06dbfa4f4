// htopo: command-line driver for the heat-conduction topology optimizer.
//
//   htopo run <config> [--out DIR] [--quiet]
//   htopo compare <configA> <configB> [--quiet]
//   htopo postprocess <config> <field.csv> [--out DIR]
//   htopo validate <config>
//
// Exit status: 0 success, 1 invalid input, 2 runtime failure.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "htopo/config.hpp"
#include "htopo/errors.hpp"
#include "htopo/io.hpp"
#include "htopo/metrics.hpp"
#include "htopo/model.hpp"
#include "htopo/optimizer.hpp"
#include "htopo/postprocess.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace htopo;

namespace {

struct RunOutcome {
  std::vector<IterationRecord> history;
  RunSummary summary;
  double last_objective = 0.0;
  double converged_objective = 0.0;
  double wall_ms = 0.0;
};

FieldFormat field_format(const std::string& name) {
  if (name == "csv") return FieldFormat::csv;
  if (name == "graymap") return FieldFormat::graymap;
  return FieldFormat::vtk_legacy;
}

std::string extension(FieldFormat f) {
  switch (f) {
    case FieldFormat::csv: return ".csv";
    case FieldFormat::graymap: return ".pgm";
    case FieldFormat::vtk_legacy: return ".vtk";
  }
  return "";
}

template <int Dim>
void write_fields(const ParsedConfig& c, const StructuredGrid<Dim>& grid, const Vector& field, const fs::path& dir,
                  const std::string& stem) {
  for (const auto& name : c.formats) {
    const FieldFormat f = field_format(name);
    if (f == FieldFormat::graymap && Dim != 2) continue;
    export_field(field, grid, dir / (stem + extension(f)), f);
  }
}

json postprocess_json(const PostprocessResult& pp) {
  return {{"level", pp.level},
          {"volume_before", pp.volume_before},
          {"volume_after", pp.volume_after},
          {"objective_before", pp.objective_before},
          {"objective_after", pp.objective_after}};
}

json summary_json(const RunSummary& s) {
  json j = {{"cycles", s.cycles},
            {"total_vcycles", s.total_vcycles},
            {"total_cg_iterations", s.total_cg_iterations},
            {"mgcg_evaluations", s.mgcg_evaluations},
            {"total_wall_ms", s.total_wall_ms},
            {"final_objective", s.final_objective}};
  if (s.normalized_cost) j["normalized_cost"] = *s.normalized_cost;
  if (s.improvement) j["improvement"] = *s.improvement;
  if (s.wall_time_improvement) j["wall_time_improvement"] = *s.wall_time_improvement;
  return j;
}

template <int Dim>
RunOutcome run_dim(const ParsedConfig& c, const fs::path& out_dir, bool write, bool quiet) {
  const auto start = std::chrono::steady_clock::now();
  const ThermalModel<Dim> model = build_model<Dim>(c);
  auto observer = [&](const IterationRecord& r) {
    if (quiet) return;
    if (r.cycle % 10 == 0 || r.cycle + 1 == c.max_cycles)
      std::cerr << "cycle " << r.cycle << "  f=" << r.objective << "  vol=" << r.volume << "  r=" << r.radius
                << "  " << to_string(r.solver_path) << "  res=" << r.res << '\n';
  };
  OptResult<Dim> result = run_optimization(model, c, observer);
  const DesignEvaluation final_eval = evaluate_design(model, result.rho_phys, c, result.t);

  RunOutcome outcome;
  outcome.history = result.history;
  outcome.summary = result.summary;
  outcome.last_objective = result.summary.final_objective;
  outcome.converged_objective = final_eval.objective;

  json report;
  if (write) {
    fs::create_directories(out_dir);
    write_fields(c, model.grid, result.rho_phys, out_dir, "density");
    {
      std::vector<IterationRecord> history = result.history;
      if (!c.record_wall_time)
        for (auto& r : history) r.wall_ms = 0.0;
      auto out = io_detail::open_for_write(out_dir / "metrics.csv");
      write_metrics_csv(history, out);
    }
  }
  if (c.postprocess) {
    const PostprocessResult pp = postprocess(model, c, result.rho_phys);
    report["postprocess"] = postprocess_json(pp);
    if (write) write_fields(c, model.grid, pp.smoothed, out_dir, "smoothed");
    if (!quiet)
      std::cerr << "postprocess: level=" << pp.level << "  volume " << pp.volume_before << " -> " << pp.volume_after
                << "  objective " << pp.objective_before << " -> " << pp.objective_after << '\n';
  }
  outcome.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  if (write) {
    report["summary"] = summary_json(result.summary);
    report["final_objective_converged"] = final_eval.objective;
    report["final_volume"] = result.rho_phys.mean();
    report["final_radius"] = result.final_radius;
    report["filter_builds"] = result.filter_builds;
    report["basis_builds"] = result.carm_builds;
    report["max_orthonormality_error"] = result.max_orthonormality_error;
    report["solver"] = to_string(c.solver);
    report["n_on"] = c.effective_n_on();
    report["lp"] = c.effective_lp();
    report["wall_ms"] = outcome.wall_ms;
    auto out = io_detail::open_for_write(out_dir / "summary.json");
    out << report.dump(2) << '\n';
  }
  return outcome;
}

RunOutcome run_config(const ParsedConfig& c, const fs::path& out_dir, bool write, bool quiet) {
  return c.dim == 2 ? run_dim<2>(c, out_dir, write, quiet) : run_dim<3>(c, out_dir, write, quiet);
}

template <int Dim>
void postprocess_dim(const ParsedConfig& c, const fs::path& field_path, const fs::path& out_dir) {
  const ThermalModel<Dim> model = build_model<Dim>(c);
  const Vector rho = read_field_csv(field_path, model.grid);
  if (rho.minCoeff() < 0.0 || rho.maxCoeff() > 1.0)
    throw ValidationError(field_path.string(), "densities must lie in [0, 1]");
  const PostprocessResult pp = postprocess(model, c, rho);
  fs::create_directories(out_dir);
  write_fields(c, model.grid, pp.smoothed, out_dir, "smoothed");
  auto out = io_detail::open_for_write(out_dir / "postprocess.json");
  out << postprocess_json(pp).dump(2) << '\n';
  std::cout << postprocess_json(pp).dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heat-conduction topology optimization with multigrid-assisted reanalysis"};
  app.require_subcommand(1);

  std::string config_a, config_b, field, out_override;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "run the design loop and write fields, metrics.csv and summary.json");
  run->add_option("config", config_a, "configuration file")->required();
  run->add_option("--out", out_override, "output directory (overrides output.dir)");
  run->add_flag("-q,--quiet", quiet, "suppress progress output");

  auto* compare = app.add_subcommand("compare", "run two configurations and report objective and cost parity");
  compare->add_option("config_a", config_a, "configuration under test")->required();
  compare->add_option("config_b", config_b, "baseline configuration")->required();
  compare->add_flag("-q,--quiet", quiet, "suppress progress output");

  auto* post = app.add_subcommand("postprocess", "smooth an existing physical density field");
  post->add_option("config", config_a, "configuration file")->required();
  post->add_option("field", field, "density field in CSV form")->required();
  post->add_option("--out", out_override, "output directory (overrides output.dir)");

  auto* check = app.add_subcommand("validate", "parse and validate a configuration file");
  check->add_option("config", config_a, "configuration file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*check) {
      load_config(config_a);
      std::cout << config_a << ": ok\n";
    } else if (*run) {
      ParsedConfig c = load_config(config_a);
      const fs::path out_dir = out_override.empty() ? fs::path(c.output_dir) : fs::path(out_override);
      const RunOutcome o = run_config(c, out_dir, true, quiet);
      std::cout << "final objective " << o.last_objective << " (converged " << o.converged_objective << "), "
                << o.summary.total_vcycles << " V-cycles, " << o.summary.mgcg_evaluations
                << " MGCG evaluations, output in " << out_dir.string() << '\n';
    } else if (*compare) {
      const ParsedConfig a = load_config(config_a);
      const ParsedConfig b = load_config(config_b);
      const RunOutcome ra = run_config(a, {}, false, quiet);
      const RunOutcome rb = run_config(b, {}, false, quiet);
      const RunSummary sa = summarize(ra.history, rb.summary);
      const double rel = std::abs(ra.converged_objective - rb.converged_objective) / std::abs(rb.converged_objective);
      json report = {{"a", {{"config", config_a}, {"solver", to_string(a.solver)}, {"summary", summary_json(sa)},
                            {"objective_converged", ra.converged_objective}}},
                     {"b", {{"config", config_b}, {"solver", to_string(b.solver)}, {"summary", summary_json(rb.summary)},
                            {"objective_converged", rb.converged_objective}}},
                     {"objective_relative_difference", rel},
                     {"last_objective_relative_difference",
                      std::abs(ra.last_objective - rb.last_objective) / std::abs(rb.last_objective)}};
      std::cout << report.dump(2) << '\n';
    } else if (*post) {
      ParsedConfig c = load_config(config_a);
      const fs::path out_dir = out_override.empty() ? fs::path(c.output_dir) : fs::path(out_override);
      if (c.dim == 2) postprocess_dim<2>(c, field, out_dir);
      else postprocess_dim<3>(c, field, out_dir);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
