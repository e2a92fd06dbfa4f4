#pragma once

// Line-oriented configuration format:
//
//   # comment
//   section.key = value
//   mesh.nel = 120,120
//
// Keys are case-sensitive, unknown keys are rejected, and every value is
// validated once the whole file has been read. Real-valued keys also accept
// a simple quotient such as `filter.alpha = 1.4/50`.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "htopo/errors.hpp"

namespace htopo {

enum class SolverMethod { mgar, mgcg };
enum class SourceKind { uniform, quadrants, file };

inline std::string to_string(SolverMethod m) { return m == SolverMethod::mgar ? "mgar" : "mgcg"; }

struct ParsedConfig {
  // mesh / material
  int dim = 2;
  std::vector<int> nel = {96, 96};
  double k0 = 1.0;
  double kmin = 1e-3;
  double penal = 3.0;

  // loads and supports
  SourceKind source_kind = SourceKind::uniform;
  std::vector<double> source_values = {1e-4};
  std::string source_file;
  std::string boundary_preset = "mid-left";
  std::string boundary_file;

  double volfrac = 0.5;

  // continuous density filter
  double r_min = 3.0;
  double alpha = 1.4 / 50.0;
  std::optional<int> lp;
  double lp_fraction = 5.0 / 6.0;
  bool rebuild_filter_every_cycle = false;

  // optimality-criteria loop
  int max_cycles = 300;
  double change_tol = 0.0;  // 0 disables the early stop
  double move = 0.2;
  double damping = 0.5;
  double volume_tol = 1e-4;
  double bracket_growth = 2.0;

  // linear solvers
  SolverMethod solver = SolverMethod::mgar;
  int nl = 3;
  double eps1 = 0.5;
  double eps2 = 1e-6;
  int cg_max = 200;
  int m_basis = 2;
  std::optional<int> n_on;
  double n_on_fraction = 2.0 / 15.0;
  double omega_jac = 0.6;
  int nu_pre = 1;
  int nu_post = 1;

  // boundary smoothing
  bool postprocess = true;
  int subdiv = 4;
  std::optional<double> r_proj;

  // output
  std::string output_dir = "out";
  std::vector<std::string> formats = {"csv", "graymap", "vtk"};
  bool record_wall_time = false;

  /// Activation cycle: absolute override, else ceil(fraction * max_cycles).
  int effective_n_on() const {
    if (n_on) return *n_on;
    return static_cast<int>(std::ceil(n_on_fraction * max_cycles - 1e-9));
  }
  /// Cycles to reach r_min: absolute override, else floor(fraction * max_cycles).
  int effective_lp() const {
    if (lp) return *lp;
    return std::max(1, static_cast<int>(std::floor(lp_fraction * max_cycles + 1e-9)));
  }
  double effective_r_proj() const { return r_proj.value_or(r_min); }

  bool operator==(const ParsedConfig&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_real(const std::string& key, std::string_view text) {
  text = trim(text);
  const auto slash = text.find('/');
  if (slash != std::string_view::npos) {
    const double num = parse_real(key, text.substr(0, slash));
    const double den = parse_real(key, text.substr(slash + 1));
    if (den == 0.0) throw ValidationError(key, "division by zero in '" + std::string(text) + "'");
    return num / den;
  }
  double v = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty())
    throw ValidationError(key, "expected a number, got '" + std::string(text) + "'");
  if (!std::isfinite(v)) throw ValidationError(key, "value must be finite");
  return v;
}

inline int parse_int(const std::string& key, std::string_view text) {
  text = trim(text);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ValidationError(key, "expected an integer, got '" + std::string(text) + "'");
  return v;
}

inline bool parse_bool(const std::string& key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ValidationError(key, "expected true or false, got '" + std::string(text) + "'");
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F&& fmt) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ',';
    s += fmt(xs[i]);
  }
  return s;
}

}  // namespace detail

/// Checks every cross-field invariant. Throws ValidationError naming the key.
inline void validate(const ParsedConfig& c) {
  auto fail = [](const char* key, const std::string& msg) { throw ValidationError(key, msg); };

  if (c.dim != 2 && c.dim != 3) fail("mesh.dim", "must be 2 or 3");
  if (static_cast<int>(c.nel.size()) != c.dim)
    fail("mesh.nel", "expected " + std::to_string(c.dim) + " element counts");
  if (c.nl < 1 || c.nl > 12) fail("solver.nl", "coarsening level must be in [1, 12]");
  const int divisor = 1 << (c.nl - 1);
  for (int n : c.nel) {
    if (n <= 0) fail("mesh.nel", "element counts must be positive");
    if (n % divisor != 0)
      fail("mesh.nel", "every element count must be a multiple of 2^(nl-1) = " + std::to_string(divisor) +
                           " for solver.nl = " + std::to_string(c.nl) + " (got " + std::to_string(n) + ")");
  }
  if (!(c.kmin > 0.0)) fail("material.kmin", "must be > 0");
  if (!(c.k0 > c.kmin)) fail("material.k0", "must exceed material.kmin");
  if (!(c.penal >= 1.0)) fail("material.penal", "must be >= 1");

  switch (c.source_kind) {
    case SourceKind::uniform:
      if (c.source_values.size() != 1) fail("source.uniform", "expected one value");
      break;
    case SourceKind::quadrants:
      if (c.source_values.size() != 4) fail("source.quadrants", "expected four values");
      break;
    case SourceKind::file:
      if (c.source_file.empty()) fail("source.file", "path must not be empty");
      break;
  }
  if (c.source_kind != SourceKind::file) {
    const char* key = c.source_kind == SourceKind::uniform ? "source.uniform" : "source.quadrants";
    if (std::any_of(c.source_values.begin(), c.source_values.end(), [](double q) { return q < 0.0; }))
      fail(key, "heat source values must be >= 0");
    if (std::none_of(c.source_values.begin(), c.source_values.end(), [](double q) { return q > 0.0; }))
      fail(key, "at least one heat source value must be > 0");
  }

  if (c.boundary_file.empty()) {
    const bool ok2 = c.dim == 2 && c.boundary_preset == "mid-left";
    const bool ok3 = c.dim == 3 && (c.boundary_preset == "back-center" || c.boundary_preset == "back-center-quarter");
    if (!ok2 && !ok3)
      fail("boundary.preset", "unknown preset '" + c.boundary_preset + "' for a " + std::to_string(c.dim) + "D mesh");
  }

  if (!(c.volfrac > 0.0 && c.volfrac < 1.0)) fail("design.volfrac", "must lie in (0, 1)");
  if (!(c.r_min >= 1.0)) fail("filter.r_min", "must be >= 1 element");
  if (!(c.alpha > 0.0)) fail("filter.alpha", "must be > 0");
  if (c.lp && *c.lp < 1) fail("filter.lp", "must be >= 1");
  if (!(c.lp_fraction > 0.0 && c.lp_fraction <= 1.0)) fail("filter.lp_fraction", "must lie in (0, 1]");

  if (c.max_cycles < 1) fail("optimizer.max_cycles", "must be >= 1");
  if (!(c.change_tol >= 0.0)) fail("optimizer.change_tol", "must be >= 0");
  if (!(c.move > 0.0 && c.move <= 1.0)) fail("optimizer.move", "must lie in (0, 1]");
  if (!(c.damping > 0.0 && c.damping <= 1.0)) fail("optimizer.damping", "must lie in (0, 1]");
  if (!(c.volume_tol > 0.0)) fail("optimizer.volume_tol", "must be > 0");
  if (!(c.bracket_growth > 1.0)) fail("optimizer.bracket_growth", "must be > 1");

  if (!(c.eps2 > 0.0)) fail("solver.eps2", "must be > 0");
  if (!(c.eps1 >= c.eps2)) fail("solver.eps1", "reconstruction criterion must be >= solver.eps2");
  if (c.cg_max < 1) fail("solver.cg_max", "must be >= 1");
  if (c.m_basis < 1 || c.m_basis > 10) fail("solver.m_basis", "must lie in [1, 10]");
  if (c.n_on && *c.n_on < 0) fail("solver.n_on", "must be >= 0");
  if (!(c.n_on_fraction >= 0.0 && c.n_on_fraction <= 1.0)) fail("solver.n_on_fraction", "must lie in [0, 1]");
  if (!(c.omega_jac > 0.0 && c.omega_jac <= 1.0)) fail("solver.omega_jac", "must lie in (0, 1]");
  if (c.nu_pre < 1) fail("solver.nu_pre", "must be >= 1");
  if (c.nu_post != c.nu_pre) fail("solver.nu_post", "must equal solver.nu_pre (symmetric preconditioner)");

  if (c.subdiv < 1) fail("postprocess.subdiv", "must be >= 1");
  if (c.r_proj && !(*c.r_proj >= 1.0)) fail("postprocess.r_proj", "must be >= 1 element");

  if (c.output_dir.empty()) fail("output.dir", "must not be empty");
  for (const auto& f : c.formats)
    if (f != "csv" && f != "graymap" && f != "vtk") fail("output.formats", "unknown format '" + f + "'");
}

/// Parses and validates configuration text. Parse errors carry `line N`,
/// validation errors carry the key path.
inline ParsedConfig parse_config(std::string_view text) {
  ParsedConfig c;
  std::map<std::string, std::pair<std::string, int>> entries;

  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno);
    if (eq == std::string_view::npos) throw ValidationError(where, "expected 'section.key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty() || key.find('.') == std::string::npos)
      throw ValidationError(where, "key must have the form section.key");
    if (entries.count(key)) throw ValidationError(where, "duplicate key '" + key + "'");
    entries.emplace(key, std::make_pair(value, lineno));
  }

  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = entries.find(key);
    if (it == entries.end()) return std::nullopt;
    std::string v = it->second.first;
    entries.erase(it);
    return v;
  };
  auto real = [&](const char* key, double& dst) {
    if (auto v = take(key)) dst = detail::parse_real(key, *v);
  };
  auto integer = [&](const char* key, int& dst) {
    if (auto v = take(key)) dst = detail::parse_int(key, *v);
  };
  auto boolean = [&](const char* key, bool& dst) {
    if (auto v = take(key)) dst = detail::parse_bool(key, *v);
  };

  integer("mesh.dim", c.dim);
  if (c.dim == 3) {
    c.nel = {32, 32, 64};
    c.boundary_preset = "back-center-quarter";
    c.cg_max = 50;
  }
  if (auto v = take("mesh.nel")) {
    c.nel.clear();
    for (const auto& s : detail::split_list(*v)) c.nel.push_back(detail::parse_int("mesh.nel", s));
  }
  real("material.k0", c.k0);
  real("material.kmin", c.kmin);
  real("material.penal", c.penal);

  auto uniform = take("source.uniform");
  auto quadrants = take("source.quadrants");
  auto source_file = take("source.file");
  if (int(bool(uniform)) + int(bool(quadrants)) + int(bool(source_file)) > 1)
    throw ValidationError("source", "give only one of source.uniform, source.quadrants, source.file");
  if (uniform) {
    c.source_kind = SourceKind::uniform;
    c.source_values = {detail::parse_real("source.uniform", *uniform)};
  } else if (quadrants) {
    c.source_kind = SourceKind::quadrants;
    c.source_values.clear();
    for (const auto& s : detail::split_list(*quadrants))
      c.source_values.push_back(detail::parse_real("source.quadrants", s));
  } else if (source_file) {
    c.source_kind = SourceKind::file;
    c.source_values.clear();
    c.source_file = *source_file;
  }

  if (auto v = take("boundary.preset")) c.boundary_preset = *v;
  if (auto v = take("boundary.file")) c.boundary_file = *v;

  real("design.volfrac", c.volfrac);

  real("filter.r_min", c.r_min);
  real("filter.alpha", c.alpha);
  if (auto v = take("filter.lp")) c.lp = detail::parse_int("filter.lp", *v);
  real("filter.lp_fraction", c.lp_fraction);
  boolean("filter.rebuild_every_cycle", c.rebuild_filter_every_cycle);

  integer("optimizer.max_cycles", c.max_cycles);
  real("optimizer.change_tol", c.change_tol);
  real("optimizer.move", c.move);
  real("optimizer.damping", c.damping);
  real("optimizer.volume_tol", c.volume_tol);
  real("optimizer.bracket_growth", c.bracket_growth);

  if (auto v = take("solver.method")) {
    if (*v == "mgar") c.solver = SolverMethod::mgar;
    else if (*v == "mgcg") c.solver = SolverMethod::mgcg;
    else throw ValidationError("solver.method", "expected mgar or mgcg, got '" + *v + "'");
  }
  integer("solver.nl", c.nl);
  real("solver.eps1", c.eps1);
  real("solver.eps2", c.eps2);
  integer("solver.cg_max", c.cg_max);
  integer("solver.m_basis", c.m_basis);
  if (auto v = take("solver.n_on")) c.n_on = detail::parse_int("solver.n_on", *v);
  real("solver.n_on_fraction", c.n_on_fraction);
  real("solver.omega_jac", c.omega_jac);
  integer("solver.nu_pre", c.nu_pre);
  integer("solver.nu_post", c.nu_post);

  boolean("postprocess.enabled", c.postprocess);
  integer("postprocess.subdiv", c.subdiv);
  if (auto v = take("postprocess.r_proj")) c.r_proj = detail::parse_real("postprocess.r_proj", *v);

  if (auto v = take("output.dir")) c.output_dir = *v;
  if (auto v = take("output.formats")) c.formats = detail::split_list(*v);
  boolean("output.record_wall_time", c.record_wall_time);

  if (!entries.empty()) {
    const auto& [key, val] = *entries.begin();
    throw ValidationError("line " + std::to_string(val.second), "unknown key '" + key + "'");
  }
  validate(c);
  return c;
}

/// Writes every field back out; parse_config(serialize(c)) == c.
inline std::string serialize(const ParsedConfig& c) {
  using detail::format_real;
  auto ints = [](int v) { return std::to_string(v); };
  auto strs = [](const std::string& s) { return s; };
  std::ostringstream o;
  o << "mesh.dim = " << c.dim << '\n';
  o << "mesh.nel = " << detail::join(c.nel, ints) << '\n';
  o << "material.k0 = " << format_real(c.k0) << '\n';
  o << "material.kmin = " << format_real(c.kmin) << '\n';
  o << "material.penal = " << format_real(c.penal) << '\n';
  switch (c.source_kind) {
    case SourceKind::uniform: o << "source.uniform = " << format_real(c.source_values.at(0)) << '\n'; break;
    case SourceKind::quadrants:
      o << "source.quadrants = " << detail::join(c.source_values, format_real) << '\n';
      break;
    case SourceKind::file: o << "source.file = " << c.source_file << '\n'; break;
  }
  o << "boundary.preset = " << c.boundary_preset << '\n';
  if (!c.boundary_file.empty()) o << "boundary.file = " << c.boundary_file << '\n';
  o << "design.volfrac = " << format_real(c.volfrac) << '\n';
  o << "filter.r_min = " << format_real(c.r_min) << '\n';
  o << "filter.alpha = " << format_real(c.alpha) << '\n';
  if (c.lp) o << "filter.lp = " << *c.lp << '\n';
  o << "filter.lp_fraction = " << format_real(c.lp_fraction) << '\n';
  o << "filter.rebuild_every_cycle = " << (c.rebuild_filter_every_cycle ? "true" : "false") << '\n';
  o << "optimizer.max_cycles = " << c.max_cycles << '\n';
  o << "optimizer.change_tol = " << format_real(c.change_tol) << '\n';
  o << "optimizer.move = " << format_real(c.move) << '\n';
  o << "optimizer.damping = " << format_real(c.damping) << '\n';
  o << "optimizer.volume_tol = " << format_real(c.volume_tol) << '\n';
  o << "optimizer.bracket_growth = " << format_real(c.bracket_growth) << '\n';
  o << "solver.method = " << to_string(c.solver) << '\n';
  o << "solver.nl = " << c.nl << '\n';
  o << "solver.eps1 = " << format_real(c.eps1) << '\n';
  o << "solver.eps2 = " << format_real(c.eps2) << '\n';
  o << "solver.cg_max = " << c.cg_max << '\n';
  o << "solver.m_basis = " << c.m_basis << '\n';
  if (c.n_on) o << "solver.n_on = " << *c.n_on << '\n';
  o << "solver.n_on_fraction = " << format_real(c.n_on_fraction) << '\n';
  o << "solver.omega_jac = " << format_real(c.omega_jac) << '\n';
  o << "solver.nu_pre = " << c.nu_pre << '\n';
  o << "solver.nu_post = " << c.nu_post << '\n';
  o << "postprocess.enabled = " << (c.postprocess ? "true" : "false") << '\n';
  o << "postprocess.subdiv = " << c.subdiv << '\n';
  if (c.r_proj) o << "postprocess.r_proj = " << format_real(*c.r_proj) << '\n';
  o << "output.dir = " << c.output_dir << '\n';
  o << "output.formats = " << detail::join(c.formats, strs) << '\n';
  o << "output.record_wall_time = " << (c.record_wall_time ? "true" : "false") << '\n';
  return o.str();
}

/// Reads and parses a configuration file. Relative source and boundary
/// file paths are resolved against the directory holding the file.
inline ParsedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open configuration file");
  std::ostringstream text;
  text << in.rdbuf();
  ParsedConfig c;
  try {
    c = parse_config(text.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string(), e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(c.source_file);
  resolve(c.boundary_file);
  return c;
}

}  // namespace htopo
