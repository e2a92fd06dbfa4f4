#pragma once

// File output for density fields plus the small text readers the model
// builder and the `postprocess` subcommand need.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "htopo/errors.hpp"
#include "htopo/grid.hpp"

namespace htopo {

enum class FieldFormat { graymap, csv, vtk_legacy };

namespace io_detail {

inline std::string real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::ofstream open_for_write(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw ValidationError(path.string(), "cannot open for writing");
  return out;
}

}  // namespace io_detail

/// Reads every number in a text file; commas, whitespace and newlines all
/// separate values. Lines starting with '#' are skipped.
inline std::vector<double> read_numbers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open for reading");
  std::vector<double> values;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line[0] == '#') continue;
    for (char& ch : line)
      if (ch == ',' || ch == '\t' || ch == '\r') ch = ' ';
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ValidationError(path.string() + ":" + std::to_string(lineno), "not a number: '" + tok + "'");
      values.push_back(v);
    }
  }
  return values;
}

/// Element field as CSV: one line per row of elements (x varies along a line),
/// rows ordered by increasing y, then by increasing z in 3D.
template <int Dim>
void write_field_csv(const Vector& field, const StructuredGrid<Dim>& grid, std::ostream& out) {
  const int nx = grid.nel[0];
  for (Index e = 0; e < grid.num_elements(); ++e) {
    out << io_detail::real(field[e]);
    out << ((e + 1) % nx == 0 ? '\n' : ',');
  }
}

template <int Dim>
Vector read_field_csv(const std::filesystem::path& path, const StructuredGrid<Dim>& grid) {
  const auto values = read_numbers(path);
  if (static_cast<Index>(values.size()) != grid.num_elements())
    throw ValidationError(path.string(), "expected " + std::to_string(grid.num_elements()) + " values, found " +
                                             std::to_string(values.size()));
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

/// Binary 8-bit portable graymap (P5) of a 2D field; solid (1) is black.
/// The first image row is the top of the domain (largest y).
inline void write_graymap(const Vector& field, const StructuredGrid<2>& grid, std::ostream& out) {
  const int nx = grid.nel[0], ny = grid.nel[1];
  out << "P5\n" << nx << ' ' << ny << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(nx));
  for (int j = ny - 1; j >= 0; --j) {
    for (int i = 0; i < nx; ++i) {
      const double rho = field[grid.element_id({i, j})];
      row[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(255.0 * (1.0 - rho)));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

/// ASCII legacy VTK structured-points dataset with one CELL_DATA scalar.
template <int Dim>
void write_vtk_legacy(const Vector& field, const StructuredGrid<Dim>& grid, std::ostream& out,
                      const std::string& name = "density") {
  out << "# vtk DataFile Version 3.0\n" << name << " field\nASCII\nDATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << grid.nel[0] + 1 << ' ' << grid.nel[1] + 1 << ' ' << (Dim == 3 ? grid.nel[Dim - 1] + 1 : 1)
      << '\n';
  out << "ORIGIN 0 0 0\nSPACING 1 1 1\n";
  out << "CELL_DATA " << grid.num_elements() << '\n';
  out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
  for (Index e = 0; e < grid.num_elements(); ++e) out << io_detail::real(field[e]) << '\n';
}

/// Writes an element field in the requested format. Graymap is 2D only and
/// requires values in [0, 1]; every format rejects NaN.
template <int Dim>
void export_field(const Vector& field, const StructuredGrid<Dim>& grid, const std::filesystem::path& path,
                  FieldFormat format) {
  if (field.size() != grid.num_elements())
    throw ValidationError(path.string(), "field size does not match the mesh");
  for (Index e = 0; e < field.size(); ++e)
    if (std::isnan(field[e])) throw NumericalError("NaN in field written to " + path.string());

  switch (format) {
    case FieldFormat::csv: {
      auto out = io_detail::open_for_write(path);
      write_field_csv(field, grid, out);
      break;
    }
    case FieldFormat::graymap: {
      if constexpr (Dim != 2) {
        throw ValidationError(path.string(), "graymap export is only defined for 2D fields");
      } else {
        if (field.minCoeff() < 0.0 || field.maxCoeff() > 1.0)
          throw ValidationError(path.string(), "graymap values must lie in [0, 1]");
        auto out = io_detail::open_for_write(path, true);
        write_graymap(field, grid, out);
      }
      break;
    }
    case FieldFormat::vtk_legacy: {
      auto out = io_detail::open_for_write(path);
      write_vtk_legacy(field, grid, out);
      break;
    }
  }
}

}  // namespace htopo
