#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "htopo/errors.hpp"
#include "htopo/grid.hpp"
#include "htopo/model.hpp"

namespace htopo {

template <int Dim>
using ElementMatrix = Eigen::Matrix<double, (1 << Dim), (1 << Dim)>;

/// Unit-conductivity conduction matrix of the unit square/cube with
/// multilinear shape functions, in corner_offsets<Dim>() node order.
///
/// Built from the 1D factors: stiffness (+1 same node, -1 other) along the
/// differentiated axis times the 1D mass (1/3 same, 1/6 other) along the rest.
template <int Dim>
ElementMatrix<Dim> reference_element() {
  constexpr auto offsets = corner_offsets<Dim>();
  constexpr int n = 1 << Dim;
  ElementMatrix<Dim> k;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      double sum = 0.0;
      for (int d = 0; d < Dim; ++d) {
        double term = offsets[a][d] == offsets[b][d] ? 1.0 : -1.0;
        for (int o = 0; o < Dim; ++o)
          if (o != d) term *= offsets[a][o] == offsets[b][o] ? 1.0 / 3.0 : 1.0 / 6.0;
        sum += term;
      }
      k(a, b) = sum;
    }
  }
  return k;
}

inline constexpr double density_slack = 1e-12;

/// Modified SIMP interpolation k = kmin + (k0 - kmin) * rho^p.
inline double simp_conductivity(double rho, const MaterialConstants& mat) {
  if (!(rho >= -density_slack && rho <= 1.0 + density_slack))
    throw ValidationError("density", "physical density " + std::to_string(rho) + " outside [0, 1]");
  rho = std::clamp(rho, 0.0, 1.0);
  return mat.kmin + (mat.k0 - mat.kmin) * std::pow(rho, mat.penal);
}

/// Per-element conductivities for a physical density field.
template <int Dim>
Vector conductivities(const ThermalModel<Dim>& m, const Vector& rho_phys) {
  if (rho_phys.size() != m.num_elements()) throw ValidationError("density", "one value per element expected");
  Vector k(rho_phys.size());
  for (Index e = 0; e < k.size(); ++e) k[e] = simp_conductivity(rho_phys[e], m.material);
  return k;
}

namespace fem_detail {

template <int Dim>
const ElementMatrix<Dim>& cached_reference() {
  static const ElementMatrix<Dim> k = reference_element<Dim>();
  return k;
}

/// out += sum_e scale_e * K0 * v restricted to free rows and columns.
template <int Dim>
void accumulate_free(const ThermalModel<Dim>& m, const Vector& scale, const Vector& v, Vector& out) {
  constexpr int npe = 1 << Dim;
  const auto& k0 = cached_reference<Dim>();
  const auto* fixed = m.is_fixed.data();
  for_each_element(m.grid, [&](Index e, const auto& nodes) {
    const double s = scale[e];
    if (s == 0.0) return;
    Eigen::Matrix<double, npe, 1> ve;
    for (int a = 0; a < npe; ++a) ve[a] = fixed[nodes[a]] ? 0.0 : v[nodes[a]];
    const Eigen::Matrix<double, npe, 1> fe = s * (k0 * ve);
    for (int a = 0; a < npe; ++a)
      if (!fixed[nodes[a]]) out[nodes[a]] += fe[a];
  });
}

template <int Dim>
void check_nodal(const ThermalModel<Dim>& m, const Vector& v) {
  if (v.size() != m.num_nodes())
    throw ValidationError("nodal vector", "expected " + std::to_string(m.num_nodes()) + " entries, got " +
                                              std::to_string(v.size()));
}

}  // namespace fem_detail

/// out = K v computed element by element. Dirichlet rows act as identity and
/// Dirichlet columns are ignored.
template <int Dim>
void apply_K(const ThermalModel<Dim>& m, const Vector& k_elem, const Vector& v, Vector& out) {
  fem_detail::check_nodal(m, v);
  out.setZero(v.size());
  fem_detail::accumulate_free(m, k_elem, v, out);
  for (Index n : m.dirichlet) out[n] = v[n];
}

template <int Dim>
Vector apply_K(const ThermalModel<Dim>& m, const Vector& k_elem, const Vector& v) {
  Vector out;
  apply_K(m, k_elem, v, out);
  return out;
}

/// out = (K(k_cur) - K(k_ref)) v in one pass; zero on Dirichlet rows.
template <int Dim>
void apply_deltaK(const ThermalModel<Dim>& m, const Vector& k_cur, const Vector& k_ref, const Vector& v,
                  Vector& out) {
  fem_detail::check_nodal(m, v);
  if (k_cur.size() != k_ref.size() || k_cur.size() != m.num_elements())
    throw ValidationError("conductivity", "field size mismatch");
  out.setZero(v.size());
  const Vector dk = k_cur - k_ref;
  fem_detail::accumulate_free(m, dk, v, out);
}

template <int Dim>
Vector apply_deltaK(const ThermalModel<Dim>& m, const Vector& k_cur, const Vector& k_ref, const Vector& v) {
  Vector out;
  apply_deltaK(m, k_cur, k_ref, v, out);
  return out;
}

/// Diagonal of the masked global matrix; 1 at Dirichlet nodes.
template <int Dim>
Vector diagonal_of_K(const ThermalModel<Dim>& m, const Vector& k_elem) {
  constexpr int npe = 1 << Dim;
  const auto& k0 = fem_detail::cached_reference<Dim>();
  Vector d = Vector::Zero(m.num_nodes());
  for_each_element(m.grid, [&](Index e, const auto& nodes) {
    for (int a = 0; a < npe; ++a) d[nodes[a]] += k_elem[e] * k0(a, a);
  });
  for (Index n : m.dirichlet) d[n] = 1.0;
  return d;
}

/// Thermal compliance surrogate q . t (equals t^T K t when K t = q).
inline double objective(const Vector& t, const Vector& q) { return q.dot(t); }

/// d f / d rho_phys_e = -p (k0 - kmin) rho_e^(p-1) t_e^T K0 t_e, with the
/// gathered Dirichlet temperatures taken as zero.
template <int Dim>
Vector element_sensitivities(const ThermalModel<Dim>& m, const Vector& t, const Vector& rho_phys) {
  constexpr int npe = 1 << Dim;
  fem_detail::check_nodal(m, t);
  const auto& k0 = fem_detail::cached_reference<Dim>();
  const auto& mat = m.material;
  Vector s(m.num_elements());
  for_each_element(m.grid, [&](Index e, const auto& nodes) {
    Eigen::Matrix<double, npe, 1> te;
    for (int a = 0; a < npe; ++a) te[a] = m.is_fixed[nodes[a]] ? 0.0 : t[nodes[a]];
    const double rho = std::clamp(rho_phys[e], 0.0, 1.0);
    s[e] = -mat.penal * (mat.k0 - mat.kmin) * std::pow(rho, mat.penal - 1.0) * te.dot(k0 * te);
  });
  return s;
}

}  // namespace htopo
