#pragma once

// P1 finite-element matrices on the head volume and the cortical surface.
// All element integrals are exact for linear shape functions. Element loops
// run in mesh order, so identical input gives bit-identical matrices.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eegoc/error.hpp"
#include "eegoc/mesh.hpp"
#include "eegoc/sparse.hpp"

namespace eegoc {

using Mat4 = Eigen::Matrix4d;
using Mat3 = Eigen::Matrix3d;

/// Gradients of the four barycentric coordinates of a tet (rows) and its
/// unsigned volume.
struct TetGeometry {
  Eigen::Matrix<double, 4, 3> grad;
  double volume;
};

inline TetGeometry tet_geometry(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  Mat3 jac;
  jac.col(0) = p1 - p0;
  jac.col(1) = p2 - p0;
  jac.col(2) = p3 - p0;
  const double det = jac.determinant();
  const Mat3 inv = jac.inverse();
  TetGeometry g;
  g.grad.row(1) = inv.row(0);
  g.grad.row(2) = inv.row(1);
  g.grad.row(3) = inv.row(2);
  g.grad.row(0) = -(inv.row(0) + inv.row(1) + inv.row(2));
  g.volume = std::abs(det) / 6.0;
  return g;
}

inline TetGeometry tet_geometry(const TetMesh& m, Index t) {
  const auto& v = m.tets[static_cast<std::size_t>(t)];
  return tet_geometry(m.vertices[v[0]], m.vertices[v[1]], m.vertices[v[2]], m.vertices[v[3]]);
}

/// sigma * int grad(a_i) . grad(a_j) dV over one tet.
inline Mat4 tet_stiffness(const TetGeometry& g, double sigma) {
  return sigma * g.volume * (g.grad * g.grad.transpose());
}

/// int a_i a_j dV over one tet: V/20 * (1 + delta_ij).
inline Mat4 tet_mass(double volume) {
  return volume / 20.0 * (Mat4::Ones() + Mat4::Identity());
}

/// int grad_B b_i . grad_B b_j dS over one triangle, using the intrinsic
/// gradient in the triangle plane: (e_i . e_j) / (4 area) with e_i the edge
/// opposite vertex i.
inline Mat3 triangle_stiffness(const Vec3& p0, const Vec3& p1, const Vec3& p2) {
  const std::array<Vec3, 3> e = {p2 - p1, p0 - p2, p1 - p0};
  const double area = triangle_area(p0, p1, p2);
  Mat3 k;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k(i, j) = e[i].dot(e[j]) / (4.0 * area);
  return k;
}

/// int b_i b_j dS over one triangle: area/12 * (1 + delta_ij).
inline Mat3 triangle_mass(double area) {
  return area / 12.0 * (Mat3::Ones() + Mat3::Identity());
}

namespace detail {

inline void check_tet(const TetMesh& m, std::size_t t, double vol_tol) {
  const double v = signed_volume(m, m.tets[t]);
  if (!(std::abs(v) > vol_tol))
    fail(ErrorKind::Validation, "cannot assemble degenerate tet " + std::to_string(t));
}

inline void check_triangle(const SurfaceExtraction& s, std::size_t t, double area_tol) {
  const auto& v = s.triangles[t];
  if (!(triangle_area(s.nodes[v[0]], s.nodes[v[1]], s.nodes[v[2]]) > area_tol))
    fail(ErrorKind::Validation, "cannot assemble zero-area triangle " + std::to_string(t));
}

inline double area_tolerance(const SurfaceExtraction& s) {
  const double b = bounding_box_size(s.nodes);
  return 1e-14 * b * b;
}

}  // namespace detail

/// Volume stiffness with a per-tet coefficient.
inline SparseSymMatrix assemble_volume_stiffness(const TetMesh& m, std::span<const double> coeff) {
  require(coeff.size() == m.tets.size(), ErrorKind::Dimension, "one coefficient per tet required");
  const double vol_tol = degenerate_volume_threshold(m);
  std::vector<Triplet> trip;
  trip.reserve(16 * m.tets.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    detail::check_tet(m, t, vol_tol);
    const Mat4 k = tet_stiffness(tet_geometry(m, static_cast<Index>(t)), coeff[t]);
    const auto& v = m.tets[t];
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) trip.emplace_back(v[i], v[j], k(i, j));
  }
  return SparseSymMatrix::from_triplets(m.num_vertices(), trip);
}

/// E_ij = int sigma grad(a_i) . grad(a_j) dV  (N x N).
inline SparseSymMatrix assemble_volume_stiffness(const TetMesh& m, const ConductivityMap& cond) {
  cond.check(m);
  std::vector<double> sigma(m.tets.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t) sigma[t] = cond.at(m.regions[t]);
  return assemble_volume_stiffness(m, sigma);
}

/// Unit-coefficient Laplacian stiffness (used by the quasi-reversibility baseline).
inline SparseSymMatrix assemble_laplacian(const TetMesh& m) {
  std::vector<double> ones(m.tets.size(), 1.0);
  return assemble_volume_stiffness(m, ones);
}

/// Consistent volume mass (N x N).
inline SparseSymMatrix assemble_volume_mass(const TetMesh& m) {
  const double vol_tol = degenerate_volume_threshold(m);
  std::vector<Triplet> trip;
  trip.reserve(16 * m.tets.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    detail::check_tet(m, t, vol_tol);
    const Mat4 k = tet_mass(std::abs(signed_volume(m, m.tets[t])));
    const auto& v = m.tets[t];
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) trip.emplace_back(v[i], v[j], k(i, j));
  }
  return SparseSymMatrix::from_triplets(m.num_vertices(), trip);
}

/// Lumped (row-sum) volume mass: vol/4 per incident tet.
inline Vector lumped_volume_mass(const TetMesh& m) {
  Vector w = Vector::Zero(m.num_vertices());
  for (const auto& t : m.tets) {
    const double v = std::abs(signed_volume(m, t)) / 4.0;
    for (Index i : t) w[i] += v;
  }
  return w;
}

/// Surface stiffness without the epsilon factor (M x M).
inline SparseSymMatrix assemble_surface_stiffness(const SurfaceExtraction& s) {
  const double tol = detail::area_tolerance(s);
  std::vector<Triplet> trip;
  trip.reserve(9 * s.triangles.size());
  for (std::size_t t = 0; t < s.triangles.size(); ++t) {
    detail::check_triangle(s, t, tol);
    const auto& v = s.triangles[t];
    const Mat3 k = triangle_stiffness(s.nodes[v[0]], s.nodes[v[1]], s.nodes[v[2]]);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(v[i], v[j], k(i, j));
  }
  return SparseSymMatrix::from_triplets(s.num_nodes(), trip);
}

/// Consistent surface mass M_f (M x M).
inline SparseSymMatrix assemble_surface_mass(const SurfaceExtraction& s) {
  const double tol = detail::area_tolerance(s);
  std::vector<Triplet> trip;
  trip.reserve(9 * s.triangles.size());
  for (std::size_t t = 0; t < s.triangles.size(); ++t) {
    detail::check_triangle(s, t, tol);
    const auto& v = s.triangles[t];
    const Mat3 k = triangle_mass(triangle_area(s.nodes[v[0]], s.nodes[v[1]], s.nodes[v[2]]));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(v[i], v[j], k(i, j));
  }
  return SparseSymMatrix::from_triplets(s.num_nodes(), trip);
}

/// B_ij = int_{Gamma_B} b_i a_j dS, M x N: row i tests the surface basis
/// function b_i against the trace of the volume basis function a_j.
inline SparseRectMatrix assemble_surface_mass_coupling(const SurfaceExtraction& s, const TetMesh& m) {
  const Index n = m.num_vertices();
  for (Index v : s.surf_to_vol)
    require(v >= 0 && v < n, ErrorKind::Dimension, "surface node maps outside the mesh");
  for (Index i = 0; i < s.num_nodes(); ++i)
    require((m.vertices[s.surf_to_vol[i]] - s.nodes[i]).norm() <= 1e-12 * (1.0 + s.nodes[i].norm()),
            ErrorKind::Dimension, "surface does not belong to this mesh");
  const double tol = detail::area_tolerance(s);
  std::vector<Triplet> trip;
  trip.reserve(9 * s.triangles.size());
  for (std::size_t t = 0; t < s.triangles.size(); ++t) {
    detail::check_triangle(s, t, tol);
    const auto& v = s.triangles[t];
    const Mat3 k = triangle_mass(triangle_area(s.nodes[v[0]], s.nodes[v[1]], s.nodes[v[2]]));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(v[i], s.surf_to_vol[v[j]], k(i, j));
  }
  SparseRectMatrix b;
  b.mat.resize(s.num_nodes(), n);
  b.mat.setFromTriplets(trip.begin(), trip.end());
  b.mat.makeCompressed();
  return b;
}

/// Per-surface-node lumped areas, B * 1_N.
inline Vector lumped_surface_mass(const SurfaceExtraction& s) {
  Vector a = Vector::Zero(s.num_nodes());
  for (const auto& t : s.triangles) {
    const double w = triangle_area(s.nodes[t[0]], s.nodes[t[1]], s.nodes[t[2]]) / 3.0;
    for (Index i : t) a[i] += w;
  }
  return a;
}

}  // namespace eegoc
