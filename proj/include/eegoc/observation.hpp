#pragma once

// Electrodes, the pointwise observation operator Q and the data blocks
// G = Q^T W^T W Q, r = Q^T W^T W d.
//
// Electrode file: one electrode per line, `x y z w`; lines starting with '#'
// are comments.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eegoc/assembly.hpp"
#include "eegoc/error.hpp"
#include "eegoc/mesh.hpp"
#include "eegoc/mesh_io.hpp"
#include "eegoc/sparse.hpp"

namespace eegoc {

/// Electrode positions with weights w_i > 0 (inverse noise standard deviation).
struct ElectrodeSet {
  std::vector<Vec3> positions;
  std::vector<double> weights;
  std::vector<Index> host_hints;  // optional, -1 when unknown

  [[nodiscard]] Index size() const { return static_cast<Index>(positions.size()); }

  static ElectrodeSet unit_weights(std::vector<Vec3> pos) {
    ElectrodeSet e;
    e.weights.assign(pos.size(), 1.0);
    e.positions = std::move(pos);
    return e;
  }

  [[nodiscard]] Vector weight_vector() const {
    return Eigen::Map<const Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  }
};

/// Measured potentials, one per electrode (Volts).
using DataVector = Vector;

/// 1e-8 of the domain diameter.
inline double snap_tolerance(const TetMesh& m) { return 1e-8 * bounding_box_diagonal(m.vertices); }

inline void check_electrodes(const ElectrodeSet& e, double snap_tol) {
  require(e.weights.size() == e.positions.size(), ErrorKind::Dimension,
          "electrode weights and positions differ in length");
  require(!e.positions.empty(), ErrorKind::Usage, "no electrodes");
  for (std::size_t i = 0; i < e.weights.size(); ++i) {
    require(std::isfinite(e.weights[i]) && e.weights[i] > 0.0, ErrorKind::Parameter,
            "electrode " + std::to_string(i) + " has non-positive weight");
    require(e.positions[i].allFinite(), ErrorKind::Parameter,
            "electrode " + std::to_string(i) + " has non-finite position");
  }
  std::vector<std::size_t> order(e.positions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return e.positions[a].x() < e.positions[b].x(); });
  for (std::size_t a = 0; a < order.size(); ++a)
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const Vec3& pa = e.positions[order[a]];
      const Vec3& pb = e.positions[order[b]];
      if (pb.x() - pa.x() > snap_tol) break;
      if ((pa - pb).norm() <= snap_tol)
        fail(ErrorKind::Validation, "electrodes " + std::to_string(std::min(order[a], order[b])) + " and " +
                                        std::to_string(std::max(order[a], order[b])) + " coincide");
    }
}

// ---------------------------------------------------------------------------
// Point location
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::Vector4d barycentric(const TetMesh& m, const Tet& t, const Vec3& p) {
  const Vec3& p0 = m.vertices[t[0]];
  Mat3 jac;
  jac.col(0) = m.vertices[t[1]] - p0;
  jac.col(1) = m.vertices[t[2]] - p0;
  jac.col(2) = m.vertices[t[3]] - p0;
  const Vec3 l = jac.partialPivLu().solve(p - p0);
  return {1.0 - l.sum(), l[0], l[1], l[2]};
}

/// Distance from p to triangle abc (Ericson, Real-Time Collision Detection 5.1.5).
inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return ap.norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return bp.norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return cp.norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

}  // namespace detail

struct PointLocation {
  Index tet = -1;
  Eigen::Vector4d weights = Eigen::Vector4d::Zero();  // barycentric, >= 0, sum 1
  Index node = -1;                                    // set when the point sits on a vertex
};

/// Locates points in a mesh by barycentric search with bounding-box culling.
class PointLocator {
 public:
  explicit PointLocator(const TetMesh& m) : mesh_(m), snap_tol_(snap_tolerance(m)) {
    boxes_.reserve(m.tets.size());
    for (const auto& t : m.tets) {
      Box b{m.vertices[t[0]], m.vertices[t[0]]};
      for (int i = 1; i < 4; ++i) {
        b.lo = b.lo.cwiseMin(m.vertices[t[i]]);
        b.hi = b.hi.cwiseMax(m.vertices[t[i]]);
      }
      boxes_.push_back(b);
    }
  }

  [[nodiscard]] double snap_tol() const { return snap_tol_; }

  /// Throws ErrorKind::Location when p is outside the closed domain by more
  /// than the snap tolerance. `label` names the point in the message.
  [[nodiscard]] PointLocation locate(const Vec3& p, const std::string& label, Index hint = -1) const {
    const Vec3 pad = Vec3::Constant(snap_tol_);
    Index best = -1;
    double best_min = -std::numeric_limits<double>::infinity();
    Eigen::Vector4d best_w;
    auto consider = [&](Index t) {
      const Box& b = boxes_[static_cast<std::size_t>(t)];
      if ((p.array() < (b.lo - pad).array()).any() || (p.array() > (b.hi + pad).array()).any()) return;
      const Eigen::Vector4d w = detail::barycentric(mesh_, mesh_.tets[static_cast<std::size_t>(t)], p);
      if (w.minCoeff() > best_min) {
        best_min = w.minCoeff();
        best = t;
        best_w = w;
      }
    };
    if (hint >= 0 && hint < mesh_.num_tets()) consider(hint);
    if (best_min < -1e-12)
      for (Index t = 0; t < mesh_.num_tets(); ++t) consider(t);
    if (best < 0) fail(ErrorKind::Location, label + " lies outside the mesh");

    if (best_min < -1e-12) {
      // Outside every tet: accept only if within snap tolerance of the boundary.
      double dist = std::numeric_limits<double>::infinity();
      for (const auto& f : mesh_.faces)
        dist = std::min(dist, detail::point_triangle_distance(p, mesh_.vertices[f.v[0]], mesh_.vertices[f.v[1]],
                                                              mesh_.vertices[f.v[2]]));
      if (dist > snap_tol_)
        fail(ErrorKind::Location, label + " lies outside the mesh (distance " + format_double(dist) + ")");
    }

    PointLocation loc;
    loc.tet = best;
    const Tet& t = mesh_.tets[static_cast<std::size_t>(best)];
    for (int i = 0; i < 4; ++i)
      if ((mesh_.vertices[t[i]] - p).norm() <= snap_tol_) {
        loc.node = t[i];
        loc.weights = Eigen::Vector4d::Unit(i);
        return loc;
      }
    loc.weights = best_w.cwiseMax(0.0);
    loc.weights /= loc.weights.sum();
    return loc;
  }

 private:
  struct Box {
    Vec3 lo, hi;
  };
  const TetMesh& mesh_;
  double snap_tol_;
  std::vector<Box> boxes_;
};

/// Q (K x N): row i holds the P1 barycentric weights of electrode i in its
/// host tet, or a unit vector when the electrode sits on a node.
inline SparseRectMatrix assemble_observation(const TetMesh& m, const ElectrodeSet& e) {
  PointLocator loc(m);
  check_electrodes(e, loc.snap_tol());
  std::vector<Triplet> trip;
  trip.reserve(4 * e.positions.size());
  for (Index i = 0; i < e.size(); ++i) {
    const Index hint = static_cast<std::size_t>(i) < e.host_hints.size() ? e.host_hints[i] : -1;
    const PointLocation l = loc.locate(e.positions[i], "electrode " + std::to_string(i), hint);
    if (l.node >= 0) {
      trip.emplace_back(i, l.node, 1.0);
      continue;
    }
    const Tet& t = m.tets[static_cast<std::size_t>(l.tet)];
    for (int k = 0; k < 4; ++k)
      if (l.weights[k] != 0.0) trip.emplace_back(i, t[k], l.weights[k]);
  }
  SparseRectMatrix q;
  q.mat.resize(e.size(), m.num_vertices());
  q.mat.setFromTriplets(trip.begin(), trip.end());
  q.mat.makeCompressed();
  return q;
}

struct DataBlocks {
  SparseSymMatrix G;  // Q^T W^T W Q
  Vector r;           // Q^T W^T W d
};

/// Diagonal weighting W = diag(w). A dense noise covariance can be passed in
/// place of W^T W; that path is declared but not implemented.
inline DataBlocks assemble_data_blocks(const SparseRectMatrix& q, const ElectrodeSet& e, const DataVector& d,
                                       const std::optional<DenseMatrix>& dense_weighting = std::nullopt) {
  if (dense_weighting) fail(ErrorKind::Unsupported, "dense noise covariance weighting is not implemented");
  require(q.rows() == e.size() && d.size() == q.rows(), ErrorKind::Dimension,
          "Q rows, electrode count and data length must agree");
  require(d.allFinite(), ErrorKind::Parameter, "data vector has non-finite entries");
  const Vector w2 = e.weight_vector().array().square();
  const SpMat wq = w2.asDiagonal() * q.mat;
  DataBlocks out;
  out.G = SparseSymMatrix(SpMat(q.mat.transpose() * wq));
  out.r = q.mat.transpose() * (w2.array() * d.array()).matrix();
  return out;
}

// ---------------------------------------------------------------------------
// Placement and files
// ---------------------------------------------------------------------------

/// Moves each point along the ray from the origin onto the faceted boundary
/// surface with the given tag (outermost hit). Used to put electrodes that
/// were laid out on an exact sphere onto the polyhedral scalp.
inline std::vector<Vec3> place_on_boundary(const TetMesh& m, BoundaryTag tag, const std::vector<Vec3>& pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3 dir = pts[i].normalized();
    double best = -1.0;
    for (const auto& f : m.faces) {
      if (f.tag != tag) continue;
      const Vec3& a = m.vertices[f.v[0]];
      const Vec3 e1 = m.vertices[f.v[1]] - a, e2 = m.vertices[f.v[2]] - a;
      const Vec3 h = dir.cross(e2);
      const double det = e1.dot(h);
      if (std::abs(det) < 1e-300) continue;
      const Vec3 s = -a;
      const double u = s.dot(h) / det;
      if (u < -1e-12 || u > 1 + 1e-12) continue;
      const Vec3 q = s.cross(e1);
      const double v = dir.dot(q) / det;
      if (v < -1e-12 || u + v > 1 + 1e-12) continue;
      const double t = e2.dot(q) / det;
      if (t > best) best = t;
    }
    if (best <= 0.0) fail(ErrorKind::Location, "point " + std::to_string(i) + " has no radial projection onto the boundary");
    out.push_back(best * dir);
  }
  return out;
}

inline ElectrodeSet read_electrodes(std::istream& in) {
  ElectrodeSet e;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (line.back() == '\r') line.pop_back();
    Vec3 p;
    double w = 0.0;
    detail::parse_fields(line, line_no, "electrode", p.x(), p.y(), p.z(), w);
    if (!(w > 0.0)) throw ParseError(line_no, "electrode weight must be positive");
    e.positions.push_back(p);
    e.weights.push_back(w);
  }
  if (e.positions.empty()) throw ParseError(line_no, "electrode file has no entries");
  return e;
}

inline ElectrodeSet read_electrodes(const std::string& path) {
  auto in = detail::open_input(path);
  return read_electrodes(in);
}

inline void write_electrodes(std::ostream& out, const ElectrodeSet& e) {
  out << "# x y z w\n";
  for (std::size_t i = 0; i < e.positions.size(); ++i) {
    const auto& p = e.positions[i];
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << ' '
        << format_double(e.weights[i]) << '\n';
  }
}

inline void write_electrodes(const std::string& path, const ElectrodeSet& e) {
  auto out = detail::open_output(path);
  write_electrodes(out, e);
}

}  // namespace eegoc
