#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "eegoc/error.hpp"
#include "eegoc/mesh_io.hpp"

namespace eegoc {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Symmetric sparse matrix. Both triangles are stored in `full` so products
/// need no special handling; `upper_triplets()` gives the canonical row <= col
/// listing in deterministic (row, col) order.
struct SparseSymMatrix {
  SpMat full;

  SparseSymMatrix() = default;
  /// Averages m with its transpose, so the stored matrix is symmetric to the
  /// bit even when the two triangles were summed in different orders.
  explicit SparseSymMatrix(const SpMat& m) {
    const SpMat t = m.transpose();
    full = 0.5 * (m + t);
    full.makeCompressed();
  }

  static SparseSymMatrix from_triplets(Index n, const std::vector<Triplet>& t) {
    SpMat m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return SparseSymMatrix(std::move(m));
  }

  [[nodiscard]] Index dim() const { return static_cast<Index>(full.rows()); }

  [[nodiscard]] std::vector<Triplet> upper_triplets() const {
    std::vector<Triplet> out;
    for (int c = 0; c < full.outerSize(); ++c)
      for (SpMat::InnerIterator it(full, c); it; ++it)
        if (it.row() <= it.col() && it.value() != 0.0) out.emplace_back(it.row(), it.col(), it.value());
    std::sort(out.begin(), out.end(), [](const Triplet& a, const Triplet& b) {
      return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
    });
    return out;
  }

  [[nodiscard]] double quadratic_form(const Vector& x) const { return x.dot(full * x); }

  /// max |a_ij - a_ji| relative to max |a_ij|.
  [[nodiscard]] double asymmetry() const {
    const SpMat t = full.transpose();
    const double scale = std::max(full.coeffs().cwiseAbs().maxCoeff(), 1e-300);
    return SpMat(full - t).coeffs().cwiseAbs().maxCoeff() / scale;
  }
};

/// Rectangular sparse matrix (B, Q).
struct SparseRectMatrix {
  SpMat mat;

  [[nodiscard]] Index rows() const { return static_cast<Index>(mat.rows()); }
  [[nodiscard]] Index cols() const { return static_cast<Index>(mat.cols()); }
};

/// Symmetric coordinate export readable by Matrix Market tools: a banner, a
/// header line `n n nnz`, then 1-based `row col value` for row >= col.
inline void write_coordinate(std::ostream& out, const SparseSymMatrix& a) {
  const auto upper = a.upper_triplets();
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  out << a.dim() << ' ' << a.dim() << ' ' << upper.size() << '\n';
  for (const auto& t : upper)  // transposed into the lower triangle
    out << t.col() + 1 << ' ' << t.row() + 1 << ' ' << format_double(t.value()) << '\n';
}

inline void write_coordinate(const std::string& path, const SparseSymMatrix& a) {
  auto out = detail::open_output(path);
  write_coordinate(out, a);
}

}  // namespace eegoc
