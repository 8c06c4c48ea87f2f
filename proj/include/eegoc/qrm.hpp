#pragma once

// Stabilized mixed quasi-reversibility baseline. Given the scalp trace g_D,
// find u (= g_D on the scalp) and lambda (= 0 on the cortex) with
//
//   eps (grad u, grad v) + (sigma grad lambda, grad v)        = 0  for v = 0 on the scalp
//   (sigma grad u, grad mu) - delta (grad lambda, grad mu)   = 0  for mu = 0 on the cortex
//
// Both boundary conditions are imposed by eliminating the fixed DOFs.

#include <cmath>
#include <string>
#include <vector>

#include "eegoc/assembly.hpp"
#include "eegoc/error.hpp"
#include "eegoc/mesh.hpp"
#include "eegoc/solver.hpp"
#include "eegoc/sparse.hpp"

namespace eegoc {

struct QRMSystem {
  double epsilon = 0.0;
  double delta = 0.0;
  Index n = 0;
  std::vector<Index> scalp_nodes;   // Dirichlet nodes for u
  std::vector<Index> cortex_nodes;  // Dirichlet nodes for lambda
  std::vector<Index> u_free;        // unknown u DOFs (rows tested with V0)
  std::vector<Index> lambda_free;   // unknown lambda DOFs (rows tested with Q)
  Vector g_full;                    // g_D scattered to all nodes, zero elsewhere
  SparseSymMatrix laplacian;
  SparseSymMatrix stiffness;        // sigma-weighted
  SparseSymMatrix matrix;
  Vector rhs;
};

struct QRMSolution {
  Vector u;       // all N nodes
  Vector lambda;  // all N nodes
};

namespace detail {

inline std::vector<Index> complement(Index n, const std::vector<Index>& sorted_nodes) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(n) - sorted_nodes.size());
  std::size_t k = 0;
  for (Index i = 0; i < n; ++i) {
    if (k < sorted_nodes.size() && sorted_nodes[k] == i) {
      ++k;
      continue;
    }
    out.push_back(i);
  }
  return out;
}

/// Rows `rows`, columns `cols` of a; returned as triplets offset by (r0, c0).
inline void append_block(const SpMat& a, const std::vector<Index>& rows, const std::vector<Index>& cols, double scale,
                         Index r0, Index c0, std::vector<Triplet>& out) {
  std::vector<Index> col_pos(static_cast<std::size_t>(a.cols()), -1);
  std::vector<Index> row_pos(static_cast<std::size_t>(a.rows()), -1);
  for (std::size_t j = 0; j < cols.size(); ++j) col_pos[cols[j]] = static_cast<Index>(j);
  for (std::size_t i = 0; i < rows.size(); ++i) row_pos[rows[i]] = static_cast<Index>(i);
  for (int c = 0; c < a.outerSize(); ++c) {
    if (col_pos[c] < 0) continue;
    for (SpMat::InnerIterator it(a, c); it; ++it)
      if (row_pos[it.row()] >= 0) out.emplace_back(r0 + row_pos[it.row()], c0 + col_pos[c], scale * it.value());
  }
}

inline Vector gather(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

}  // namespace detail

/// g_scalp holds one value per node of tagged_nodes(mesh, Scalp), in that order.
inline QRMSystem build_qrm(const TetMesh& mesh, const ConductivityMap& cond, const Vector& g_scalp, double epsilon,
                           double delta) {
  require(std::isfinite(epsilon) && epsilon > 0.0, ErrorKind::Parameter, "QRM epsilon must be positive");
  require(std::isfinite(delta) && delta > 0.0, ErrorKind::Parameter,
          "QRM delta must be positive (the problem needs stabilization)");
  QRMSystem s;
  s.epsilon = epsilon;
  s.delta = delta;
  s.n = mesh.num_vertices();
  s.scalp_nodes = tagged_nodes(mesh, BoundaryTag::Scalp);
  s.cortex_nodes = tagged_nodes(mesh, BoundaryTag::Cortex);
  require(!s.scalp_nodes.empty(), ErrorKind::EmptyBoundary, "mesh has no scalp faces");
  require(!s.cortex_nodes.empty(), ErrorKind::EmptyBoundary, "mesh has no cortex faces");
  require(g_scalp.size() == static_cast<Eigen::Index>(s.scalp_nodes.size()), ErrorKind::Usage,
          "g_D needs " + std::to_string(s.scalp_nodes.size()) + " scalp values, got " +
              std::to_string(g_scalp.size()));
  require(g_scalp.allFinite(), ErrorKind::Usage, "g_D has missing (non-finite) values");

  s.u_free = detail::complement(s.n, s.scalp_nodes);
  s.lambda_free = detail::complement(s.n, s.cortex_nodes);
  s.g_full = Vector::Zero(s.n);
  for (std::size_t i = 0; i < s.scalp_nodes.size(); ++i) s.g_full[s.scalp_nodes[i]] = g_scalp[static_cast<Eigen::Index>(i)];

  s.laplacian = assemble_laplacian(mesh);
  s.stiffness = assemble_volume_stiffness(mesh, cond);

  const Index nu = static_cast<Index>(s.u_free.size());
  const Index nl = static_cast<Index>(s.lambda_free.size());
  std::vector<Triplet> t;
  detail::append_block(s.laplacian.full, s.u_free, s.u_free, epsilon, 0, 0, t);
  detail::append_block(s.stiffness.full, s.u_free, s.lambda_free, 1.0, 0, nu, t);
  detail::append_block(s.stiffness.full, s.lambda_free, s.u_free, 1.0, nu, 0, t);
  detail::append_block(s.laplacian.full, s.lambda_free, s.lambda_free, -delta, nu, nu, t);
  s.matrix = SparseSymMatrix::from_triplets(nu + nl, t);

  const Vector lap_g = s.laplacian.full * s.g_full;
  const Vector stiff_g = s.stiffness.full * s.g_full;
  s.rhs.resize(nu + nl);
  s.rhs.head(nu) = -epsilon * detail::gather(lap_g, s.u_free);
  s.rhs.tail(nl) = -detail::gather(stiff_g, s.lambda_free);
  return s;
}

inline QRMSolution expand_qrm_solution(const QRMSystem& s, const Vector& x) {
  require(x.size() == s.matrix.dim(), ErrorKind::Dimension, "QRM solution size mismatch");
  QRMSolution sol;
  sol.u = s.g_full;
  sol.lambda = Vector::Zero(s.n);
  const Index nu = static_cast<Index>(s.u_free.size());
  for (std::size_t i = 0; i < s.u_free.size(); ++i) sol.u[s.u_free[i]] = x[static_cast<Eigen::Index>(i)];
  for (std::size_t i = 0; i < s.lambda_free.size(); ++i)
    sol.lambda[s.lambda_free[i]] = x[nu + static_cast<Eigen::Index>(i)];
  return sol;
}

/// Residuals of the two variational equations on the free rows, relative to
/// the size of the summands (|A| |x| row-wise) so that cancellation between
/// the Dirichlet lift and the free part does not inflate them.
inline std::pair<double, double> qrm_residuals(const QRMSystem& s, const QRMSolution& sol) {
  const SpMat lap_abs = s.laplacian.full.cwiseAbs();
  const SpMat stiff_abs = s.stiffness.full.cwiseAbs();
  const Vector u_abs = sol.u.cwiseAbs();
  const Vector l_abs = sol.lambda.cwiseAbs();
  const Vector r1 = s.epsilon * (s.laplacian.full * sol.u) + s.stiffness.full * sol.lambda;
  const Vector m1 = s.epsilon * (lap_abs * u_abs) + stiff_abs * l_abs;
  const Vector r2 = s.stiffness.full * sol.u - s.delta * (s.laplacian.full * sol.lambda);
  const Vector m2 = stiff_abs * u_abs + s.delta * (lap_abs * l_abs);
  auto rel = [](const Vector& r, const Vector& m) {
    const double den = m.norm();
    return den > 0.0 ? r.norm() / den : r.norm();
  };
  return {rel(detail::gather(r1, s.u_free), detail::gather(m1, s.u_free)),
          rel(detail::gather(r2, s.lambda_free), detail::gather(m2, s.lambda_free))};
}

inline std::pair<QRMSolution, SolveReport> solve_qrm(const QRMSystem& s, const SolveOptions& opt) {
  auto res = solve_sparse(s.matrix.full, s.rhs, opt);
  return {expand_qrm_solution(s, res.x), res.report};
}

}  // namespace eegoc
