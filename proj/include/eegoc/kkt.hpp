#pragma once

// The optimality system of the pointwise-data optimal-control formulation:
//
//   [  A   -B    0 ] [f]   [0]
//   [ -B^T  0    E ] [l] = [0]
//   [  0    E    G ] [u]   [r]
//
// with A = eps*A_core + gamma*M_f (M x M), B the M x N surface/volume mass
// coupling, E the volume stiffness and G, r the data blocks. Unknowns are
// ordered f first, then the multiplier, then the state.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "eegoc/error.hpp"
#include "eegoc/solver.hpp"
#include "eegoc/sparse.hpp"

namespace eegoc {

/// Default f-mass shift: 1e-12 * trace(A_core) / M.
inline double default_gamma(const SparseSymMatrix& a_core) {
  return 1e-12 * a_core.full.diagonal().sum() / static_cast<double>(a_core.dim());
}

struct KKTSystem {
  double epsilon = 0.0;
  double gamma = 0.0;
  Index m = 0;  // control DOFs
  Index n = 0;  // volume DOFs
  SparseSymMatrix A;
  SparseRectMatrix B;
  SparseSymMatrix E;
  SparseSymMatrix G;
  SparseSymMatrix M_f;
  Vector r;
  SparseSymMatrix matrix;  // (M + 2N) square
  Vector rhs;              // (0, 0, r)

  [[nodiscard]] Index dim() const { return m + 2 * n; }
  [[nodiscard]] Index lambda_offset() const { return m; }
  [[nodiscard]] Index u_offset() const { return m + n; }
};

inline KKTSystem build_kkt(const SparseSymMatrix& a_core, const SparseSymMatrix& m_f, const SparseRectMatrix& b,
                           const SparseSymMatrix& e, const SparseSymMatrix& g, const Vector& r, double epsilon,
                           double gamma) {
  require(std::isfinite(epsilon) && epsilon > 0.0, ErrorKind::Parameter, "epsilon must be positive");
  require(std::isfinite(gamma) && gamma >= 0.0, ErrorKind::Parameter, "gamma must be non-negative");
  const Index m = a_core.dim();
  const Index n = e.dim();
  require(m > 0, ErrorKind::Dimension, "empty control space");
  require(m_f.dim() == m && b.rows() == m && b.cols() == n && g.dim() == n && r.size() == n, ErrorKind::Dimension,
          "KKT block dimensions disagree");

  KKTSystem s;
  s.epsilon = epsilon;
  s.gamma = gamma;
  s.m = m;
  s.n = n;
  s.A = SparseSymMatrix(SpMat(epsilon * a_core.full + gamma * m_f.full));
  s.B = b;
  s.E = e;
  s.G = g;
  s.M_f = m_f;
  s.r = r;

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(s.A.full.nonZeros() + 2 * b.mat.nonZeros() + 2 * e.full.nonZeros() +
                                     g.full.nonZeros()));
  const Index lo = s.lambda_offset(), uo = s.u_offset();
  for (int c = 0; c < s.A.full.outerSize(); ++c)
    for (SpMat::InnerIterator it(s.A.full, c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int c = 0; c < b.mat.outerSize(); ++c)
    for (SpMat::InnerIterator it(b.mat, c); it; ++it) {
      t.emplace_back(it.row(), lo + it.col(), -it.value());
      t.emplace_back(lo + it.col(), it.row(), -it.value());
    }
  for (int c = 0; c < e.full.outerSize(); ++c)
    for (SpMat::InnerIterator it(e.full, c); it; ++it) {
      t.emplace_back(lo + it.row(), uo + it.col(), it.value());
      t.emplace_back(uo + it.row(), lo + it.col(), it.value());
    }
  for (int c = 0; c < g.full.outerSize(); ++c)
    for (SpMat::InnerIterator it(g.full, c); it; ++it) t.emplace_back(uo + it.row(), uo + it.col(), it.value());
  s.matrix = SparseSymMatrix::from_triplets(s.dim(), t);
  s.rhs = Vector::Zero(s.dim());
  s.rhs.tail(n) = r;
  return s;
}

struct KKTSolution {
  Vector f;
  Vector lambda;
  Vector u;
};

inline KKTSolution split_solution(const KKTSystem& s, const Vector& xi) {
  require(s.m > 0, ErrorKind::Dimension, "empty control space");
  require(xi.size() == s.dim(), ErrorKind::Dimension,
          "solution has " + std::to_string(xi.size()) + " entries, system has " + std::to_string(s.dim()));
  return {xi.head(s.m), xi.segment(s.lambda_offset(), s.n), xi.tail(s.n)};
}

inline Vector join_solution(const KKTSolution& sol) {
  Vector xi(sol.f.size() + sol.lambda.size() + sol.u.size());
  xi << sol.f, sol.lambda, sol.u;
  return xi;
}

/// Residuals of the three discrete variational equations, each relative to
/// the magnitude of the terms it balances.
struct StationarityResiduals {
  double control = 0.0;     // A f - B lambda
  double constraint = 0.0;  // -B^T f + E u
  double adjoint = 0.0;     // E lambda + G u - r

  [[nodiscard]] double max() const { return std::max({control, constraint, adjoint}); }
};

inline StationarityResiduals stationarity_residuals(const KKTSystem& s, const KKTSolution& x) {
  auto rel = [](double num, double den) { return den > 0.0 ? num / den : num; };
  const Vector af = s.A.full * x.f;
  const Vector bl = s.B.mat * x.lambda;
  const Vector btf = s.B.mat.transpose() * x.f;
  const Vector eu = s.E.full * x.u;
  const Vector el = s.E.full * x.lambda;
  const Vector gu = s.G.full * x.u;
  StationarityResiduals r;
  r.control = rel((af - bl).norm(), af.norm() + bl.norm());
  r.constraint = rel((eu - btf).norm(), eu.norm() + btf.norm());
  r.adjoint = rel((el + gu - s.r).norm(), el.norm() + gu.norm() + s.r.norm());
  return r;
}

/// Block-diagonal SPD preconditioner for MINRES:
///   f:      A + B D^-1 B^T,  D = diag(E + G)
///   lambda: E + G
///   u:      E + G
class KKTBlockPreconditioner {
 public:
  explicit KKTBlockPreconditioner(const KKTSystem& s) : m_(s.m), n_(s.n) {
    const SpMat eg = s.E.full + s.G.full;
    const Vector dinv = eg.diagonal().cwiseInverse();
    const SpMat af = s.A.full + SpMat(s.B.mat * dinv.asDiagonal() * s.B.mat.transpose());
    f_.compute(af);
    eg_.compute(eg);
    if (f_.info() != Eigen::Success || eg_.info() != Eigen::Success)
      fail(ErrorKind::Singular, "block preconditioner is not positive definite (no electrodes?)");
  }

  [[nodiscard]] Vector solve(const Vector& v) const {
    Vector out(v.size());
    out.head(m_) = f_.solve(v.head(m_));
    out.segment(m_, n_) = eg_.solve(v.segment(m_, n_));
    out.tail(n_) = eg_.solve(v.tail(n_));
    return out;
  }

 private:
  Index m_, n_;
  Eigen::SimplicialLDLT<SpMat> f_;
  Eigen::SimplicialLDLT<SpMat> eg_;
};

/// Solves the KKT system with the requested method.
inline SolveResult solve_kkt(const KKTSystem& s, const SolveOptions& opt) {
  if (opt.method == SolverMethod::Iterative) {
    auto pc = std::make_shared<KKTBlockPreconditioner>(s);
    return solve_sparse(s.matrix.full, s.rhs, opt, Preconditioner{[pc](const Vector& v) { return pc->solve(v); }});
  }
  return solve_sparse(s.matrix.full, s.rhs, opt);
}

}  // namespace eegoc
