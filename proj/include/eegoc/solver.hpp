#pragma once

// Sparse symmetric (indefinite) linear solves: UMFPACK LU with iterative
// refinement, or preconditioned MINRES.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/UmfPackSupport>
#include <unsupported/Eigen/IterativeSolvers>

#include "eegoc/error.hpp"
#include "eegoc/sparse.hpp"

namespace eegoc {

enum class SolverMethod { Direct, Iterative };

inline std::string_view to_string(SolverMethod m) {
  return m == SolverMethod::Direct ? "direct" : "iterative";
}

inline SolverMethod parse_solver_method(std::string_view s) {
  if (s == "direct") return SolverMethod::Direct;
  if (s == "iterative") return SolverMethod::Iterative;
  fail(ErrorKind::Parameter, "unknown solver method '" + std::string(s) + "'");
}

struct SolveOptions {
  SolverMethod method = SolverMethod::Direct;
  double tol = 1e-10;           // on ||M x - b|| / ||b||
  int max_iterations = 0;       // iterative only; 0 means 20 * n
  int max_refinement_steps = 5;  // direct only
  bool equilibrate = false;     // symmetric diagonal scaling before solving
};

struct SolveReport {
  SolverMethod method = SolverMethod::Direct;
  int iterations = 0;  // MINRES iterations or refinement steps
  double relative_residual = 0.0;
  double wall_seconds = 0.0;
  long long factor_nnz = 0;
};

struct SolveResult {
  Vector x;
  SolveReport report;
};

inline double relative_residual(const SpMat& a, const Vector& x, const Vector& b) {
  const double nb = b.norm();
  const double nr = (b - a * x).norm();
  return nb == 0.0 ? nr : nr / nb;
}

/// Symmetric scaling D with D_ii = 1/sqrt(max_j |a_ij|).
inline Vector equilibration_scaling(const SpMat& a) {
  Vector m = Vector::Zero(a.rows());
  for (int c = 0; c < a.outerSize(); ++c)
    for (SpMat::InnerIterator it(a, c); it; ++it) m[it.row()] = std::max(m[it.row()], std::abs(it.value()));
  Vector d(a.rows());
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = m[i] > 0.0 ? 1.0 / std::sqrt(m[i]) : 1.0;
  return d;
}

/// Reusable LU factorization of a square sparse matrix: UMFPACK first,
/// Eigen's SparseLU if UMFPACK reports a failure (a broken BLAS can make
/// UMFPACK return NaN pivots on matrices that are fine).
class DirectFactorization {
 public:
  DirectFactorization() = default;
  DirectFactorization(const DirectFactorization&) = delete;
  DirectFactorization& operator=(const DirectFactorization&) = delete;

  explicit DirectFactorization(const SpMat& a) { factorize(a); }

  void factorize(const SpMat& a) {
    require(a.rows() == a.cols(), ErrorKind::Dimension, "matrix must be square");
    a_ = &a;
    umf_.compute(a);
    use_umf_ = umf_.info() == Eigen::Success;
    if (use_umf_) return;
    slu_.analyzePattern(a);
    slu_.factorize(a);
    if (slu_.info() == Eigen::Success) return;
    fail(ErrorKind::Singular, "singular matrix in LU factorization: zero pivot at column " + pivot_column(a));
  }

  [[nodiscard]] bool used_umfpack() const { return use_umf_; }

 private:
  // Original column index of the failed pivot. SparseLU reports a 1-based
  // position in its permuted column order.
  std::string pivot_column(const SpMat& a) const {
    for (int c = 0; c < a.outerSize(); ++c) {
      bool empty = true;
      for (SpMat::InnerIterator it(a, c); it && empty; ++it) empty = it.value() == 0.0;
      if (empty) return std::to_string(c);
    }
    const std::string msg = slu_.lastErrorMessage();
    const auto pos = msg.find_last_not_of("0123456789");
    if (pos == std::string::npos || pos + 1 >= msg.size()) return "unknown";
    const long j = std::stol(msg.substr(pos + 1)) - 1;
    const auto& perm = slu_.colsPermutation().indices();
    for (Eigen::Index c = 0; c < perm.size(); ++c)
      if (perm[c] == j) return std::to_string(c);
    return "unknown";
  }

 public:

  [[nodiscard]] Vector solve(const Vector& b) const { return use_umf_ ? Vector(umf_.solve(b)) : Vector(slu_.solve(b)); }

  [[nodiscard]] DenseMatrix solve(const DenseMatrix& b) const {
    return use_umf_ ? DenseMatrix(umf_.solve(b)) : DenseMatrix(slu_.solve(b));
  }

  /// Solve with iterative refinement until the residual stagnates.
  [[nodiscard]] Vector solve_refined(const Vector& b, int max_steps, int* steps = nullptr) const {
    Vector x = solve(b);
    double res = (b - *a_ * x).norm();
    int k = 0;
    for (; k < max_steps && res > 0.0; ++k) {
      const Vector dx = solve(Vector(b - *a_ * x));
      const Vector x_new = x + dx;
      const double res_new = (b - *a_ * x_new).norm();
      if (!(res_new < 0.5 * res)) {
        if (res_new < res) {
          x = x_new;
          res = res_new;
        }
        break;
      }
      x = x_new;
      res = res_new;
    }
    if (steps) *steps = k;
    return x;
  }

  [[nodiscard]] long long factor_nnz() const {
    if (use_umf_) return static_cast<long long>(umf_.matrixL().nonZeros() + umf_.matrixU().nonZeros());
    return static_cast<long long>(slu_.nnzL() + slu_.nnzU());
  }

 private:
  const SpMat* a_ = nullptr;
  bool use_umf_ = false;
  Eigen::UmfPackLU<SpMat> umf_;
  mutable Eigen::SparseLU<SpMat> slu_;
};

/// Any symmetric positive definite operator usable as a MINRES preconditioner.
struct Preconditioner {
  std::function<Vector(const Vector&)> apply;
  [[nodiscard]] Vector solve(const Vector& v) const { return apply(v); }
};

inline Preconditioner identity_preconditioner() {
  return {[](const Vector& v) { return v; }};
}

/// Solves a x = b for square sparse a. The direct path factorizes with
/// UMFPACK and refines; the iterative path runs MINRES with `precond`.
inline SolveResult solve_sparse(const SpMat& a, const Vector& b, const SolveOptions& opt,
                                const Preconditioner& precond = identity_preconditioner()) {
  require(opt.tol > 0.0, ErrorKind::Parameter, "solver tolerance must be positive");
  require(a.rows() == a.cols() && a.rows() == b.size(), ErrorKind::Dimension, "system size mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  SolveResult out;
  out.report.method = opt.method;
  auto finish = [&] {
    out.report.relative_residual = relative_residual(a, out.x, b);
    out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  if (b.squaredNorm() == 0.0) {
    out.x = Vector::Zero(b.size());
    finish();
    return out;
  }

  Vector scale;
  SpMat scaled;
  const SpMat* mat = &a;
  Vector rhs = b;
  if (opt.equilibrate) {
    scale = equilibration_scaling(a);
    scaled = scale.asDiagonal() * a * scale.asDiagonal();
    mat = &scaled;
    rhs = scale.asDiagonal() * b;
  }

  if (opt.method == SolverMethod::Direct) {
    DirectFactorization lu(*mat);
    out.x = lu.solve_refined(rhs, opt.max_refinement_steps, &out.report.iterations);
    out.report.factor_nnz = lu.factor_nnz();
  } else {
    Preconditioner p = precond;
    if (opt.equilibrate)
      p = {[&](const Vector& v) { return Vector(scale.asDiagonal() * precond.solve(scale.asDiagonal() * v)); }};
    Vector x = Vector::Zero(rhs.size());
    Eigen::Index iters = opt.max_iterations > 0 ? opt.max_iterations : 20 * rhs.size();
    double tol = opt.tol;
    Eigen::internal::minres(*mat, rhs, x, p, iters, tol);
    out.x = std::move(x);
    out.report.iterations = static_cast<int>(iters);
  }
  if (opt.equilibrate) out.x = scale.asDiagonal() * out.x;
  finish();
  if (!out.x.allFinite()) fail(ErrorKind::Singular, "solution has non-finite entries");
  if (out.report.relative_residual > opt.tol) {
    if (opt.method == SolverMethod::Iterative)
      throw ConvergenceError("MINRES stopped at relative residual " + format_double(out.report.relative_residual) +
                                 " after " + std::to_string(out.report.iterations) + " iterations",
                             out.x, out.report.relative_residual);
    fail(ErrorKind::Singular, "direct solve reached only relative residual " +
                                  format_double(out.report.relative_residual));
  }
  return out;
}

}  // namespace eegoc
