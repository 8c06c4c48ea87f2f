#pragma once

// Reconstruction workflows: single KKT solves, epsilon sweeps, pure-Neumann
// forward solves, the dense lead-field oracle (test scale only), the reduced
// objective with its adjoint gradient, and the h-convergence harness.

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "eegoc/analytic.hpp"
#include "eegoc/assembly.hpp"
#include "eegoc/error.hpp"
#include "eegoc/kkt.hpp"
#include "eegoc/mesh.hpp"
#include "eegoc/observation.hpp"
#include "eegoc/quadrature.hpp"
#include "eegoc/solver.hpp"
#include "eegoc/sparse.hpp"

namespace eegoc {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// e = sqrt(1/K sum (d_i - u_i)^2 / s_i^2).
inline double rmse(const Vector& d, const Vector& u_hat, const Vector& s) {
  require(d.size() == u_hat.size() && d.size() == s.size(), ErrorKind::Dimension, "rmse inputs differ in length");
  require(d.size() > 0, ErrorKind::Usage, "rmse needs at least one electrode");
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (!(s[i] > 0.0))
      fail(ErrorKind::Usage, "noise std s_" + std::to_string(i) + " = " + format_double(s[i]) + " is not positive");
  return std::sqrt(((d - u_hat).array() / s.array()).square().mean());
}

/// Pearson correlation coefficient.
inline double pearson(const Vector& a, const Vector& b) {
  require(a.size() == b.size() && a.size() > 1, ErrorKind::Dimension, "pearson needs two equal-length samples");
  const Vector x = a.array() - a.mean();
  const Vector y = b.array() - b.mean();
  const double den = x.norm() * y.norm();
  require(den > 0.0, ErrorKind::Usage, "pearson is undefined for a constant sample");
  return x.dot(y) / den;
}

/// f minus its area-weighted mean.
inline Vector zero_mean(const Vector& f, const Vector& weights) {
  return f.array() - weights.dot(f) / weights.sum();
}

// ---------------------------------------------------------------------------
// Forward problem
// ---------------------------------------------------------------------------

/// Pure-Neumann forward solver E u = B^T f. The constant is fixed by a
/// Lagrange-multiplier row enforcing zero volume-weighted mean of u. The
/// bordered matrix is factorized once.
class ForwardSolver {
 public:
  ForwardSolver(const SparseSymMatrix& e, const SparseRectMatrix& b, Vector volume_weights, Vector area_weights,
                double total_area)
      : b_(b), vw_(std::move(volume_weights)), aw_(std::move(area_weights)), area_(total_area) {
    const Index n = e.dim();
    require(b.cols() == n && vw_.size() == n && aw_.size() == b.rows(), ErrorKind::Dimension,
            "forward solver block sizes disagree");
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(e.full.nonZeros() + 2 * n));
    for (int c = 0; c < e.full.outerSize(); ++c)
      for (SpMat::InnerIterator it(e.full, c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    const double scale = e.full.diagonal().mean() / vw_.mean();
    for (Index i = 0; i < n; ++i) {
      t.emplace_back(i, n, scale * vw_[i]);
      t.emplace_back(n, i, scale * vw_[i]);
    }
    bordered_ = SpMat(n + 1, n + 1);
    bordered_.setFromTriplets(t.begin(), t.end());
    bordered_.makeCompressed();
    lu_.factorize(bordered_);
  }

  [[nodiscard]] Index n() const { return static_cast<Index>(vw_.size()); }

  /// Throws ErrorKind::Compatibility unless |int f dS| <= 1e-10 ||f||_inf area.
  void check_compatible(const Vector& f) const {
    require(f.size() == b_.rows(), ErrorKind::Dimension, "control vector has the wrong length");
    const double flux = aw_.dot(f);
    const double tol = 1e-10 * f.cwiseAbs().maxCoeff() * area_;
    if (std::abs(flux) > tol)
      fail(ErrorKind::Compatibility, "net flux int f dS = " + format_double(flux) + " exceeds " + format_double(tol));
  }

  /// Zero-mean solution of E u = B^T f.
  [[nodiscard]] Vector solve(const Vector& f) const {
    check_compatible(f);
    return solve_rhs(Vector(b_.mat.transpose() * f));
  }

  /// Zero-mean solution of E u = rhs for a compatible (sum-zero) right-hand side.
  [[nodiscard]] Vector solve_rhs(const Vector& rhs) const {
    Vector b(rhs.size() + 1);
    b << rhs, 0.0;
    return lu_.solve_refined(b, 3).head(rhs.size());
  }

  /// Many right-hand sides at once (columns).
  [[nodiscard]] DenseMatrix solve_many(const DenseMatrix& rhs) const {
    DenseMatrix b = DenseMatrix::Zero(rhs.rows() + 1, rhs.cols());
    b.topRows(rhs.rows()) = rhs;
    return lu_.solve(b).topRows(rhs.rows());
  }

 private:
  SparseRectMatrix b_;
  Vector vw_, aw_;
  double area_;
  SpMat bordered_;
  DirectFactorization lu_;
};

// ---------------------------------------------------------------------------
// Problem assembly and reconstruction
// ---------------------------------------------------------------------------

/// Every mesh-dependent block of the KKT system, assembled once and reused
/// across data vectors and regularization weights.
struct ProblemAssembly {
  TetMesh mesh;
  SurfaceExtraction surface;
  ElectrodeSet electrodes;
  SparseSymMatrix E, A_core, M_f;
  SparseRectMatrix B, Q;
  Vector area_weights;    // B 1_N
  Vector volume_weights;  // lumped volume mass
  SparseSymMatrix G;

  ProblemAssembly(TetMesh m, const ConductivityMap& cond, ElectrodeSet e)
      : mesh(std::move(m)), electrodes(std::move(e)) {
    require_valid(mesh);
    surface = extract_cortex(mesh);
    E = assemble_volume_stiffness(mesh, cond);
    A_core = assemble_surface_stiffness(surface);
    M_f = assemble_surface_mass(surface);
    B = assemble_surface_mass_coupling(surface, mesh);
    Q = assemble_observation(mesh, electrodes);
    area_weights = lumped_surface_mass(surface);
    volume_weights = lumped_volume_mass(mesh);
    G = assemble_data_blocks(Q, electrodes, Vector::Zero(electrodes.size())).G;
  }

  [[nodiscard]] Index m() const { return surface.num_nodes(); }
  [[nodiscard]] Index n() const { return mesh.num_vertices(); }
  [[nodiscard]] Index k() const { return electrodes.size(); }

  [[nodiscard]] Vector data_rhs(const DataVector& d) const { return assemble_data_blocks(Q, electrodes, d).r; }

  [[nodiscard]] ForwardSolver forward_solver() const {
    return ForwardSolver(E, B, volume_weights, area_weights, surface.area());
  }

  /// Values of a volume field at the cortex nodes, in surface order.
  [[nodiscard]] Vector cortex_trace(const Vector& u) const {
    Vector out(m());
    for (Index i = 0; i < m(); ++i) out[i] = u[surface.surf_to_vol[static_cast<std::size_t>(i)]];
    return out;
  }
};

struct ReconstructionOptions {
  std::optional<double> gamma;  // default: default_gamma(A_core)
  SolveOptions solve;
};

struct ReconstructionResult {
  Vector f;
  Vector lambda;
  Vector u;
  Vector f_zero_mean;
  double residual_norm = 0.0;  // ||W (Q u - d)||
  std::optional<double> rmse;
  double epsilon = 0.0;
  double gamma = 0.0;
  SolveReport report;
  StationarityResiduals stationarity;
};

inline KKTSystem build_problem_kkt(const ProblemAssembly& p, const DataVector& d, double epsilon, double gamma) {
  return build_kkt(p.A_core, p.M_f, p.B, p.E, p.G, p.data_rhs(d), epsilon, gamma);
}

/// One reconstruction. `s` (noise std per electrode) enables the RMSE.
inline ReconstructionResult reconstruct(const ProblemAssembly& p, const DataVector& d, double epsilon,
                                        const ReconstructionOptions& opt = {},
                                        const std::optional<Vector>& s = std::nullopt) {
  require(d.size() == p.k(), ErrorKind::Dimension,
          "data has " + std::to_string(d.size()) + " values for " + std::to_string(p.k()) + " electrodes");
  const double gamma = opt.gamma.value_or(default_gamma(p.A_core));
  const KKTSystem sys = build_problem_kkt(p, d, epsilon, gamma);
  const SolveResult sol = solve_kkt(sys, opt.solve);
  KKTSolution x = split_solution(sys, sol.x);

  ReconstructionResult out;
  out.epsilon = epsilon;
  out.gamma = gamma;
  out.report = sol.report;
  out.stationarity = stationarity_residuals(sys, x);
  const Vector u_hat = p.Q.mat * x.u;
  out.residual_norm = (p.electrodes.weight_vector().array() * (u_hat - d).array()).matrix().norm();
  if (s) out.rmse = rmse(d, u_hat, *s);
  out.f_zero_mean = zero_mean(x.f, p.area_weights);
  out.f = std::move(x.f);
  out.lambda = std::move(x.lambda);
  out.u = std::move(x.u);
  return out;
}

inline ReconstructionResult reconstruct(const TetMesh& mesh, const ConductivityMap& cond,
                                        const ElectrodeSet& electrodes, const DataVector& d, double epsilon,
                                        const ReconstructionOptions& opt = {}) {
  return reconstruct(ProblemAssembly(mesh, cond, electrodes), d, epsilon, opt);
}

/// Zero-mean forward solve for a control vector on the given mesh.
inline Vector forward_solve(const TetMesh& mesh, const ConductivityMap& cond, const Vector& f) {
  const SurfaceExtraction s = extract_cortex(mesh);
  const SparseSymMatrix e = assemble_volume_stiffness(mesh, cond);
  const SparseRectMatrix b = assemble_surface_mass_coupling(s, mesh);
  require(f.size() == s.num_nodes(), ErrorKind::Dimension, "control vector has the wrong length");
  ForwardSolver fs(e, b, lumped_volume_mass(mesh), lumped_surface_mass(s), s.area());
  if (f.cwiseAbs().maxCoeff() == 0.0) return Vector::Zero(mesh.num_vertices());
  return fs.solve(f);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepPoint {
  double epsilon = 0.0;
  double residual_norm = 0.0;
  std::optional<double> rmse;
};

struct SweepCurve {
  std::vector<SweepPoint> points;  // epsilon strictly decreasing
  std::vector<ReconstructionResult> results;
};

/// Sorts descending and rejects non-positive or repeated values.
inline std::vector<double> normalize_epsilons(std::vector<double> eps) {
  require(!eps.empty(), ErrorKind::Parameter, "epsilon list is empty");
  for (double e : eps)
    require(std::isfinite(e) && e > 0.0, ErrorKind::Parameter, "epsilon " + format_double(e) + " is not positive");
  std::sort(eps.begin(), eps.end(), std::greater<>());
  for (std::size_t i = 1; i < eps.size(); ++i)
    require(eps[i] < eps[i - 1], ErrorKind::Parameter, "epsilon " + format_double(eps[i]) + " is repeated");
  return eps;
}

/// Decade grid hi, hi/10, ..., lo.
inline std::vector<double> decade_grid(int hi_exp = -5, int lo_exp = -12) {
  std::vector<double> out;
  for (int e = hi_exp; e >= lo_exp; --e) out.push_back(std::pow(10.0, e));
  return out;
}

/// One reconstruction per epsilon. Work is spread over `threads` workers;
/// output order depends only on epsilon.
inline SweepCurve sweep_epsilon(const ProblemAssembly& p, const DataVector& d, std::vector<double> eps,
                                const ReconstructionOptions& opt = {}, const std::optional<Vector>& s = std::nullopt,
                                int threads = 1) {
  eps = normalize_epsilons(std::move(eps));
  const std::size_t n = eps.size();
  std::vector<std::optional<ReconstructionResult>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      try {
        slots[i] = reconstruct(p, d, eps[i], opt, s);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, n);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  SweepCurve c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.push_back({eps[i], slots[i]->residual_norm, slots[i]->rmse});
    c.results.push_back(std::move(*slots[i]));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Lead-field oracle and reduced problem (verification only)
// ---------------------------------------------------------------------------

/// Dense map from zero-mean-projected control basis vectors to weighted
/// electrode responses: L[:, j] = W Q S P e_j, S the zero-mean forward solve.
struct LeadFieldOracle {
  DenseMatrix L;        // K x M
  Vector w;             // electrode weights
  Vector area_weights;  // m = B 1_N
  SparseSymMatrix A_core, M_f;
};

inline constexpr Index kDefaultOracleCap = 2000;

inline LeadFieldOracle build_lead_field_oracle(const ProblemAssembly& p, Index cap = kDefaultOracleCap) {
  if (p.m() > cap)
    fail(ErrorKind::Resource, "lead-field oracle needs M <= " + std::to_string(cap) + ", mesh has M = " +
                                  std::to_string(p.m()));
  const Index m = p.m();
  const Vector& a = p.area_weights;
  // P = I - 1 a^T / (a^T 1)
  DenseMatrix proj = DenseMatrix::Identity(m, m);
  proj -= Vector::Ones(m) * (a.transpose() / a.sum());
  const DenseMatrix rhs = DenseMatrix(p.B.mat.transpose()) * proj;
  const DenseMatrix u = p.forward_solver().solve_many(rhs);
  LeadFieldOracle o;
  o.w = p.electrodes.weight_vector();
  o.L = o.w.asDiagonal() * (p.Q.mat * u);
  o.area_weights = a;
  o.A_core = p.A_core;
  o.M_f = p.M_f;
  return o;
}

inline LeadFieldOracle build_lead_field_oracle(const TetMesh& mesh, const ConductivityMap& cond,
                                               const ElectrodeSet& e, Index cap = kDefaultOracleCap) {
  return build_lead_field_oracle(ProblemAssembly(mesh, cond, e), cap);
}

struct OracleMinimizer {
  Vector f;
  double offset = 0.0;  // potential constant c in u = S f + c 1
};

/// argmin over f with a^T f = 0 and constant c of
///   1/2 ||L f + c w - W d||^2 + eps/2 f^T (A_core + gamma/eps M_f) f
/// by a dense bordered solve.
inline OracleMinimizer oracle_minimizer(const LeadFieldOracle& o, const DataVector& d, double epsilon,
                                        double gamma) {
  require(epsilon > 0.0 && gamma >= 0.0, ErrorKind::Parameter, "need epsilon > 0 and gamma >= 0");
  require(d.size() == o.L.rows(), ErrorKind::Dimension, "data length does not match the lead field");
  const Index m = o.L.cols();
  const Vector wd = o.w.array() * d.array();
  DenseMatrix K = DenseMatrix::Zero(m + 2, m + 2);
  K.topLeftCorner(m, m) = o.L.transpose() * o.L + epsilon * DenseMatrix(o.A_core.full) + gamma * DenseMatrix(o.M_f.full);
  K.block(0, m, m, 1) = o.L.transpose() * o.w;
  K.block(m, 0, 1, m) = (o.L.transpose() * o.w).transpose();
  K(m, m) = o.w.squaredNorm();
  K.block(0, m + 1, m, 1) = o.area_weights;
  K.block(m + 1, 0, 1, m) = o.area_weights.transpose();
  Vector rhs = Vector::Zero(m + 2);
  rhs.head(m) = o.L.transpose() * wd;
  rhs[m] = o.w.dot(wd);
  const Vector x = K.partialPivLu().solve(rhs);
  return {x.head(m), x[m]};
}

/// Projected reduced gradient L^T (L f + c w - W d) + (eps A_core + gamma M_f) f,
/// restricted to zero-mean directions, and its relative size.
struct ReducedGradientCheck {
  Vector gradient;
  double relative_norm = 0.0;
};

inline ReducedGradientCheck reduced_gradient(const LeadFieldOracle& o, const DataVector& d, const Vector& f,
                                             double offset, double epsilon, double gamma) {
  const Vector rho = o.L * f + offset * o.w - (o.w.array() * d.array()).matrix();
  const Vector data_term = o.L.transpose() * rho;
  const Vector reg_term = epsilon * (o.A_core.full * f) + gamma * (o.M_f.full * f);
  Vector g = data_term + reg_term;
  const Vector& a = o.area_weights;
  g -= a * (a.dot(g) / a.squaredNorm());
  const double scale = data_term.norm() + reg_term.norm();
  return {g, scale > 0.0 ? g.norm() / scale : g.norm()};
}

/// Reduced objective Phi(f) = min_c 1/2 ||W (Q (S f + c) - d)||^2 + 1/2 f^T A f
/// with A = eps A_core + gamma M_f, evaluated by forward solves (no lead field),
/// and its gradient by one adjoint solve.
class ReducedObjective {
 public:
  ReducedObjective(const ProblemAssembly& p, DataVector d, double epsilon, double gamma)
      : p_(p), fwd_(p.forward_solver()), d_(std::move(d)), w2_(p.electrodes.weight_vector().array().square()) {
    A_ = SpMat(epsilon * p.A_core.full + gamma * p.M_f.full);
  }

  /// Electrode potentials for control f with the best-fitting constant.
  [[nodiscard]] Vector state(const Vector& f) const {
    Vector u = fwd_.solve(f);
    const Vector qu = p_.Q.mat * u;
    const double c = w2_.dot(d_ - qu) / w2_.sum();
    return u.array() + c;
  }

  [[nodiscard]] double value(const Vector& f) const {
    const Vector r = p_.Q.mat * state(f) - d_;
    return 0.5 * w2_.dot(r.cwiseAbs2()) + 0.5 * f.dot(A_ * f);
  }

  /// A f - B lambda with E lambda = Q^T W^2 (d - Q u), projected to zero-mean directions.
  [[nodiscard]] Vector gradient(const Vector& f) const {
    const Vector u = state(f);
    const Vector src = p_.Q.mat.transpose() * (w2_.array() * (d_ - p_.Q.mat * u).array()).matrix();
    const Vector lambda = fwd_.solve_rhs(src);
    Vector g = A_ * f - p_.B.mat * lambda;
    const Vector& a = p_.area_weights;
    g -= a * (a.dot(g) / a.squaredNorm());
    return g;
  }

  [[nodiscard]] const ForwardSolver& forward() const { return fwd_; }

 private:
  const ProblemAssembly& p_;
  ForwardSolver fwd_;
  DataVector d_;
  Vector w2_;
  SpMat A_;
};

/// Maximum relative mismatch between the adjoint gradient and central
/// differences of Phi over `directions` random zero-mean points/directions.
inline double gradient_fd_check(const ReducedObjective& phi, const Vector& area_weights, int directions,
                                std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_zero_mean = [&](Index m) {
    Vector v(m);
    for (Index i = 0; i < m; ++i) v[i] = normal(rng);
    return zero_mean(v, area_weights);
  };
  double worst = 0.0;
  const Index m = area_weights.size();
  for (int k = 0; k < directions; ++k) {
    const Vector f = scale * random_zero_mean(m);
    Vector v = random_zero_mean(m);
    v /= v.norm();
    const double h = 1e-3 * std::max(1.0, f.norm());
    const double fd = (phi.value(f + h * v) - phi.value(f - h * v)) / (2.0 * h);
    const double an = phi.gradient(f).dot(v);
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-300));
  }
  return worst;
}

/// Relative difference between the KKT multiplier and the adjoint recomputed
/// from the KKT state by one extra solve with E (constant fixed by least
/// squares on the control equation).
inline double adjoint_consistency(const ProblemAssembly& p, const DataVector& d, const ReconstructionResult& r) {
  const Vector w2 = p.electrodes.weight_vector().array().square();
  const Vector src = p.Q.mat.transpose() * (w2.array() * (d - p.Q.mat * r.u).array()).matrix();
  const Vector lambda0 = p.forward_solver().solve_rhs(src);
  const SpMat a = SpMat(r.epsilon * p.A_core.full + r.gamma * p.M_f.full);
  const Vector resid = a * r.f - p.B.mat * lambda0;
  const Vector& bm = p.area_weights;  // B 1
  const double c = bm.dot(resid) / bm.squaredNorm();
  const Vector lambda = lambda0.array() + c;
  return (lambda - r.lambda).norm() / std::max(r.lambda.norm(), 1e-300);
}

// ---------------------------------------------------------------------------
// Interpolation between meshes
// ---------------------------------------------------------------------------

/// Evaluates P1 fields of `mesh` at arbitrary points. Points outside the
/// faceted domain (e.g. nodes of a finer sphere approximation) use the affine
/// extension of the nearest tet.
class P1Evaluator {
 public:
  explicit P1Evaluator(const TetMesh& m, int cells_per_axis = 0) : mesh_(m) {
    lo_ = hi_ = m.vertices.front();
    for (const auto& v : m.vertices) {
      lo_ = lo_.cwiseMin(v);
      hi_ = hi_.cwiseMax(v);
    }
    n_ = cells_per_axis > 0 ? cells_per_axis
                            : std::max(1, static_cast<int>(std::cbrt(static_cast<double>(m.tets.size()) / 4.0)));
    const Vec3 pad = 1e-9 * (hi_ - lo_) + Vec3::Constant(1e-300);
    lo_ -= pad;
    hi_ += pad;
    cells_.assign(static_cast<std::size_t>(n_) * n_ * n_, {});
    for (std::size_t t = 0; t < m.tets.size(); ++t) {
      Vec3 a = m.vertices[m.tets[t][0]], b = a;
      for (int i = 1; i < 4; ++i) {
        a = a.cwiseMin(m.vertices[m.tets[t][i]]);
        b = b.cwiseMax(m.vertices[m.tets[t][i]]);
      }
      const auto ca = cell(a), cb = cell(b);
      for (int x = ca[0]; x <= cb[0]; ++x)
        for (int y = ca[1]; y <= cb[1]; ++y)
          for (int z = ca[2]; z <= cb[2]; ++z) cells_[index(x, y, z)].push_back(static_cast<Index>(t));
    }
  }

  /// Host tet and (possibly extrapolated) barycentric weights.
  [[nodiscard]] std::pair<Index, Eigen::Vector4d> locate(const Vec3& p) const {
    Index best = -1;
    double best_min = -std::numeric_limits<double>::infinity();
    Eigen::Vector4d best_w = Eigen::Vector4d::Zero();
    auto scan = [&](const std::vector<Index>& ts) {
      for (Index t : ts) {
        const Eigen::Vector4d w = detail::barycentric(mesh_, mesh_.tets[static_cast<std::size_t>(t)], p);
        if (w.minCoeff() > best_min) {
          best_min = w.minCoeff();
          best = t;
          best_w = w;
        }
      }
    };
    const auto c = cell(p);
    scan(cells_[index(c[0], c[1], c[2])]);
    // Widen the search ring until a containing tet is found or the grid is exhausted.
    for (int r = 1; best_min < -1e-12 && r <= n_; ++r) {
      for (int x = c[0] - r; x <= c[0] + r; ++x)
        for (int y = c[1] - r; y <= c[1] + r; ++y)
          for (int z = c[2] - r; z <= c[2] + r; ++z) {
            if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != r) continue;
            if (x < 0 || y < 0 || z < 0 || x >= n_ || y >= n_ || z >= n_) continue;
            scan(cells_[index(x, y, z)]);
          }
      if (best >= 0 && best_min > -0.5) break;  // close enough for extrapolation
    }
    require(best >= 0, ErrorKind::Location, "point cannot be located in the mesh");
    return {best, best_w};
  }

  [[nodiscard]] Vector evaluate(const Vector& nodal, const std::vector<Vec3>& pts) const {
    require(nodal.size() == mesh_.num_vertices(), ErrorKind::Dimension, "nodal vector has the wrong length");
    Vector out(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto [t, w] = locate(pts[i]);
      const Tet& tet = mesh_.tets[static_cast<std::size_t>(t)];
      double v = 0.0;
      for (int k = 0; k < 4; ++k) v += w[k] * nodal[tet[k]];
      out[static_cast<Eigen::Index>(i)] = v;
    }
    return out;
  }

 private:
  [[nodiscard]] std::array<int, 3> cell(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int i = 0; i < 3; ++i) {
      const double s = (p[i] - lo_[i]) / (hi_[i] - lo_[i]);
      c[static_cast<std::size_t>(i)] = std::clamp(static_cast<int>(s * n_), 0, n_ - 1);
    }
    return c;
  }
  [[nodiscard]] std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * n_ + y) * n_ + z;
  }

  const TetMesh& mesh_;
  Vec3 lo_, hi_;
  int n_ = 1;
  std::vector<std::vector<Index>> cells_;
};

/// Evaluates a P1 surface field at points by radial projection onto the
/// triangulation (star-shaped surfaces around the origin, e.g. spheres).
inline Vector evaluate_on_surface_radial(const SurfaceExtraction& s, const Vector& nodal, const std::vector<Vec3>& pts) {
  require(nodal.size() == s.num_nodes(), ErrorKind::Dimension, "surface vector has the wrong length");
  Vector out(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3 dir = pts[i].normalized();
    double best_err = std::numeric_limits<double>::infinity();
    double val = 0.0;
    for (const auto& t : s.triangles) {
      const Vec3& a = s.nodes[t[0]];
      const Vec3 e1 = s.nodes[t[1]] - a, e2 = s.nodes[t[2]] - a;
      if (dir.dot(a) <= 0.0) continue;
      const Vec3 h = dir.cross(e2);
      const double det = e1.dot(h);
      if (std::abs(det) < 1e-300) continue;
      const Vec3 sv = -a;
      const double u = sv.dot(h) / det;
      const Vec3 q = sv.cross(e1);
      const double v = dir.dot(q) / det;
      const double err = std::max({-u, -v, u + v - 1.0, 0.0});
      if (err < best_err) {
        best_err = err;
        val = (1.0 - u - v) * nodal[t[0]] + u * nodal[t[1]] + v * nodal[t[2]];
        if (err == 0.0) break;
      }
    }
    out[static_cast<Eigen::Index>(i)] = val;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence studies
// ---------------------------------------------------------------------------

/// Least-squares slope of log(err) against log(h).
inline double fitted_rate(const std::vector<double>& h, const std::vector<double>& err) {
  require(h.size() == err.size() && h.size() >= 2, ErrorKind::Usage, "rate fit needs at least two levels");
  const auto n = static_cast<double>(h.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    require(h[i] > 0.0 && err[i] > 0.0, ErrorKind::Domain, "rate fit needs positive h and errors");
    const double x = std::log(h[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct ConvergenceRow {
  int level = 0;
  double h = 0.0;
  Index n = 0;
  Index tets = 0;
  double h1_error = 0.0;
  double l2_error = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  double h1_rate = 0.0;
  double l2_rate = 0.0;
};

struct ForwardErrors {
  double h1 = 0.0;  // |u - u_h|_{H^1}
  double l2 = 0.0;  // ||u - u_h - c||_{L^2}, c the mean offset
};

/// Errors of a P1 field against a shell harmonic field by tet quadrature.
inline ForwardErrors forward_errors(const TetMesh& mesh, const Vector& uh, const ShellHarmonicField& field,
                                    int quad_order = 4) {
  const auto q = TetQuadrature::make(quad_order);
  double vol = 0.0, mean = 0.0;
  struct Sample {
    double w, diff;
  };
  std::vector<Sample> samples;
  samples.reserve(mesh.tets.size() * q.points.size());
  double h1 = 0.0;
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto& tet = mesh.tets[t];
    const Vec3& p0 = mesh.vertices[tet[0]];
    Eigen::Matrix3d jac;
    jac << mesh.vertices[tet[1]] - p0, mesh.vertices[tet[2]] - p0, mesh.vertices[tet[3]] - p0;
    const double det = std::abs(jac.determinant());
    const TetGeometry g = tet_geometry(mesh, static_cast<Index>(t));
    Vec3 grad_h = Vec3::Zero();
    for (int i = 0; i < 4; ++i) grad_h += uh[tet[i]] * g.grad.row(i).transpose();
    for (std::size_t k = 0; k < q.points.size(); ++k) {
      const Vec3& xi = q.points[k];
      const Vec3 x = p0 + jac * xi;
      const double w = q.weights[k] * det;
      const double lam[4] = {1.0 - xi.sum(), xi[0], xi[1], xi[2]};
      double vh = 0.0;
      for (int i = 0; i < 4; ++i) vh += lam[i] * uh[tet[i]];
      const double diff = field.value(x) - vh;
      h1 += w * (field.gradient(x) - grad_h).squaredNorm();
      samples.push_back({w, diff});
      vol += w;
      mean += w * diff;
    }
  }
  mean /= vol;
  double l2 = 0.0;
  for (const auto& s : samples) l2 += s.w * (s.diff - mean) * (s.diff - mean);
  return {std::sqrt(h1), std::sqrt(l2)};
}

/// Control for the forward test: sigma du/dnu on the cortex with nu the
/// outward normal of the shell (towards the origin), made exactly
/// compatible by removing its area-weighted mean.
inline Vector cortex_flux(const SurfaceExtraction& s, const ShellHarmonicField& field, double sigma,
                          const Vector& area_weights) {
  Vector f(s.num_nodes());
  for (Index i = 0; i < s.num_nodes(); ++i) {
    const Vec3& p = s.nodes[static_cast<std::size_t>(i)];
    f[i] = -sigma * field.gradient(p).dot(p.normalized());
  }
  return zero_mean(f, area_weights);
}

/// Forward problem on shell meshes of increasing level against the analytic
/// field (unit conductivity).
inline ConvergenceTable forward_convergence_study(const std::vector<int>& levels, const ShellHarmonicField& field,
                                                  const ShellMeshOptions& mesh_opt = {}) {
  require(levels.size() >= 2, ErrorKind::Usage, "need at least two levels");
  ConvergenceTable table;
  std::vector<double> hs, e1, e2;
  for (int level : levels) {
    const TetMesh mesh = build_shell_mesh(field.r_in, field.r_out, level, mesh_opt);
    const auto cond = ConductivityMap::uniform(mesh, 1.0);
    const SurfaceExtraction s = extract_cortex(mesh);
    const Vector aw = lumped_surface_mass(s);
    ForwardSolver fs(assemble_volume_stiffness(mesh, cond), assemble_surface_mass_coupling(s, mesh),
                     lumped_volume_mass(mesh), aw, s.area());
    const Vector f = cortex_flux(s, field, 1.0, aw);
    const Vector uh = f.cwiseAbs().maxCoeff() > 0.0 ? fs.solve(f) : Vector::Zero(mesh.num_vertices());
    const ForwardErrors err = forward_errors(mesh, uh, field);
    ConvergenceRow row{level, max_edge_length(mesh), mesh.num_vertices(), mesh.num_tets(), err.h1, err.l2};
    table.rows.push_back(row);
    hs.push_back(row.h);
    e1.push_back(err.h1);
    e2.push_back(err.l2);
  }
  if (std::all_of(e1.begin(), e1.end(), [](double e) { return e > 0.0; })) table.h1_rate = fitted_rate(hs, e1);
  if (std::all_of(e2.begin(), e2.end(), [](double e) { return e > 0.0; })) table.l2_rate = fitted_rate(hs, e2);
  return table;
}

struct SelfConvergenceOptions {
  double epsilon = 1e-5;
  int electrodes = 198;
  double r_in = 0.7;
  double r_out = 1.0;
  ShellMeshOptions mesh{.base_subdivision = 2};
  ReconstructionOptions reconstruction;
};

struct SelfConvergenceRow {
  int level = 0;
  double h = 0.0;
  Index dofs = 0;
  double error = 0.0;  // combined (f, u) H^1 error against the finest level
  double max_stationarity = 0.0;
};

struct SelfConvergenceTable {
  std::vector<SelfConvergenceRow> rows;  // coarse levels only
  int reference_level = 0;
  double reference_stationarity = 0.0;
  double rate = 0.0;
};

/// KKT solutions for shell data from `field` on each level, compared with the
/// finest level after interpolation onto its nodes:
///   err^2 = |u_h - u*|^2_{H1(Omega)} + ||u_h - u*||^2_{L2(Omega)}
///         + |f_h - f*|^2_{H1(Gamma_B)} + ||f_h - f*||^2_{L2(Gamma_B)}.
inline SelfConvergenceTable kkt_self_convergence(const std::vector<int>& levels, const ShellHarmonicField& field,
                                                 const SelfConvergenceOptions& opt = {}) {
  require(levels.size() >= 3, ErrorKind::Usage, "need at least three levels (two plus the reference)");
  std::vector<int> lv = levels;
  std::sort(lv.begin(), lv.end());
  const int ref_level = lv.back();

  auto solve_level = [&](int level) {
    TetMesh mesh = build_shell_mesh(opt.r_in, opt.r_out, level, opt.mesh);
    ElectrodeSet e = electrode_layout_hemisphere(opt.electrodes, opt.r_out);
    e.positions = place_on_boundary(mesh, BoundaryTag::Scalp, e.positions);
    const auto cond = ConductivityMap::uniform(mesh, 1.0);
    ProblemAssembly p(std::move(mesh), cond, std::move(e));
    Vector d(p.k());
    for (Index i = 0; i < p.k(); ++i) d[i] = field.value(p.electrodes.positions[static_cast<std::size_t>(i)]);
    ReconstructionResult r = reconstruct(p, d, opt.epsilon, opt.reconstruction);
    return std::make_pair(std::move(p), std::move(r));
  };

  const auto [ref, ref_sol] = solve_level(ref_level);
  const SparseSymMatrix lap = assemble_laplacian(ref.mesh);
  const SparseSymMatrix mass = assemble_volume_mass(ref.mesh);
  auto combined = [&](const Vector& eu, const Vector& ef) {
    return std::sqrt(lap.quadratic_form(eu) + mass.quadratic_form(eu) + ref.A_core.quadratic_form(ef) +
                     ref.M_f.quadratic_form(ef));
  };

  SelfConvergenceTable table;
  table.reference_level = ref_level;
  table.reference_stationarity = ref_sol.stationarity.max();
  std::vector<double> hs, errs;
  for (std::size_t i = 0; i + 1 < lv.size(); ++i) {
    const auto [p, r] = solve_level(lv[i]);
    const P1Evaluator eval(p.mesh);
    const Vector u_i = eval.evaluate(r.u, ref.mesh.vertices);
    const Vector f_i = evaluate_on_surface_radial(p.surface, r.f, ref.surface.nodes);
    SelfConvergenceRow row;
    row.level = lv[i];
    row.h = max_edge_length(p.mesh);
    row.dofs = p.m() + 2 * p.n();
    row.error = combined(u_i - ref_sol.u, f_i - ref_sol.f);
    row.max_stationarity = r.stationarity.max();
    table.rows.push_back(row);
    hs.push_back(row.h);
    errs.push_back(row.error);
  }
  table.rate = fitted_rate(hs, errs);
  return table;
}

}  // namespace eegoc
