#pragma once

// Ground truth for the spherical-shell experiment: harmonic fields in the
// shell r_in <= |x| <= r_out with zero normal derivative on the outer sphere,
// the cross-shaped inner-sphere pattern, hemispherical electrode layouts and
// the multiplicative Gaussian noise model.
//
// Real spherical harmonics are orthonormal on the unit sphere, without the
// Condon-Shortley phase, polar axis +z:
//   Y_l0  = P_l^0(cos t)
//   Y_lm  = sqrt(2) P_l^m(cos t) cos(m p)    m > 0
//   Y_l-m = sqrt(2) P_l^m(cos t) sin(m p)    m > 0
// where P_l^m carries the normalization sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!).

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eegoc/error.hpp"
#include "eegoc/mesh.hpp"
#include "eegoc/observation.hpp"
#include "eegoc/quadrature.hpp"

namespace eegoc {

inline constexpr int sh_index(int l, int m) { return l * l + l + m; }
inline constexpr int sh_count(int l_max) { return (l_max + 1) * (l_max + 1); }

/// Normalized associated Legendre values P_l^m(cos t) and d/dt, 0 <= m <= l <= L.
class LegendreTable {
 public:
  LegendreTable(int l_max, double cos_t, double sin_t) : l_max_(l_max) {
    const auto n = static_cast<std::size_t>((l_max + 1) * (l_max + 2) / 2);
    p_.assign(n, 0.0);
    dp_.assign(n, 0.0);
    at(0, 0) = std::sqrt(1.0 / (4.0 * std::numbers::pi));
    for (int m = 1; m <= l_max; ++m) at(m, m) = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_t * at(m - 1, m - 1);
    for (int m = 0; m < l_max; ++m) at(m + 1, m) = std::sqrt(2.0 * m + 3.0) * cos_t * at(m, m);
    for (int m = 0; m <= l_max; ++m)
      for (int l = m + 2; l <= l_max; ++l) {
        const double a = std::sqrt((4.0 * l * l - 1.0) / (double(l) * l - double(m) * m));
        const double b = std::sqrt((double(l - 1) * (l - 1) - double(m) * m) / (4.0 * (l - 1) * (l - 1) - 1.0));
        at(l, m) = a * (cos_t * at(l - 1, m) - b * at(l - 2, m));
      }
    for (int l = 0; l <= l_max; ++l) {
      dt(l, 0) = l > 0 ? -std::sqrt(double(l) * (l + 1)) * at(l, 1) : 0.0;
      for (int m = 1; m <= l; ++m) {
        const double up = m < l ? std::sqrt(double(l + m + 1) * (l - m)) * at(l, m + 1) : 0.0;
        dt(l, m) = 0.5 * (std::sqrt(double(l + m) * (l - m + 1)) * at(l, m - 1) - up);
      }
    }
  }

  [[nodiscard]] double value(int l, int m) const { return p_[idx(l, m)]; }
  [[nodiscard]] double dtheta(int l, int m) const { return dp_[idx(l, m)]; }

 private:
  static std::size_t idx(int l, int m) { return static_cast<std::size_t>(l * (l + 1) / 2 + m); }
  double& at(int l, int m) { return p_[idx(l, m)]; }
  double& dt(int l, int m) { return dp_[idx(l, m)]; }

  int l_max_;
  std::vector<double> p_, dp_;
};

/// All real harmonics Y_lm at a direction (need not be normalized), indexed by sh_index.
inline Vector real_sph_harmonics(int l_max, const Vec3& dir) {
  const double r = dir.norm();
  const double ct = std::clamp(dir.z() / r, -1.0, 1.0);
  const double st = std::hypot(dir.x(), dir.y()) / r;
  const double phi = std::atan2(dir.y(), dir.x());
  const LegendreTable leg(l_max, ct, st);
  Vector y(sh_count(l_max));
  for (int l = 0; l <= l_max; ++l) {
    y[sh_index(l, 0)] = leg.value(l, 0);
    for (int m = 1; m <= l; ++m) {
      const double p = std::numbers::sqrt2 * leg.value(l, m);
      y[sh_index(l, m)] = p * std::cos(m * phi);
      y[sh_index(l, -m)] = p * std::sin(m * phi);
    }
  }
  return y;
}

/// u(x) = sum_lm (a_lm r^l + b_lm r^(-l-1)) Y_lm(x/|x|), harmonic for r > 0.
struct ShellHarmonicField {
  int l_max = 0;
  double r_in = 0.0;
  double r_out = 0.0;
  Vector a;
  Vector b;

  /// Series value; valid (as the harmonic continuation) for any x != 0.
  [[nodiscard]] double value(const Vec3& x) const {
    const double r = x.norm();
    const Vector y = real_sph_harmonics(l_max, x);
    double u = 0.0;
    for (int l = 0; l <= l_max; ++l) {
      const double rl = std::pow(r, l), rm = std::pow(r, -l - 1);
      for (int m = -l; m <= l; ++m) {
        const int k = sh_index(l, m);
        u += (a[k] * rl + b[k] * rm) * y[k];
      }
    }
    return u;
  }

  /// Cartesian gradient of the series.
  [[nodiscard]] Vec3 gradient(const Vec3& x) const {
    const double r = x.norm();
    const double ct = std::clamp(x.z() / r, -1.0, 1.0);
    const double st = std::hypot(x.x(), x.y()) / r;
    if (st < 1e-9) {
      // On the polar axis the spherical frame degenerates; step off it.
      const double h = 1e-5 * r;
      Vec3 g;
      for (int i = 0; i < 3; ++i) g[i] = (value(x + h * Vec3::Unit(i)) - value(x - h * Vec3::Unit(i))) / (2 * h);
      return g;
    }
    const double phi = std::atan2(x.y(), x.x());
    const LegendreTable leg(l_max, ct, st);
    double du_dr = 0.0, du_dt = 0.0, du_dp = 0.0;
    for (int l = 0; l <= l_max; ++l) {
      const double rl = std::pow(r, l), rm = std::pow(r, -l - 1);
      const double drl = l * std::pow(r, l - 1), drm = -(l + 1) * std::pow(r, -l - 2);
      {
        const int k = sh_index(l, 0);
        du_dr += (a[k] * drl + b[k] * drm) * leg.value(l, 0);
        du_dt += (a[k] * rl + b[k] * rm) * leg.dtheta(l, 0);
      }
      for (int m = 1; m <= l; ++m) {
        const double c = std::cos(m * phi), s = std::sin(m * phi);
        const double p = std::numbers::sqrt2 * leg.value(l, m);
        const double dp = std::numbers::sqrt2 * leg.dtheta(l, m);
        const int kc = sh_index(l, m), ks = sh_index(l, -m);
        const double rc = a[kc] * rl + b[kc] * rm, rs = a[ks] * rl + b[ks] * rm;
        du_dr += ((a[kc] * drl + b[kc] * drm) * c + (a[ks] * drl + b[ks] * drm) * s) * p;
        du_dt += (rc * c + rs * s) * dp;
        du_dp += (-rc * s + rs * c) * m * p;
      }
    }
    const double cp = std::cos(phi), sp = std::sin(phi);
    const Vec3 e_r(st * cp, st * sp, ct);
    const Vec3 e_t(ct * cp, ct * sp, -st);
    const Vec3 e_p(-sp, cp, 0.0);
    return du_dr * e_r + (du_dt / r) * e_t + (du_dp / (r * st)) * e_p;
  }

  /// Largest |l a r_out^(l-1) - (l+1) b r_out^(-l-2)| relative to the
  /// coefficient scale; zero means a homogeneous Neumann condition at r_out.
  [[nodiscard]] double neumann_defect() const {
    double worst = 0.0;
    for (int l = 0; l <= l_max; ++l)
      for (int m = -l; m <= l; ++m) {
        const int k = sh_index(l, m);
        const double t1 = l * a[k] * std::pow(r_out, l - 1);
        const double t2 = (l + 1) * b[k] * std::pow(r_out, -l - 2);
        const double scale = std::abs(t1) + std::abs(t2);
        if (scale > 0.0) worst = std::max(worst, std::abs(t1 - t2) / scale);
      }
    return worst;
  }
};

/// Coefficients of the harmonic field whose inner trace has expansion
/// coefficients `inner` and whose normal derivative vanishes at r_out.
inline ShellHarmonicField shell_field_from_inner_coefficients(const Vector& inner, int l_max, double r_in,
                                                              double r_out) {
  require(l_max >= 0, ErrorKind::Parameter, "L_max must be non-negative");
  require(r_in > 0.0 && r_in < r_out, ErrorKind::Parameter, "shell radii must satisfy 0 < r_in < r_out");
  require(inner.size() == sh_count(l_max), ErrorKind::Dimension, "coefficient count does not match L_max");
  ShellHarmonicField f;
  f.l_max = l_max;
  f.r_in = r_in;
  f.r_out = r_out;
  f.a = Vector::Zero(inner.size());
  f.b = Vector::Zero(inner.size());
  for (int l = 0; l <= l_max; ++l) {
    // b = kappa a makes d/dr vanish at r_out.
    const double kappa = double(l) / (l + 1) * std::pow(r_out, 2 * l + 1);
    const double denom = std::pow(r_in, l) + kappa * std::pow(r_in, -l - 1);
    for (int m = -l; m <= l; ++m) {
      const int k = sh_index(l, m);
      f.a[k] = inner[k] / denom;
      f.b[k] = kappa * f.a[k];
    }
  }
  return f;
}

struct ProjectionOptions {
  int n_theta = 0;  // 0: max(2 L + 2, 256)
  int n_phi = 0;    // 0: 2 n_theta
};

/// Expansion coefficients of a function on the unit sphere by quadrature.
inline Vector project_onto_harmonics(const std::function<double(const Vec3&)>& fn, int l_max,
                                     const ProjectionOptions& opt = {}) {
  const int nt = opt.n_theta > 0 ? opt.n_theta : std::max(2 * l_max + 2, 256);
  const int np = opt.n_phi > 0 ? opt.n_phi : 2 * nt;
  const auto q = SphereQuadrature::make(nt, np);
  Vector c = Vector::Zero(sh_count(l_max));
  for (std::size_t i = 0; i < q.directions.size(); ++i) {
    const double v = fn(q.directions[i]);
    if (v == 0.0) continue;
    c += (q.weights[i] * v) * real_sph_harmonics(l_max, q.directions[i]);
  }
  return c;
}

/// Harmonic shell field whose inner trace is the degree <= L_max projection
/// of `inner_trace` (a function of the unit direction).
inline ShellHarmonicField fit_shell_field(const std::function<double(const Vec3&)>& inner_trace, int l_max,
                                          double r_in, double r_out, const ProjectionOptions& opt = {}) {
  require(l_max >= 0, ErrorKind::Parameter, "L_max must be non-negative");
  return shell_field_from_inner_coefficients(project_onto_harmonics(inner_trace, l_max, opt), l_max, r_in, r_out);
}

/// Least-squares fit from nodal samples on the inner sphere.
inline ShellHarmonicField fit_shell_field(const std::vector<Vec3>& points, const Vector& values, int l_max,
                                          double r_in, double r_out) {
  require(static_cast<Eigen::Index>(points.size()) == values.size(), ErrorKind::Dimension,
          "sample points and values differ in length");
  require(static_cast<int>(points.size()) >= sh_count(l_max), ErrorKind::Usage,
          "need at least (L_max + 1)^2 samples");
  DenseMatrix y(static_cast<Eigen::Index>(points.size()), sh_count(l_max));
  for (std::size_t i = 0; i < points.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = real_sph_harmonics(l_max, points[i]);
  const Vector c = y.colPivHouseholderQr().solve(values);
  return shell_field_from_inner_coefficients(c, l_max, r_in, r_out);
}

/// Values at points in the closed shell (relative tolerance 1e-9 on the radii).
inline Vector eval_field(const ShellHarmonicField& f, const std::vector<Vec3>& points) {
  Vector out(static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double r = points[i].norm();
    if (r < f.r_in * (1.0 - 1e-9) || r > f.r_out * (1.0 + 1e-9))
      fail(ErrorKind::Domain, "point " + std::to_string(i) + " at radius " + format_double(r) + " is outside the shell");
    out[static_cast<Eigen::Index>(i)] = f.value(points[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross pattern
// ---------------------------------------------------------------------------

/// Two orthogonal great-circle bands through the +y pole (one around the
/// xy-plane, one around the yz-plane), each cut off at `arm_length_deg` from
/// the pole. Edges roll off with 0.5 + 0.5 sin(pi t / w) over w degrees.
struct CrossPattern {
  double half_width_deg = 10.0;
  double arm_length_deg = 35.0;
  double rolloff_deg = 2.0;

  [[nodiscard]] double ramp(double t_deg) const {
    if (rolloff_deg <= 0.0) return t_deg >= 0.0 ? 1.0 : 0.0;
    if (t_deg <= -0.5 * rolloff_deg) return 0.0;
    if (t_deg >= 0.5 * rolloff_deg) return 1.0;
    return 0.5 + 0.5 * std::sin(std::numbers::pi * t_deg / rolloff_deg);
  }

  /// Value in [0, 1] at the direction of p.
  [[nodiscard]] double operator()(const Vec3& p) const {
    const Vec3 u = p.normalized();
    const double deg = 180.0 / std::numbers::pi;
    const double from_pole = std::acos(std::clamp(u.y(), -1.0, 1.0)) * deg;
    const double along = ramp(arm_length_deg - from_pole);
    const double arm_xy = ramp(half_width_deg - std::asin(std::min(1.0, std::abs(u.z()))) * deg);
    const double arm_yz = ramp(half_width_deg - std::asin(std::min(1.0, std::abs(u.x()))) * deg);
    return along * std::max(arm_xy, arm_yz);
  }
};

inline double cross_pattern(const Vec3& p, const CrossPattern& c = {}) { return c(p); }

// ---------------------------------------------------------------------------
// Electrodes and noise
// ---------------------------------------------------------------------------

/// K quasi-uniform points on the hemisphere y > 0 of radius r: a golden-angle
/// spiral around +y, uniform in cos(angle from +y) on (0, 1]. Point 0 is the pole.
inline ElectrodeSet electrode_layout_hemisphere(int k, double r) {
  require(k >= 1, ErrorKind::Parameter, "need at least one electrode");
  require(r > 0.0, ErrorKind::Parameter, "layout radius must be positive");
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> pos;
  pos.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    // Point 0 sits on the pole; the rest are offset by half a band so they
    // do not crowd it.
    const double c = i == 0 ? 1.0 : 1.0 - (i + 0.5) / k;
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double psi = i * golden;
    pos.emplace_back(r * s * std::cos(psi), r * c, r * s * std::sin(psi));
  }
  return ElectrodeSet::unit_weights(std::move(pos));
}

struct NoiseSpec {
  double level = 0.0;  // relative to |d_i|
  std::uint64_t seed = 0;
};

struct NoisyData {
  DataVector d;
  Vector s;  // per-electrode noise standard deviation
};

/// d_i' = d_i + eta_i, eta_i ~ N(0, s_i^2), s_i = level |d_i|.
inline NoisyData add_noise(const DataVector& d, const NoiseSpec& spec) {
  require(std::isfinite(spec.level) && spec.level >= 0.0, ErrorKind::Parameter, "noise level must be >= 0");
  NoisyData out{d, spec.level * d.cwiseAbs()};
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double z = normal(rng);
    out.d[i] += out.s[i] * z;
  }
  return out;
}

}  // namespace eegoc
