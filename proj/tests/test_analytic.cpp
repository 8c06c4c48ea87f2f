#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "eegoc/analytic.hpp"
#include "eegoc/quadrature.hpp"

using namespace eegoc;

namespace {

constexpr double kPi = std::numbers::pi;

ShellHarmonicField random_field(int l_max, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector c(sh_count(l_max));
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = normal(rng);
  return shell_field_from_inner_coefficients(c, l_max, 0.7, 1.0);
}

double laplacian_fd(const ShellHarmonicField& f, const Vec3& x, double h) {
  double s = -6.0 * f.value(x);
  for (int i = 0; i < 3; ++i) s += f.value(x + h * Vec3::Unit(i)) + f.value(x - h * Vec3::Unit(i));
  return s / (h * h);
}

const ShellHarmonicField& cross_field() {
  static const ShellHarmonicField f = fit_shell_field([](const Vec3& p) { return cross_pattern(p); }, 25, 0.7, 1.0);
  return f;
}

}  // namespace

TEST(Harmonics, OrthonormalUnderQuadrature) {
  const int l_max = 8;
  const auto q = SphereQuadrature::make(20, 40);
  DenseMatrix gram = DenseMatrix::Zero(sh_count(l_max), sh_count(l_max));
  for (std::size_t i = 0; i < q.directions.size(); ++i) {
    const Vector y = real_sph_harmonics(l_max, q.directions[i]);
    gram += q.weights[i] * y * y.transpose();
  }
  EXPECT_LE((gram - DenseMatrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Harmonics, LowDegreeClosedForms) {
  const Vec3 d = Vec3(0.3, -0.5, 0.8).normalized();
  const Vector y = real_sph_harmonics(1, d);
  EXPECT_NEAR(y[sh_index(0, 0)], 0.5 / std::sqrt(kPi), 1e-15);
  const double c1 = std::sqrt(3.0 / (4.0 * kPi));
  EXPECT_NEAR(y[sh_index(1, 0)], c1 * d.z(), 1e-15);
  EXPECT_NEAR(y[sh_index(1, 1)], c1 * d.x(), 1e-15);   // no Condon-Shortley phase
  EXPECT_NEAR(y[sh_index(1, -1)], c1 * d.y(), 1e-15);
}

TEST(ShellField, ConstantTrace) {
  const auto f = fit_shell_field([](const Vec3&) { return 1.0; }, 4, 0.7, 1.0);
  EXPECT_NEAR(f.a[0], std::sqrt(4.0 * kPi), 1e-12);
  EXPECT_EQ(f.b[0], 0.0);
  EXPECT_LE(f.b.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(f.a.tail(f.a.size() - 1).cwiseAbs().maxCoeff(), 1e-12);
  const Vector v = eval_field(f, {Vec3(0.7, 0, 0), Vec3(0, -0.85, 0.1), Vec3(0.5, 0.5, 0.5)});
  for (Eigen::Index i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], 1.0, 1e-12);
}

TEST(ShellField, PureDegreeOneMatchesTwoByTwoSolve) {
  const double r_in = 0.7, r_out = 1.0;
  const auto f = fit_shell_field([](const Vec3& d) { return d.z(); }, 3, r_in, r_out);
  // z / r_in on the inner sphere is cos(theta) = sqrt(4 pi / 3) Y_10.
  const double c = std::sqrt(4.0 * kPi / 3.0);
  Eigen::Matrix2d m;
  m << r_in, std::pow(r_in, -2), 1.0, -2.0 * std::pow(r_out, -3);
  const Eigen::Vector2d ab = m.lu().solve(Eigen::Vector2d(c, 0.0));
  EXPECT_NEAR(f.a[sh_index(1, 0)], ab[0], 1e-12);
  EXPECT_NEAR(f.b[sh_index(1, 0)], ab[1], 1e-12);
  for (const Vec3& dir : {Vec3(0.2, 0.3, 0.9), Vec3(-0.6, 0.1, -0.4), Vec3(1, 1, 0.1)}) {
    const Vec3 x = r_out * dir.normalized();
    EXPECT_NEAR(f.gradient(x).dot(dir.normalized()), 0.0, 1e-12);
  }
  EXPECT_NEAR(f.value(Vec3(0, 0, r_in)), 1.0, 1e-12);
}

TEST(ShellField, NeumannIdentityPerCoefficient) {
  const auto& f = cross_field();
  for (int l = 0; l <= f.l_max; ++l)
    for (int m = -l; m <= l; ++m) {
      const int k = sh_index(l, m);
      const double t1 = l * f.a[k] * std::pow(f.r_out, l - 1);
      const double t2 = (l + 1) * f.b[k] * std::pow(f.r_out, -l - 2);
      EXPECT_LE(std::abs(t1 - t2), 1e-13 * (std::abs(t1) + std::abs(t2) + 1e-300));
    }
  EXPECT_LE(f.neumann_defect(), 1e-13);
}

TEST(ShellField, ProjectionIdempotence) {
  const auto& f = cross_field();
  Vector inner(f.a.size());
  for (int l = 0; l <= f.l_max; ++l)
    for (int m = -l; m <= l; ++m) {
      const int k = sh_index(l, m);
      inner[k] = f.a[k] * std::pow(f.r_in, l) + f.b[k] * std::pow(f.r_in, -l - 1);
    }
  const Vector again = project_onto_harmonics([&](const Vec3& d) { return f.value(f.r_in * d); }, f.l_max, {64, 128});
  EXPECT_LE((again - inner).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ShellField, LeastSquaresFitFromSamples) {
  const auto f = random_field(4, 21);
  std::vector<Vec3> pts;
  const auto q = SphereQuadrature::make(8, 16);
  for (const auto& d : q.directions) pts.push_back(0.7 * d);
  const ShellHarmonicField g = fit_shell_field(pts, eval_field(f, pts), 4, 0.7, 1.0);
  EXPECT_LE((g.a - f.a).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(fit_shell_field(std::vector<Vec3>(pts.begin(), pts.begin() + 10), Vector::Zero(10), 4, 0.7, 1.0), Error);
}

TEST(ShellField, DegreeOneIsOdd) {
  Vector c = Vector::Zero(sh_count(1));
  c[sh_index(1, -1)] = 0.4;
  c[sh_index(1, 0)] = 1.0;
  c[sh_index(1, 1)] = -0.7;
  const auto f = shell_field_from_inner_coefficients(c, 1, 0.7, 1.0);
  for (const Vec3& x : {Vec3(0.5, 0.4, 0.3), Vec3(0.0, 0.9, 0.1), Vec3(-0.2, 0.1, -0.8)})
    EXPECT_NEAR(f.value(x), -f.value(-x), 1e-14);
}

TEST(ShellField, LaplacianVanishesAtSecondOrder) {
  const auto f = random_field(6, 3);
  const Vec3 x(0.3, 0.55, -0.4);
  const double h = 2e-2;
  const double l1 = std::abs(laplacian_fd(f, x, h));
  const double l2 = std::abs(laplacian_fd(f, x, h / 2));
  const double scale = f.gradient(x).norm() / x.norm();
  EXPECT_LT(l2, 1e-3 * scale * 100);
  EXPECT_NEAR(l1 / l2, 4.0, 0.4);
}

TEST(ShellField, RadialDerivativeAtOuterSphereSecondOrder) {
  const auto f = random_field(6, 4);
  const Vec3 dir = Vec3(0.2, -0.7, 0.4).normalized();
  auto fd = [&](double h) { return (f.value((1.0 + h) * dir) - f.value((1.0 - h) * dir)) / (2 * h); };
  const double e1 = std::abs(fd(1e-2)), e2 = std::abs(fd(5e-3));
  EXPECT_NEAR(e1 / e2, 4.0, 0.4);
  EXPECT_LT(e2, 1e-2);
}

TEST(ShellField, GradientMatchesFiniteDifferences) {
  const auto f = random_field(5, 8);
  for (const Vec3& x : {Vec3(0.3, 0.55, -0.4), Vec3(0.0, 0.0, 0.8), Vec3(-0.6, 0.2, 0.5)}) {
    const double h = 1e-6;
    Vec3 fd;
    for (int i = 0; i < 3; ++i) fd[i] = (f.value(x + h * Vec3::Unit(i)) - f.value(x - h * Vec3::Unit(i))) / (2 * h);
    EXPECT_LE((f.gradient(x) - fd).norm(), 1e-7 * (1 + fd.norm()));
  }
}

TEST(ShellField, OutsideShellIsDomainError) {
  const auto& f = cross_field();
  for (const Vec3& p : {Vec3(0, 0.5, 0), Vec3(0, 1.01, 0)}) {
    try {
      eval_field(f, {p});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Domain);
    }
  }
  EXPECT_NO_THROW(eval_field(f, {Vec3(0, 0.7, 0), Vec3(1.0, 0, 0)}));
}

TEST(Cross, PolesAndEdges) {
  const CrossPattern c;
  EXPECT_EQ(cross_pattern(Vec3(0, 0.7, 0)), 1.0);
  EXPECT_EQ(cross_pattern(Vec3(0, -0.7, 0)), 0.0);
  const double deg = kPi / 180.0;
  // Edge of the xy-plane band: 10 degrees out of the plane, 20 from the pole.
  const double uy = std::cos(20 * deg), uz = std::sin(10 * deg);
  const Vec3 edge(std::sqrt(1 - uy * uy - uz * uz), uy, uz);
  EXPECT_NEAR(c(0.7 * edge), 0.5, 1e-12);
  // End of an arm: 35 degrees from the pole inside the band.
  EXPECT_NEAR(c(Vec3(std::sin(35 * deg), std::cos(35 * deg), 0)), 0.5, 1e-12);
  EXPECT_EQ(c(Vec3(std::sin(50 * deg), std::cos(50 * deg), 0)), 0.0);
  EXPECT_EQ(c(Vec3(std::sin(20 * deg), std::cos(20 * deg), 0)), 1.0);
  EXPECT_EQ(c(Vec3(0, std::cos(20 * deg), std::sin(20 * deg))), 1.0);
  EXPECT_EQ(c(Vec3(std::sin(20 * deg) / std::sqrt(2.0), std::cos(20 * deg), std::sin(20 * deg) / std::sqrt(2.0))), 0.0);
}

TEST(Cross, ValuesInUnitInterval) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 2000; ++i) {
    const double v = cross_pattern(Vec3(normal(rng), normal(rng), normal(rng)));
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Layout, SingleElectrodeAtPole) {
  const auto e = electrode_layout_hemisphere(1, 0.9);
  ASSERT_EQ(e.size(), 1);
  EXPECT_LE((e.positions[0] - Vec3(0, 0.9, 0)).norm(), 1e-15);
}

TEST(Layout, HemisphereAndSpacing) {
  const int k = 198;
  const auto e = electrode_layout_hemisphere(k, 1.0);
  ASSERT_EQ(e.size(), k);
  double min_geo = 1e300;
  for (int i = 0; i < k; ++i) {
    EXPECT_GT(e.positions[i].y(), 0.0);
    EXPECT_NEAR(e.positions[i].norm(), 1.0, 1e-12);
    EXPECT_EQ(e.weights[i], 1.0);
    for (int j = i + 1; j < k; ++j)
      min_geo = std::min(min_geo, std::acos(std::clamp(e.positions[i].dot(e.positions[j]), -1.0, 1.0)));
  }
  EXPECT_GE(min_geo, 0.6 * std::sqrt(2.0 * kPi / k));
  const auto again = electrode_layout_hemisphere(k, 1.0);
  for (int i = 0; i < k; ++i) EXPECT_EQ(again.positions[i], e.positions[i]);
}

TEST(Noise, ZeroLevelAndDeterminism) {
  const Vector d = Vector::LinSpaced(20, -1.0, 2.0);
  const auto z = add_noise(d, {0.0, 9});
  EXPECT_EQ(z.d, d);
  EXPECT_EQ(z.s.cwiseAbs().maxCoeff(), 0.0);
  const auto a = add_noise(d, {0.05, 42}), b = add_noise(d, {0.05, 42}), c = add_noise(d, {0.05, 43});
  EXPECT_EQ(a.d, b.d);
  EXPECT_NE(a.d, c.d);
  EXPECT_LE((a.s - 0.05 * d.cwiseAbs()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(add_noise(d, {-0.1, 1}), Error);
}

TEST(Noise, MonteCarloMoments) {
  const Vector d = Vector::Constant(1, 0.8);
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int seed = 0; seed < n; ++seed) {
    const double eta = add_noise(d, {0.01, static_cast<std::uint64_t>(seed)}).d[0] - 0.8;
    sum += eta;
    sq += eta * eta;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, 0.008, 0.03 * 0.008);
  EXPECT_LE(std::abs(mean), 4 * 0.008 / std::sqrt(double(n)));
}
