#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "eegoc/error.hpp"

namespace eegoc {

struct QuadratureRule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton iteration on P_n).
inline QuadratureRule1D gauss_legendre(int n) {
  require(n >= 1, ErrorKind::Parameter, "Gauss-Legendre needs at least one node");
  QuadratureRule1D q;
  q.nodes.resize(static_cast<std::size_t>(n));
  q.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes[static_cast<std::size_t>(i)] = -x;
    q.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    q.weights[static_cast<std::size_t>(i)] = w;
    q.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return q;
}

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta), uniform in
/// phi. Exact for spherical harmonics of total degree < min(2 n_theta, n_phi).
struct SphereQuadrature {
  std::vector<Eigen::Vector3d> directions;
  std::vector<double> weights;

  static SphereQuadrature make(int n_theta, int n_phi) {
    require(n_theta >= 1 && n_phi >= 1, ErrorKind::Parameter, "sphere quadrature needs nodes");
    const auto gl = gauss_legendre(n_theta);
    SphereQuadrature q;
    q.directions.reserve(static_cast<std::size_t>(n_theta) * n_phi);
    q.weights.reserve(static_cast<std::size_t>(n_theta) * n_phi);
    const double dphi = 2.0 * std::numbers::pi / n_phi;
    for (int i = 0; i < n_theta; ++i) {
      const double ct = gl.nodes[static_cast<std::size_t>(i)];
      const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      for (int j = 0; j < n_phi; ++j) {
        const double phi = (j + 0.5) * dphi;
        q.directions.emplace_back(st * std::cos(phi), st * std::sin(phi), ct);
        q.weights.push_back(gl.weights[static_cast<std::size_t>(i)] * dphi);
      }
    }
    return q;
  }
};

/// Collapsed (Duffy) Gauss product rule on the reference tet
/// {x, y, z >= 0, x + y + z <= 1}; weights sum to 1/6.
struct TetQuadrature {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> weights;

  static TetQuadrature make(int n) {
    const auto gl = gauss_legendre(n);
    TetQuadrature q;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const double u = 0.5 * (gl.nodes[static_cast<std::size_t>(i)] + 1.0);
          const double v = 0.5 * (gl.nodes[static_cast<std::size_t>(j)] + 1.0);
          const double w = 0.5 * (gl.nodes[static_cast<std::size_t>(k)] + 1.0);
          q.points.emplace_back(u, (1.0 - u) * v, (1.0 - u) * (1.0 - v) * w);
          q.weights.push_back(0.125 * gl.weights[static_cast<std::size_t>(i)] *
                              gl.weights[static_cast<std::size_t>(j)] * gl.weights[static_cast<std::size_t>(k)] *
                              (1.0 - u) * (1.0 - u) * (1.0 - v));
        }
    return q;
  }
};

}  // namespace eegoc
