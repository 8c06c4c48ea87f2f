#pragma once

// Builds meshes, electrode sets, ground truth and data from a RunConfig.
// Shared by the command-line tool and the acceptance runner.

#include <optional>
#include <string>
#include <vector>

#include "eegoc/analytic.hpp"
#include "eegoc/config.hpp"
#include "eegoc/io.hpp"
#include "eegoc/mesh.hpp"
#include "eegoc/mesh_io.hpp"
#include "eegoc/observation.hpp"
#include "eegoc/pipeline.hpp"

namespace eegoc {

inline TetMesh load_mesh(const MeshConfig& c) {
  TetMesh m;
  if (c.source == "shell") {
    m = build_shell_mesh(c.r_inner, c.r_outer, c.level, c.shell);
  } else if (c.source == "msh") {
    m = load_msh(c.path, c.tags);
  } else {
    m = read_mesh_dump(c.path);
  }
  require_valid(m);
  return m;
}

/// Harmonic field in the shell whose inner trace approximates the cross.
inline ShellHarmonicField truth_field(const RunConfig& c) {
  const CrossPattern cross = c.field.cross;
  return fit_shell_field([&](const Vec3& p) { return cross(p); }, c.field.l_max, c.mesh.r_inner, c.mesh.r_outer);
}

inline ElectrodeSet load_electrode_set(const RunConfig& c, const TetMesh& m) {
  ElectrodeSet e;
  if (c.electrodes.source == "file") {
    e = read_electrodes(c.electrodes.path);
  } else {
    e = electrode_layout_hemisphere(c.electrodes.count, c.electrodes.radius.value_or(c.mesh.r_outer));
  }
  if (c.electrodes.project) e.positions = place_on_boundary(m, BoundaryTag::Scalp, e.positions);
  return e;
}

struct ExperimentData {
  DataVector d;
  Vector s;          // noise std; zero when noise-free
  DataVector clean;  // noise-free samples (synthetic only)
};

inline ExperimentData synthesize(const ShellHarmonicField& field, const ElectrodeSet& e, double noise,
                                 std::uint64_t seed) {
  ExperimentData x;
  x.clean = eval_field(field, e.positions);
  const NoisyData nd = add_noise(x.clean, {noise, seed});
  x.d = nd.d;
  x.s = nd.s;
  return x;
}

/// The noise std is usable for the RMSE only when strictly positive everywhere.
inline std::optional<Vector> rmse_scale(const Vector& s) {
  if (s.size() == 0 || s.minCoeff() <= 0.0) return std::nullopt;
  return s;
}

/// Zero-based index of the largest epsilon (the curve is sorted descending)
/// with e < 1, or nullopt when e never drops below 1.
inline std::optional<std::size_t> first_crossing(const std::vector<SweepPoint>& pts) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (pts[i].rmse && *pts[i].rmse < 1.0) return i;
  return std::nullopt;
}

/// Smooth low-degree fields used by the convergence studies.
inline ShellHarmonicField forward_study_field(double r_in, double r_out) {
  Vector c = Vector::Zero(sh_count(3));
  c[sh_index(1, 0)] = 1.0;
  c[sh_index(2, 1)] = 0.5;
  c[sh_index(3, -2)] = 0.3;
  return shell_field_from_inner_coefficients(c, 3, r_in, r_out);
}

inline ShellHarmonicField kkt_study_field(double r_in, double r_out) {
  Vector c = Vector::Zero(sh_count(3));
  c[sh_index(1, 1)] = 1.0;
  c[sh_index(2, 0)] = 0.5;
  c[sh_index(3, 2)] = 0.3;
  return shell_field_from_inner_coefficients(c, 3, r_in, r_out);
}

/// Best potential offset for a control f: argmin_c ||L f + c w - W d||.
inline double best_offset(const LeadFieldOracle& o, const DataVector& d, const Vector& f) {
  const Vector rho = (o.w.array() * d.array()).matrix() - o.L * f;
  return o.w.dot(rho) / o.w.squaredNorm();
}

inline double relative_difference(const Vector& a, const Vector& b) {
  const double den = std::max(a.norm(), b.norm());
  return den > 0.0 ? (a - b).norm() / den : 0.0;
}

}  // namespace eegoc
