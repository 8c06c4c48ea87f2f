#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "eegoc/mesh.hpp"

using namespace eegoc;

namespace {

double shell_volume(double a, double b) { return 4.0 / 3.0 * std::numbers::pi * (b * b * b - a * a * a); }

TetMesh unit_tet() {
  TetMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  m.tets = {{0, 1, 2, 3}};
  m.regions = {1};
  m.faces = {{{0, 2, 1}, BoundaryTag::Scalp},
             {{0, 1, 3}, BoundaryTag::Scalp},
             {{0, 3, 2}, BoundaryTag::Scalp},
             {{1, 2, 3}, BoundaryTag::Scalp}};
  return m;
}

}  // namespace

TEST(ShellMesh, VerticesLieInShell) {
  const TetMesh m = build_shell_mesh(0.7, 1.0, 1);
  const double tol = 1e-12;
  for (const auto& p : m.vertices) {
    EXPECT_GE(p.norm(), 0.7 - tol);
    EXPECT_LE(p.norm(), 1.0 + tol);
  }
  EXPECT_TRUE(validate(m).ok()) << validate(m).summary();
}

TEST(ShellMesh, VolumeWithinFivePercentAtLevelZero) {
  const TetMesh m = build_shell_mesh(0.5, 1.0, 0);
  const double exact = shell_volume(0.5, 1.0);
  EXPECT_NEAR(mesh_volume(m), exact, 0.05 * exact);
}

TEST(ShellMesh, VolumeErrorDecreasesWithRefinement) {
  const double exact = shell_volume(0.7, 1.0);
  double prev = 1e300;
  for (int level = 0; level <= 2; ++level) {
    const double err = std::abs(mesh_volume(build_shell_mesh(0.7, 1.0, level)) - exact);
    EXPECT_LT(err, prev) << "level " << level;
    prev = err;
  }
}

TEST(ShellMesh, EdgeLengthHalvesPerLevel) {
  ShellMeshOptions opt;
  opt.base_subdivision = 1;
  for (int level = 0; level < 3; ++level) {
    const double ratio = max_edge_length(build_shell_mesh(0.7, 1.0, level, opt)) /
                         max_edge_length(build_shell_mesh(0.7, 1.0, level + 1, opt));
    EXPECT_GE(ratio, 1.6) << "level " << level;
    EXPECT_LE(ratio, 2.4) << "level " << level;
  }
}

TEST(ShellMesh, TetCountFormulaAndBudget) {
  EXPECT_EQ(build_shell_mesh(0.7, 1.0, 0).tets.size(), shell_tet_count(0));
  EXPECT_EQ(shell_tet_count(1), 8 * shell_tet_count(0));
  ShellMeshOptions opt;
  opt.max_tets = 1000;
  try {
    build_shell_mesh(0.7, 1.0, 0, opt);
    FAIL() << "expected a resource error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Resource);
  }
}

TEST(ShellMesh, RejectsBadRadii) {
  EXPECT_THROW(build_shell_mesh(1.0, 0.7, 0), Error);
  EXPECT_THROW(build_shell_mesh(0.0, 1.0, 0), Error);
  EXPECT_THROW(build_shell_mesh(0.7, 1.0, -1), Error);
}

TEST(ShellMesh, Deterministic) {
  const TetMesh a = build_shell_mesh(0.7, 1.0, 1);
  const TetMesh b = build_shell_mesh(0.7, 1.0, 1);
  ASSERT_EQ(a.vertices.size(), b.vertices.size());
  for (std::size_t i = 0; i < a.vertices.size(); ++i) EXPECT_EQ(a.vertices[i], b.vertices[i]);
  EXPECT_EQ(a.tets, b.tets);
}

TEST(ShellMesh, PositiveVolumesAndTagCounts) {
  const TetMesh m = build_shell_mesh(0.7, 1.0, 0);
  for (const auto& t : m.tets) EXPECT_GT(signed_volume(m, t), 0.0);
  std::size_t scalp = 0, cortex = 0;
  for (const auto& f : m.faces) (f.tag == BoundaryTag::Scalp ? scalp : cortex)++;
  EXPECT_EQ(scalp, cortex);
  EXPECT_EQ(scalp, 512u);
}

TEST(Cortex, TrianglesAreExactlyTheCortexFaces) {
  const TetMesh m = build_shell_mesh(0.7, 1.0, 1);
  const SurfaceExtraction s = extract_cortex(m);
  std::size_t cortex_faces = 0;
  std::set<Index> cortex_vertices;
  for (const auto& f : m.faces)
    if (f.tag == BoundaryTag::Cortex) {
      ++cortex_faces;
      cortex_vertices.insert(f.v.begin(), f.v.end());
    }
  EXPECT_EQ(s.triangles.size(), cortex_faces);
  const std::set<Index> mapped(s.surf_to_vol.begin(), s.surf_to_vol.end());
  EXPECT_EQ(mapped.size(), s.surf_to_vol.size()) << "surf_to_vol must be injective";
  EXPECT_EQ(mapped, cortex_vertices);
  for (Index i = 0; i < s.num_nodes(); ++i) EXPECT_EQ(s.nodes[i], m.vertices[s.surf_to_vol[i]]);
}

TEST(Cortex, SphereTopology) {
  const SurfaceExtraction s = extract_cortex(build_shell_mesh(0.7, 1.0, 1));
  EXPECT_EQ(euler_characteristic(s), 2);
}

TEST(Cortex, AreaConvergesToSphereArea) {
  const double exact = 4.0 * std::numbers::pi * 0.49;
  double prev = 1e300;
  for (int level = 0; level <= 2; ++level) {
    const double err = std::abs(extract_cortex(build_shell_mesh(0.7, 1.0, level)).area() - exact);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev / exact, 2e-3);
}

TEST(Cortex, OrientationIsOutwardFromDomain) {
  // Outward from the shell means towards the origin on the inner sphere, so
  // every triangle contributes a negative signed volume w.r.t. the origin.
  const SurfaceExtraction s = extract_cortex(build_shell_mesh(0.7, 1.0, 1));
  double total = 0.0;
  for (const auto& t : s.triangles) {
    const double v = s.nodes[t[0]].dot(s.nodes[t[1]].cross(s.nodes[t[2]])) / 6.0;
    EXPECT_LT(v, 0.0);
    total += v;
  }
  const double ball = 4.0 / 3.0 * std::numbers::pi * 0.343;
  EXPECT_NEAR(-total, ball, 0.02 * ball);
}

TEST(Cortex, EmptyBoundaryIsAnError) {
  try {
    extract_cortex(unit_tet());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyBoundary);
  }
}

TEST(Validate, UnitTetIsValid) { EXPECT_TRUE(validate(unit_tet()).ok()) << validate(unit_tet()).summary(); }

TEST(Validate, InvertedTetIsNamed) {
  TetMesh m = build_shell_mesh(0.7, 1.0, 0);
  std::swap(m.tets[17][0], m.tets[17][1]);
  const ValidationReport rep = validate(m);
  ASSERT_EQ(rep.count(ViolationKind::InvertedTet), 1u);
  for (const auto& v : rep.violations)
    if (v.kind == ViolationKind::InvertedTet) {
      EXPECT_EQ(v.index, 17u);
    }
  EXPECT_THROW(require_valid(m), Error);
  canonicalize_orientation(m);
  EXPECT_TRUE(validate(m).ok());
}

TEST(Validate, DuplicateFaceReported) {
  TetMesh m = build_shell_mesh(0.7, 1.0, 0);
  m.faces.push_back(m.faces.front());
  const ValidationReport rep = validate(m);
  EXPECT_FALSE(rep.ok());
  EXPECT_GE(rep.count(ViolationKind::DuplicateFace) + rep.count(ViolationKind::NonManifold), 1u);
}

TEST(Validate, MissingFaceReported) {
  TetMesh m = unit_tet();
  m.faces.pop_back();
  const ValidationReport rep = validate(m);
  EXPECT_GE(rep.count(ViolationKind::UntaggedBoundaryFace), 1u);
}

TEST(Validate, IndexOutOfRangeAndDegenerate) {
  TetMesh m = unit_tet();
  m.tets[0][3] = 9;
  EXPECT_GE(validate(m).count(ViolationKind::IndexOutOfRange), 1u);
  TetMesh flat = unit_tet();
  flat.vertices[3] = Vec3(0.3, 0.3, 0.0);
  EXPECT_FALSE(validate(flat).ok());
}

TEST(Conductivity, MissingRegionAndNonPositive) {
  const TetMesh m = unit_tet();
  ConductivityMap c;
  EXPECT_THROW(c.check(m), Error);
  c.sigma[1] = -1.0;
  EXPECT_THROW(c.check(m), Error);
  c.sigma[1] = 0.33;
  EXPECT_NO_THROW(c.check(m));
}
