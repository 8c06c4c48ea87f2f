#pragma once

// Tetrahedral head-model meshes: storage, invariant checking, boundary
// extraction and a deterministic spherical-shell mesher.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "eegoc/error.hpp"

namespace eegoc {

using Index = int;
using Vec3 = Eigen::Vector3d;
using Tet = std::array<Index, 4>;
using Tri = std::array<Index, 3>;

enum class BoundaryTag : std::uint8_t { Scalp, Cortex, Other };

inline constexpr std::string_view to_string(BoundaryTag t) {
  switch (t) {
    case BoundaryTag::Scalp: return "scalp";
    case BoundaryTag::Cortex: return "cortex";
    case BoundaryTag::Other: return "other";
  }
  return "other";
}

inline BoundaryTag parse_boundary_tag(std::string_view s) {
  if (s == "scalp") return BoundaryTag::Scalp;
  if (s == "cortex") return BoundaryTag::Cortex;
  if (s == "other") return BoundaryTag::Other;
  fail(ErrorKind::Parse, "unknown boundary tag '" + std::string(s) + "'");
}

struct BoundaryFace {
  Tri v;
  BoundaryTag tag;
  friend bool operator==(const BoundaryFace&, const BoundaryFace&) = default;
};

/// Volume mesh of the head (or shell). Tets are stored with positive signed
/// volume; boundary faces are oriented with the normal pointing out of the
/// domain.
struct TetMesh {
  std::vector<Vec3> vertices;
  std::vector<Tet> tets;
  std::vector<int> regions;  // one compartment label per tet
  std::vector<BoundaryFace> faces;

  [[nodiscard]] Index num_vertices() const { return static_cast<Index>(vertices.size()); }
  [[nodiscard]] Index num_tets() const { return static_cast<Index>(tets.size()); }
};

// ---------------------------------------------------------------------------
// Geometry helpers
// ---------------------------------------------------------------------------

inline double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

inline double signed_volume(const TetMesh& m, const Tet& t) {
  return signed_volume(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]], m.vertices[t[3]]);
}

inline Vec3 area_vector(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a);
}

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return area_vector(a, b, c).norm();
}

/// Largest side of the axis-aligned bounding box.
inline double bounding_box_size(const std::vector<Vec3>& pts) {
  if (pts.empty()) return 0.0;
  Vec3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).maxCoeff();
}

inline double bounding_box_diagonal(const std::vector<Vec3>& pts) {
  if (pts.empty()) return 0.0;
  Vec3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

/// h: the maximum element diameter (longest tet edge).
inline double max_edge_length(const TetMesh& m) {
  double h = 0.0;
  for (const auto& t : m.tets)
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        h = std::max(h, (m.vertices[t[i]] - m.vertices[t[j]]).norm());
  return h;
}

inline double mesh_volume(const TetMesh& m) {
  double v = 0.0;
  for (const auto& t : m.tets) v += std::abs(signed_volume(m, t));
  return v;
}

/// Below this fraction of bbox^3 a tet counts as degenerate.
inline constexpr double kDegenerateVolumeRatio = 1e-14;

inline double degenerate_volume_threshold(const TetMesh& m) {
  const double s = bounding_box_size(m.vertices);
  return kDegenerateVolumeRatio * s * s * s;
}

inline Tri sorted(Tri f) {
  std::sort(f.begin(), f.end());
  return f;
}

/// The four faces of a positively oriented tet, each oriented outward.
inline std::array<Tri, 4> outward_faces(const Tet& t) {
  return {{{t[1], t[2], t[3]}, {t[0], t[3], t[2]}, {t[0], t[1], t[3]}, {t[0], t[2], t[1]}}};
}

// ---------------------------------------------------------------------------
// Conductivity
// ---------------------------------------------------------------------------

/// region id -> conductivity (S/m).
struct ConductivityMap {
  std::map<int, double> sigma;

  static ConductivityMap uniform(const TetMesh& m, double s) {
    ConductivityMap c;
    for (int r : m.regions) c.sigma[r] = s;
    return c;
  }

  [[nodiscard]] double at(int region) const {
    auto it = sigma.find(region);
    if (it == sigma.end())
      fail(ErrorKind::Validation, "no conductivity for region " + std::to_string(region));
    return it->second;
  }

  void check(const TetMesh& m) const {
    for (const auto& [r, s] : sigma)
      require(std::isfinite(s) && s > 0.0, ErrorKind::Parameter,
              "conductivity of region " + std::to_string(r) + " must be positive");
    for (int r : m.regions) (void)at(r);
  }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationKind {
  IndexOutOfRange,
  RegionCount,
  InvertedTet,
  DegenerateTet,
  DegenerateFace,
  FaceNotOnBoundary,
  DuplicateFace,
  UntaggedBoundaryFace,
  NonManifold,
};

struct Violation {
  ViolationKind kind;
  std::size_t index;  // tet or face index the violation refers to
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  [[nodiscard]] bool ok() const { return violations.empty(); }

  [[nodiscard]] std::size_t count(ViolationKind k) const {
    return static_cast<std::size_t>(std::count_if(
        violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; }));
  }

  [[nodiscard]] std::string summary(std::size_t max_items = 5) const {
    std::string s;
    for (std::size_t i = 0; i < violations.size() && i < max_items; ++i) {
      if (!s.empty()) s += "; ";
      s += violations[i].message;
    }
    if (violations.size() > max_items)
      s += "; ... (" + std::to_string(violations.size()) + " total)";
    return s;
  }
};

namespace detail {

using EdgeKey = std::pair<Index, Index>;

inline EdgeKey edge_key(Index a, Index b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

inline void check_manifold(const TetMesh& m, BoundaryTag tag, ValidationReport& rep) {
  std::vector<std::pair<EdgeKey, std::size_t>> edges;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    if (m.faces[f].tag != tag) continue;
    const auto& v = m.faces[f].v;
    for (int i = 0; i < 3; ++i) edges.emplace_back(edge_key(v[i], v[(i + 1) % 3]), f);
  }
  std::sort(edges.begin(), edges.end());
  for (std::size_t i = 0; i < edges.size();) {
    std::size_t j = i;
    while (j < edges.size() && edges[j].first == edges[i].first) ++j;
    if (j - i != 2) {
      rep.violations.push_back(
          {ViolationKind::NonManifold, edges[i].second,
           std::string(to_string(tag)) + " edge (" + std::to_string(edges[i].first.first) + "," +
               std::to_string(edges[i].first.second) + ") shared by " + std::to_string(j - i) +
               " faces"});
    }
    i = j;
  }
}

}  // namespace detail

/// Checks every structural invariant of a TetMesh. Never throws; an empty
/// report means the mesh is valid.
inline ValidationReport validate(const TetMesh& m) {
  ValidationReport rep;
  const Index n = m.num_vertices();
  auto in_range = [n](Index i) { return i >= 0 && i < n; };

  if (m.regions.size() != m.tets.size())
    rep.violations.push_back({ViolationKind::RegionCount, 0,
                              "region count " + std::to_string(m.regions.size()) +
                                  " != tet count " + std::to_string(m.tets.size())});

  bool indices_ok = true;
  for (std::size_t t = 0; t < m.tets.size(); ++t)
    for (Index v : m.tets[t])
      if (!in_range(v)) {
        rep.violations.push_back({ViolationKind::IndexOutOfRange, t,
                                  "tet " + std::to_string(t) + " references vertex " +
                                      std::to_string(v)});
        indices_ok = false;
      }
  for (std::size_t f = 0; f < m.faces.size(); ++f)
    for (Index v : m.faces[f].v)
      if (!in_range(v)) {
        rep.violations.push_back({ViolationKind::IndexOutOfRange, f,
                                  "face " + std::to_string(f) + " references vertex " +
                                      std::to_string(v)});
        indices_ok = false;
      }
  if (!indices_ok) return rep;

  const double vol_tol = degenerate_volume_threshold(m);
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    const double vol = signed_volume(m, m.tets[t]);
    if (std::abs(vol) <= vol_tol)
      rep.violations.push_back({ViolationKind::DegenerateTet, t,
                                "tet " + std::to_string(t) + " is degenerate"});
    else if (vol < 0.0)
      rep.violations.push_back({ViolationKind::InvertedTet, t,
                                "tet " + std::to_string(t) + " has negative volume"});
  }

  const double s = bounding_box_size(m.vertices);
  const double area_tol = 1e-14 * s * s;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const auto& v = m.faces[f].v;
    if (triangle_area(m.vertices[v[0]], m.vertices[v[1]], m.vertices[v[2]]) <= area_tol)
      rep.violations.push_back({ViolationKind::DegenerateFace, f,
                                "face " + std::to_string(f) + " has zero area"});
  }

  // Count tets per face; boundary faces of the volume have exactly one tet.
  std::vector<std::pair<Tri, std::size_t>> tet_faces;
  tet_faces.reserve(4 * m.tets.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t)
    for (const auto& f : outward_faces(m.tets[t])) tet_faces.emplace_back(sorted(f), t);
  std::sort(tet_faces.begin(), tet_faces.end());

  std::vector<std::pair<Tri, std::size_t>> listed;
  listed.reserve(m.faces.size());
  for (std::size_t f = 0; f < m.faces.size(); ++f) listed.emplace_back(sorted(m.faces[f].v), f);
  std::sort(listed.begin(), listed.end());

  for (std::size_t i = 1; i < listed.size(); ++i)
    if (listed[i].first == listed[i - 1].first)
      rep.violations.push_back({ViolationKind::DuplicateFace, listed[i].second,
                                "face " + std::to_string(listed[i].second) +
                                    " duplicates face " + std::to_string(listed[i - 1].second)});

  auto tet_count = [&](const Tri& key) {
    auto lo = std::lower_bound(tet_faces.begin(), tet_faces.end(), std::make_pair(key, std::size_t{0}));
    std::size_t c = 0;
    while (lo != tet_faces.end() && lo->first == key) {
      ++c;
      ++lo;
    }
    return c;
  };
  for (const auto& [key, f] : listed)
    if (tet_count(key) != 1)
      rep.violations.push_back({ViolationKind::FaceNotOnBoundary, f,
                                "face " + std::to_string(f) + " is not a boundary face of exactly one tet"});

  for (std::size_t i = 0; i < tet_faces.size();) {
    std::size_t j = i;
    while (j < tet_faces.size() && tet_faces[j].first == tet_faces[i].first) ++j;
    if (j - i == 1 &&
        !std::binary_search(listed.begin(), listed.end(), std::make_pair(tet_faces[i].first, std::size_t{0}),
                            [](const auto& a, const auto& b) { return a.first < b.first; }))
      rep.violations.push_back({ViolationKind::UntaggedBoundaryFace, tet_faces[i].second,
                                "boundary face of tet " + std::to_string(tet_faces[i].second) +
                                    " carries no tag"});
    i = j;
  }

  detail::check_manifold(m, BoundaryTag::Scalp, rep);
  detail::check_manifold(m, BoundaryTag::Cortex, rep);
  return rep;
}

inline void require_valid(const TetMesh& m) {
  const auto rep = validate(m);
  if (!rep.ok()) fail(ErrorKind::Validation, "invalid mesh: " + rep.summary());
}

/// Flips tets with negative volume and orients every boundary face outward.
inline void canonicalize_orientation(TetMesh& m) {
  for (auto& t : m.tets)
    if (signed_volume(m, t) < 0.0) std::swap(t[2], t[3]);

  std::vector<std::pair<Tri, std::size_t>> tet_faces;
  tet_faces.reserve(4 * m.tets.size());
  for (std::size_t t = 0; t < m.tets.size(); ++t)
    for (const auto& f : outward_faces(m.tets[t])) tet_faces.emplace_back(sorted(f), t);
  std::sort(tet_faces.begin(), tet_faces.end());

  for (auto& bf : m.faces) {
    const Tri key = sorted(bf.v);
    auto it = std::lower_bound(tet_faces.begin(), tet_faces.end(), std::make_pair(key, std::size_t{0}));
    if (it == tet_faces.end() || it->first != key) continue;  // reported by validate()
    const Tet& t = m.tets[it->second];
    const Index opposite = t[0] + t[1] + t[2] + t[3] - key[0] - key[1] - key[2];
    const Vec3& a = m.vertices[bf.v[0]];
    const Vec3 n = area_vector(a, m.vertices[bf.v[1]], m.vertices[bf.v[2]]);
    if (n.dot(m.vertices[opposite] - a) > 0.0) std::swap(bf.v[1], bf.v[2]);
  }
}

// ---------------------------------------------------------------------------
// Surface extraction
// ---------------------------------------------------------------------------

/// Triangulated boundary piece with a surface-node -> volume-node map.
struct SurfaceExtraction {
  std::vector<Tri> triangles;     // surface-node indices
  std::vector<Index> surf_to_vol;  // injective
  std::vector<Vec3> nodes;         // coordinates of surface nodes

  [[nodiscard]] Index num_nodes() const { return static_cast<Index>(surf_to_vol.size()); }

  [[nodiscard]] double area() const {
    double a = 0.0;
    for (const auto& t : triangles) a += triangle_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
    return a;
  }
};

inline SurfaceExtraction extract_surface(const TetMesh& m, BoundaryTag tag) {
  SurfaceExtraction s;
  std::vector<Index> vol_to_surf(m.vertices.size(), -1);
  for (const auto& f : m.faces) {
    if (f.tag != tag) continue;
    for (Index v : f.v) vol_to_surf[v] = 0;
  }
  for (Index v = 0; v < m.num_vertices(); ++v)
    if (vol_to_surf[v] == 0) {
      vol_to_surf[v] = static_cast<Index>(s.surf_to_vol.size());
      s.surf_to_vol.push_back(v);
      s.nodes.push_back(m.vertices[v]);
    }
  for (const auto& f : m.faces)
    if (f.tag == tag) s.triangles.push_back({vol_to_surf[f.v[0]], vol_to_surf[f.v[1]], vol_to_surf[f.v[2]]});
  if (s.triangles.empty())
    fail(ErrorKind::EmptyBoundary, "mesh has no " + std::string(to_string(tag)) + " faces");
  return s;
}

/// The cortical surface Gamma_B that hosts the control space.
inline SurfaceExtraction extract_cortex(const TetMesh& m) {
  return extract_surface(m, BoundaryTag::Cortex);
}

/// Sorted volume-node indices touching a face with the given tag.
inline std::vector<Index> tagged_nodes(const TetMesh& m, BoundaryTag tag) {
  std::vector<Index> nodes;
  for (const auto& f : m.faces)
    if (f.tag == tag) nodes.insert(nodes.end(), f.v.begin(), f.v.end());
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

/// V - E + F of a closed triangulated surface.
inline long euler_characteristic(const SurfaceExtraction& s) {
  std::vector<detail::EdgeKey> edges;
  for (const auto& t : s.triangles)
    for (int i = 0; i < 3; ++i) edges.push_back(detail::edge_key(t[i], t[(i + 1) % 3]));
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return static_cast<long>(s.num_nodes()) - static_cast<long>(edges.size()) +
         static_cast<long>(s.triangles.size());
}

// ---------------------------------------------------------------------------
// Spherical-shell mesher
// ---------------------------------------------------------------------------

struct ShellMeshOptions {
  /// Sphere subdivision at level 0. Three passes keep the level-0 shell
  /// volume within a few percent of the exact value.
  int base_subdivision = 3;
  int base_layers = 1;
  std::size_t max_tets = 4'000'000;
  int region = 1;
};

/// Unit sphere from recursive midpoint subdivision of an octahedron.
/// Triangles are oriented with outward normals; vertices of coarser levels
/// keep their indices and positions.
inline std::pair<std::vector<Vec3>, std::vector<Tri>> subdivided_octahedron(int passes) {
  std::vector<Vec3> v = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0),
                         Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)};
  std::vector<Tri> f = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                        {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  for (int p = 0; p < passes; ++p) {
    std::map<detail::EdgeKey, Index> mid;
    auto midpoint = [&](Index a, Index b) {
      auto [it, inserted] = mid.try_emplace(detail::edge_key(a, b), 0);
      if (inserted) {
        v.push_back((v[a] + v[b]).normalized());
        it->second = static_cast<Index>(v.size() - 1);
      }
      return it->second;
    };
    std::vector<Tri> next;
    next.reserve(4 * f.size());
    for (const auto& t : f) {
      const Index ab = midpoint(t[0], t[1]);
      const Index bc = midpoint(t[1], t[2]);
      const Index ca = midpoint(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({ab, t[1], bc});
      next.push_back({ca, bc, t[2]});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  return {std::move(v), std::move(f)};
}

inline std::size_t shell_tet_count(int level, const ShellMeshOptions& opt = {}) {
  const std::size_t tris = std::size_t{8} << (2 * (opt.base_subdivision + level));
  const std::size_t layers = static_cast<std::size_t>(opt.base_layers) << level;
  return 3 * tris * layers;
}

/// Conforming tet mesh of {r_inner <= |x| <= r_outer}. Each refinement level
/// adds one sphere subdivision pass and doubles the radial layers, halving h.
/// Inner faces are tagged CORTEX, outer faces SCALP.
inline TetMesh build_shell_mesh(double r_inner, double r_outer, int level,
                                const ShellMeshOptions& opt = {}) {
  require(std::isfinite(r_inner) && std::isfinite(r_outer) && r_inner > 0.0 && r_inner < r_outer,
          ErrorKind::Parameter, "shell radii must satisfy 0 < r_inner < r_outer");
  require(level >= 0 && level <= 12, ErrorKind::Parameter, "refinement level must be in [0, 12]");
  const std::size_t expected = shell_tet_count(level, opt);
  if (expected > opt.max_tets)
    fail(ErrorKind::Resource, "shell level " + std::to_string(level) + " needs " +
                                  std::to_string(expected) + " tets, budget is " +
                                  std::to_string(opt.max_tets));

  const auto [sphere_v, sphere_f] = subdivided_octahedron(opt.base_subdivision + level);
  const Index nv = static_cast<Index>(sphere_v.size());
  const int layers = opt.base_layers << level;

  TetMesh m;
  m.vertices.reserve(static_cast<std::size_t>(nv) * (layers + 1));
  for (int k = 0; k <= layers; ++k) {
    const double r = (k == layers) ? r_outer : r_inner + (r_outer - r_inner) * k / layers;
    for (const auto& p : sphere_v) m.vertices.push_back(r * p);
  }

  m.tets.reserve(expected);
  for (int k = 0; k < layers; ++k) {
    for (const auto& t : sphere_f) {
      // Sorting by global index makes the diagonal of every shared quad face
      // depend only on its two vertices, so neighbouring prisms agree.
      Tri s = sorted(t);
      const Index b0 = k * nv + s[0], b1 = k * nv + s[1], b2 = k * nv + s[2];
      const Index t0 = b0 + nv, t1 = b1 + nv, t2 = b2 + nv;
      for (Tet tet : {Tet{b0, b1, b2, t0}, Tet{b1, b2, t0, t1}, Tet{b2, t0, t1, t2}}) {
        if (signed_volume(m, tet) < 0.0) std::swap(tet[2], tet[3]);
        m.tets.push_back(tet);
      }
    }
  }
  m.regions.assign(m.tets.size(), opt.region);

  m.faces.reserve(2 * sphere_f.size());
  for (const auto& t : sphere_f)  // inner sphere: outward from the shell points to the origin
    m.faces.push_back({{t[0], t[2], t[1]}, BoundaryTag::Cortex});
  const Index top = layers * nv;
  for (const auto& t : sphere_f)
    m.faces.push_back({{top + t[0], top + t[1], top + t[2]}, BoundaryTag::Scalp});
  return m;
}

}  // namespace eegoc
