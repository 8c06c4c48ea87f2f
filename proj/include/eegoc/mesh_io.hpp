#pragma once

// Mesh file formats.
//
// Canonical dump (bit-exact round trip, coordinates printed with %.17g):
//
//   eegoc-mesh 1
//   vertices <N>
//   <x> <y> <z>            N lines
//   tets <T>
//   <a> <b> <c> <d> <region>   T lines, 0-based vertex indices
//   faces <F>
//   <a> <b> <c> <tag>      F lines, tag in {scalp, cortex, other}
//   end
//
// Gmsh MSH 2.2 ASCII subset: $MeshFormat, $Nodes, $Elements with element
// types 2 (triangle) and 4 (tetrahedron). Every element needs a physical tag.
// Tets take their region id from the physical volume tag; triangles are
// mapped to boundary tags through a caller-supplied table.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <unordered_map>

#include "eegoc/error.hpp"
#include "eegoc/mesh.hpp"

namespace eegoc {

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  /// Next non-empty line; false at EOF.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  }

  std::string expect(const char* what) {
    std::string line;
    if (!next(line)) throw ParseError(line_no_ + 1, std::string("unexpected end of file, expected ") + what);
    return line;
  }

  /// Line text and its number, fixed before the caller parses it.
  std::pair<std::string, std::size_t> expect_numbered(const char* what) {
    std::string line = expect(what);
    return {std::move(line), line_no_};
  }

  [[nodiscard]] std::size_t line() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  return out;
}

template <class... Ts>
void parse_fields(const std::string& line, std::size_t line_no, const char* what, Ts&... out) {
  std::istringstream is(line);
  ((is >> out), ...);
  std::string extra;
  if (!is || (is >> extra)) throw ParseError(line_no, std::string("malformed ") + what + ": '" + line + "'");
}

inline std::size_t parse_count(const std::string& line, std::size_t line_no, const char* keyword) {
  std::istringstream is(line);
  std::string kw;
  long long n = -1;
  is >> kw >> n;
  if (kw != keyword || n < 0) throw ParseError(line_no, std::string("expected '") + keyword + " <count>'");
  return static_cast<std::size_t>(n);
}

using NumberedLine = std::pair<std::string, std::size_t>;

template <class... Ts>
void parse_fields(const NumberedLine& l, const char* what, Ts&... out) {
  parse_fields(l.first, l.second, what, out...);
}

inline std::size_t parse_count(const NumberedLine& l, const char* keyword) {
  return parse_count(l.first, l.second, keyword);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Canonical dump
// ---------------------------------------------------------------------------

inline void write_mesh_dump(std::ostream& out, const TetMesh& m) {
  out << "eegoc-mesh 1\n";
  out << "vertices " << m.vertices.size() << '\n';
  for (const auto& p : m.vertices)
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
  out << "tets " << m.tets.size() << '\n';
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    const auto& v = m.tets[t];
    out << v[0] << ' ' << v[1] << ' ' << v[2] << ' ' << v[3] << ' ' << m.regions[t] << '\n';
  }
  out << "faces " << m.faces.size() << '\n';
  for (const auto& f : m.faces)
    out << f.v[0] << ' ' << f.v[1] << ' ' << f.v[2] << ' ' << to_string(f.tag) << '\n';
  out << "end\n";
}

inline void write_mesh_dump(const std::string& path, const TetMesh& m) {
  auto out = detail::open_output(path);
  write_mesh_dump(out, m);
}

inline TetMesh read_mesh_dump(std::istream& in) {
  detail::LineReader r(in);
  TetMesh m;
  {
    const std::string header = r.expect("header");
    if (header != "eegoc-mesh 1") throw ParseError(r.line(), "not an eegoc mesh dump");
  }
  const std::size_t nv = detail::parse_count(r.expect_numbered("vertices"), "vertices");
  m.vertices.resize(nv);
  for (auto& p : m.vertices) {
    const std::string line = r.expect("vertex");
    detail::parse_fields(line, r.line(), "vertex", p.x(), p.y(), p.z());
  }
  const std::size_t nt = detail::parse_count(r.expect_numbered("tets"), "tets");
  m.tets.resize(nt);
  m.regions.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const std::string line = r.expect("tet");
    auto& v = m.tets[t];
    detail::parse_fields(line, r.line(), "tet", v[0], v[1], v[2], v[3], m.regions[t]);
  }
  const std::size_t nf = detail::parse_count(r.expect_numbered("faces"), "faces");
  m.faces.resize(nf);
  for (auto& f : m.faces) {
    const std::string line = r.expect("face");
    std::string tag;
    detail::parse_fields(line, r.line(), "face", f.v[0], f.v[1], f.v[2], tag);
    try {
      f.tag = parse_boundary_tag(tag);
    } catch (const Error&) {
      throw ParseError(r.line(), "unknown boundary tag '" + tag + "'");
    }
  }
  if (r.expect("end") != "end") throw ParseError(r.line(), "expected 'end'");
  return m;
}

inline TetMesh read_mesh_dump(const std::string& path) {
  auto in = detail::open_input(path);
  return read_mesh_dump(in);
}

// ---------------------------------------------------------------------------
// Gmsh MSH 2.2
// ---------------------------------------------------------------------------

/// Physical surface tag -> boundary tag. There is deliberately no default
/// guessing: unlisted physical surfaces are an error.
struct MshTagTable {
  std::map<int, BoundaryTag> surface;

  /// The convention written by write_msh for generated shells.
  static MshTagTable shell_default() { return {{{1, BoundaryTag::Scalp}, {2, BoundaryTag::Cortex}}}; }

  [[nodiscard]] int physical_for(BoundaryTag t) const {
    for (const auto& [phys, tag] : surface)
      if (tag == t) return phys;
    fail(ErrorKind::Usage, "tag table has no physical surface for '" + std::string(to_string(t)) + "'");
  }
};

inline void write_msh(std::ostream& out, const TetMesh& m,
                      const MshTagTable& table = MshTagTable::shell_default()) {
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
  out << "$Nodes\n" << m.vertices.size() << '\n';
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    const auto& p = m.vertices[i];
    out << i + 1 << ' ' << format_double(p.x()) << ' ' << format_double(p.y()) << ' '
        << format_double(p.z()) << '\n';
  }
  out << "$EndNodes\n$Elements\n" << m.faces.size() + m.tets.size() << '\n';
  std::size_t id = 1;
  for (const auto& f : m.faces) {
    const int phys = table.physical_for(f.tag);
    out << id++ << " 2 2 " << phys << ' ' << phys << ' ' << f.v[0] + 1 << ' ' << f.v[1] + 1 << ' '
        << f.v[2] + 1 << '\n';
  }
  for (std::size_t t = 0; t < m.tets.size(); ++t) {
    const auto& v = m.tets[t];
    out << id++ << " 4 2 " << m.regions[t] << ' ' << m.regions[t] << ' ' << v[0] + 1 << ' '
        << v[1] + 1 << ' ' << v[2] + 1 << ' ' << v[3] + 1 << '\n';
  }
  out << "$EndElements\n";
}

inline void write_msh(const std::string& path, const TetMesh& m,
                      const MshTagTable& table = MshTagTable::shell_default()) {
  auto out = detail::open_output(path);
  write_msh(out, m, table);
}

inline TetMesh load_msh(std::istream& in, const MshTagTable& table) {
  detail::LineReader r(in);
  TetMesh m;
  std::unordered_map<long long, Index> node_index;
  bool have_format = false, have_nodes = false, have_elements = false;
  std::string line;

  auto node_ref = [&](long long id) {
    auto it = node_index.find(id);
    if (it == node_index.end()) throw ParseError(r.line(), "element references unknown node " + std::to_string(id));
    return it->second;
  };

  while (r.next(line)) {
    if (line == "$MeshFormat") {
      std::istringstream is(r.expect("format line"));
      std::string version;
      int file_type = -1, data_size = 0;
      is >> version >> file_type >> data_size;
      if (!is) throw ParseError(r.line(), "malformed $MeshFormat line");
      if (version != "2.2") fail(ErrorKind::Unsupported, "MSH version " + version + " (only 2.2 is supported)");
      if (file_type != 0) fail(ErrorKind::Unsupported, "binary MSH files are not supported");
      if (r.expect("$EndMeshFormat") != "$EndMeshFormat") throw ParseError(r.line(), "expected $EndMeshFormat");
      have_format = true;
    } else if (line == "$Nodes") {
      if (!have_format) throw ParseError(r.line(), "$Nodes before $MeshFormat");
      std::size_t n = 0;
      detail::parse_fields(r.expect_numbered("node count"), "node count", n);
      m.vertices.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        long long id = 0;
        Vec3 p;
        detail::parse_fields(r.expect_numbered("node"), "node", id, p.x(), p.y(), p.z());
        if (!node_index.emplace(id, static_cast<Index>(m.vertices.size())).second)
          throw ParseError(r.line(), "duplicate node id " + std::to_string(id));
        m.vertices.push_back(p);
      }
      if (r.expect("$EndNodes") != "$EndNodes") throw ParseError(r.line(), "expected $EndNodes");
      have_nodes = true;
    } else if (line == "$Elements") {
      if (!have_nodes) throw ParseError(r.line(), "$Elements before $Nodes");
      std::size_t n = 0;
      detail::parse_fields(r.expect_numbered("element count"), "element count", n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::string el = r.expect("element");
        std::istringstream is(el);
        long long id = 0;
        int type = 0, ntags = 0;
        is >> id >> type >> ntags;
        if (!is || ntags < 0) throw ParseError(r.line(), "malformed element line");
        if (type != 2 && type != 4)
          fail(ErrorKind::Unsupported, "line " + std::to_string(r.line()) + ": element type " +
                                           std::to_string(type) + " (only triangles and tetrahedra)");
        std::vector<int> tags(static_cast<std::size_t>(ntags));
        for (auto& t : tags) is >> t;
        if (ntags < 1 || tags[0] == 0) throw ParseError(r.line(), "element " + std::to_string(id) + " has no physical tag");
        const int nn = type == 2 ? 3 : 4;
        std::array<long long, 4> ids{};
        for (int k = 0; k < nn; ++k) is >> ids[k];
        std::string extra;
        if (!is || (is >> extra)) throw ParseError(r.line(), "malformed element line");
        if (type == 2) {
          auto it = table.surface.find(tags[0]);
          if (it == table.surface.end())
            fail(ErrorKind::Validation, "line " + std::to_string(r.line()) + ": physical surface " +
                                            std::to_string(tags[0]) + " is not in the tag table");
          m.faces.push_back({{node_ref(ids[0]), node_ref(ids[1]), node_ref(ids[2])}, it->second});
        } else {
          m.tets.push_back({node_ref(ids[0]), node_ref(ids[1]), node_ref(ids[2]), node_ref(ids[3])});
          m.regions.push_back(tags[0]);
        }
      }
      if (r.expect("$EndElements") != "$EndElements") throw ParseError(r.line(), "expected $EndElements");
      have_elements = true;
    } else if (line.size() > 1 && line[0] == '$') {
      // $PhysicalNames, $Comments, ...: skipped
      const std::string end = "$End" + line.substr(1);
      std::string skip;
      do {
        skip = r.expect(end.c_str());
      } while (skip != end);
    } else {
      throw ParseError(r.line(), "unexpected content '" + line + "'");
    }
  }
  if (!have_elements) throw ParseError(r.line(), "no $Elements section");

  canonicalize_orientation(m);
  require_valid(m);
  return m;
}

inline TetMesh load_msh(const std::string& path, const MshTagTable& table) {
  auto in = detail::open_input(path);
  return load_msh(in, table);
}

}  // namespace eegoc
