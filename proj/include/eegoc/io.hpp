#pragma once

// File emitters and readers for run outputs.
//
//   VTK     legacy ASCII UNSTRUCTURED_GRID with POINT_DATA scalars
//   CSV     epsilon,residual_norm,rmse (17 significant digits, "nan" when
//           no noise std was available)
//   data    one line per electrode: `index value std`
//   field   `eegoc-field 1`, `values <n>`, one value per line, `end`

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eegoc/error.hpp"
#include "eegoc/mesh.hpp"
#include "eegoc/mesh_io.hpp"
#include "eegoc/pipeline.hpp"
#include "eegoc/sparse.hpp"

namespace eegoc {

using PointField = std::pair<std::string, Vector>;

namespace detail {

inline void write_vtk_points(std::ostream& out, const std::vector<Vec3>& pts) {
  out << "POINTS " << pts.size() << " double\n";
  for (const auto& p : pts) out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
}

inline void write_vtk_point_data(std::ostream& out, std::size_t n, const std::vector<PointField>& fields) {
  if (fields.empty()) return;
  out << "POINT_DATA " << n << '\n';
  for (const auto& [name, v] : fields) {
    require(static_cast<std::size_t>(v.size()) == n, ErrorKind::Dimension, "point field '" + name + "' has the wrong length");
    require(!name.empty() && name.find_first_of(" \t\n") == std::string::npos, ErrorKind::Parameter,
            "VTK field names must be non-empty without whitespace");
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
  }
}

}  // namespace detail

inline void write_vtk_volume(std::ostream& out, const TetMesh& m, const std::vector<PointField>& fields,
                             const std::string& title = "eegoc volume") {
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  detail::write_vtk_points(out, m.vertices);
  out << "CELLS " << m.tets.size() << ' ' << 5 * m.tets.size() << '\n';
  for (const auto& t : m.tets) out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "CELL_TYPES " << m.tets.size() << '\n';
  for (std::size_t i = 0; i < m.tets.size(); ++i) out << "10\n";
  detail::write_vtk_point_data(out, m.vertices.size(), fields);
}

inline void write_vtk_surface(std::ostream& out, const SurfaceExtraction& s, const std::vector<PointField>& fields,
                              const std::string& title = "eegoc surface") {
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  detail::write_vtk_points(out, s.nodes);
  out << "CELLS " << s.triangles.size() << ' ' << 4 * s.triangles.size() << '\n';
  for (const auto& t : s.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "CELL_TYPES " << s.triangles.size() << '\n';
  for (std::size_t i = 0; i < s.triangles.size(); ++i) out << "5\n";
  detail::write_vtk_point_data(out, s.nodes.size(), fields);
}

inline void write_vtk_volume(const std::string& path, const TetMesh& m, const std::vector<PointField>& fields) {
  auto out = detail::open_output(path);
  write_vtk_volume(out, m, fields);
}

inline void write_vtk_surface(const std::string& path, const SurfaceExtraction& s,
                              const std::vector<PointField>& fields) {
  auto out = detail::open_output(path);
  write_vtk_surface(out, s, fields);
}

// ---------------------------------------------------------------------------

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : "nan"; }

inline void write_curve_csv(std::ostream& out, const std::vector<SweepPoint>& pts) {
  out << "epsilon,residual_norm,rmse\n";
  for (const auto& p : pts) out << format_double(p.epsilon) << ',' << format_double(p.residual_norm) << ',' << format_optional(p.rmse) << '\n';
}

inline void write_curve_csv(const std::string& path, const std::vector<SweepPoint>& pts) {
  auto out = detail::open_output(path);
  write_curve_csv(out, pts);
}

inline std::vector<SweepPoint> read_curve_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("epsilon,residual_norm,rmse", 0) != 0)
    throw ParseError(1, "missing CSV header 'epsilon,residual_norm,rmse'");
  std::vector<SweepPoint> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string a, b, c;
    if (!std::getline(is, a, ',') || !std::getline(is, b, ',') || !std::getline(is, c))
      throw ParseError(line_no, "expected three comma-separated values");
    try {
      SweepPoint p{std::stod(a), std::stod(b), std::nullopt};
      if (c != "nan") p.rmse = std::stod(c);
      out.push_back(p);
    } catch (const std::exception&) {
      throw ParseError(line_no, "malformed number in '" + line + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct DataFile {
  DataVector d;
  Vector s;
};

inline void write_data_file(std::ostream& out, const DataVector& d, const Vector& s) {
  require(d.size() == s.size(), ErrorKind::Dimension, "data and std differ in length");
  for (Eigen::Index i = 0; i < d.size(); ++i) out << i << ' ' << format_double(d[i]) << ' ' << format_double(s[i]) << '\n';
}

inline void write_data_file(const std::string& path, const DataVector& d, const Vector& s) {
  auto out = detail::open_output(path);
  write_data_file(out, d, s);
}

inline DataFile read_data_file(std::istream& in) {
  std::vector<double> d, s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (line.back() == '\r') line.pop_back();
    long long idx = -1;
    double v = 0.0, sd = 0.0;
    detail::parse_fields(line, line_no, "data line", idx, v, sd);
    if (idx != static_cast<long long>(d.size()))
      throw ParseError(line_no, "expected index " + std::to_string(d.size()) + ", found " + std::to_string(idx));
    if (!std::isfinite(v) || !std::isfinite(sd) || sd < 0.0) throw ParseError(line_no, "value must be finite and std >= 0");
    d.push_back(v);
    s.push_back(sd);
  }
  if (d.empty()) throw ParseError(line_no, "data file has no entries");
  DataFile f;
  f.d = Eigen::Map<Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
  f.s = Eigen::Map<Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  return f;
}

inline DataFile read_data_file(const std::string& path) {
  auto in = detail::open_input(path);
  return read_data_file(in);
}

// ---------------------------------------------------------------------------

inline void write_field_dump(std::ostream& out, const Vector& v) {
  out << "eegoc-field 1\nvalues " << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
  out << "end\n";
}

inline void write_field_dump(const std::string& path, const Vector& v) {
  auto out = detail::open_output(path);
  write_field_dump(out, v);
}

inline Vector read_field_dump(std::istream& in) {
  detail::LineReader r(in);
  if (r.expect("header") != "eegoc-field 1") throw ParseError(r.line(), "expected 'eegoc-field 1'");
  const std::size_t n = detail::parse_count(r.expect_numbered("values"), "values");
  Vector v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) detail::parse_fields(r.expect_numbered("value"), "value", v[static_cast<Eigen::Index>(i)]);
  if (r.expect("end") != "end") throw ParseError(r.line(), "expected 'end'");
  return v;
}

inline Vector read_field_dump(const std::string& path) {
  auto in = detail::open_input(path);
  return read_field_dump(in);
}

}  // namespace eegoc
