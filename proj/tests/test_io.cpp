#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "eegoc/config.hpp"
#include "eegoc/io.hpp"

using namespace eegoc;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "/cfg");
}

ErrorKind parse_kind(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "config accepted: " << text;
  return ErrorKind::Usage;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Vtk, VolumeStructure) {
  const TetMesh m = build_shell_mesh(0.7, 1.0, 0);
  std::ostringstream out;
  write_vtk_volume(out, m, {{"u", Vector::LinSpaced(m.num_vertices(), 0.0, 1.0)}});
  const auto l = lines_of(out.str());
  EXPECT_EQ(l[0], "# vtk DataFile Version 3.0");
  EXPECT_EQ(l[2], "ASCII");
  EXPECT_EQ(l[3], "DATASET UNSTRUCTURED_GRID");
  EXPECT_EQ(l[4], "POINTS " + std::to_string(m.vertices.size()) + " double");
  const std::size_t cells = 5 + m.vertices.size();
  EXPECT_EQ(l[cells], "CELLS " + std::to_string(m.tets.size()) + " " + std::to_string(5 * m.tets.size()));
  const std::size_t types = cells + 1 + m.tets.size();
  EXPECT_EQ(l[types], "CELL_TYPES " + std::to_string(m.tets.size()));
  EXPECT_EQ(l[types + 1], "10");
  const std::size_t pd = types + 1 + m.tets.size();
  EXPECT_EQ(l[pd], "POINT_DATA " + std::to_string(m.vertices.size()));
  EXPECT_EQ(l[pd + 1], "SCALARS u double 1");
  EXPECT_EQ(l.size(), pd + 3 + m.vertices.size());
}

TEST(Vtk, SurfaceAndFieldChecks) {
  const SurfaceExtraction s = extract_cortex(build_shell_mesh(0.7, 1.0, 0));
  std::ostringstream out;
  write_vtk_surface(out, s, {});
  EXPECT_NE(out.str().find("CELL_TYPES " + std::to_string(s.triangles.size()) + "\n5\n"), std::string::npos);
  EXPECT_EQ(out.str().find("POINT_DATA"), std::string::npos);
  std::ostringstream bad;
  EXPECT_THROW(write_vtk_surface(bad, s, {{"f", Vector::Zero(3)}}), Error);
  EXPECT_THROW(write_vtk_surface(bad, s, {{"two words", Vector::Zero(s.num_nodes())}}), Error);
}

TEST(Csv, RoundTripWithMissingRmse) {
  const std::vector<SweepPoint> pts{{1e-7, 0.125, 3.5}, {1e-8, 1.0 / 3.0, std::nullopt}};
  std::stringstream io;
  write_curve_csv(io, pts);
  const auto l = lines_of(io.str());
  EXPECT_EQ(l[0], "epsilon,residual_norm,rmse");
  EXPECT_EQ(l[2].substr(l[2].rfind(',') + 1), "nan");
  const auto back = read_curve_csv(io);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].residual_norm, 1.0 / 3.0);
  EXPECT_EQ(back[0].rmse, std::optional<double>(3.5));
  EXPECT_FALSE(back[1].rmse.has_value());
  std::istringstream headless("1,2,3\n");
  EXPECT_THROW(read_curve_csv(headless), ParseError);
}

TEST(DataFile, RoundTripAndErrors) {
  Vector d(3), s(3);
  d << 0.1, -2.0 / 3.0, 5.0;
  s << 0.0, 0.01, 0.05;
  std::stringstream io;
  write_data_file(io, d, s);
  const DataFile f = read_data_file(io);
  EXPECT_EQ(f.d, d);
  EXPECT_EQ(f.s, s);

  std::istringstream gap("# comment\n0 1.0 0.1\n2 1.0 0.1\n");
  try {
    read_data_file(gap);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream negative("0 1.0 -0.1\n");
  EXPECT_THROW(read_data_file(negative), ParseError);
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(read_data_file(empty), ParseError);
}

TEST(FieldDump, BitExactRoundTrip) {
  const Vector v = Vector::LinSpaced(7, -1.0, 1.0).array().exp();
  std::stringstream io;
  write_field_dump(io, v);
  EXPECT_EQ(read_field_dump(io), v);
  std::istringstream truncated("eegoc-field 1\nvalues 3\n1\n2\n");
  EXPECT_THROW(read_field_dump(truncated), ParseError);
  std::istringstream bad("eegoc-field 1\nvalues 1\nx\nend\n");
  try {
    read_field_dump(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Config, DefaultsFromEmptyFile) {
  const RunConfig c = parse("");
  EXPECT_EQ(c.mesh.source, "shell");
  EXPECT_EQ(c.mesh.r_inner, 0.7);
  EXPECT_EQ(c.mesh.r_outer, 1.0);
  EXPECT_EQ(c.electrodes.count, 198);
  EXPECT_EQ(c.field.l_max, 25);
  EXPECT_EQ(c.qrm.epsilon, 1e-8);
  EXPECT_EQ(c.qrm.delta, 1e-8);
  EXPECT_FALSE(c.solver.gamma.has_value());
  EXPECT_EQ(c.threads, 1);
}

TEST(Config, ParsesSectionsAndResolvesPaths) {
  const RunConfig c = parse(R"(
[mesh]
source = msh
path = head.msh
scalp_tags = 1, 3
cortex_tags = 2
[conductivity]
default = 0.33
region.4 = 0.0042
[inverse]
epsilons = 1e-9, 1e-7
[solver]
method = iterative
gamma = 0
[run]
seed = 7
threads = 3
)");
  EXPECT_EQ(c.mesh.path, "/cfg/head.msh");
  EXPECT_EQ(c.mesh.tags.surface.at(3), BoundaryTag::Scalp);
  EXPECT_EQ(c.mesh.tags.surface.at(2), BoundaryTag::Cortex);
  EXPECT_EQ(c.conductivity.regions.at(4), 0.0042);
  EXPECT_EQ(c.epsilons, (std::vector<double>{1e-9, 1e-7}));
  EXPECT_EQ(c.solver.solve.method, SolverMethod::Iterative);
  EXPECT_EQ(c.solver.gamma, std::optional<double>(0.0));
  EXPECT_EQ(c.data.seed, 7u);
  EXPECT_EQ(c.threads, 3);
  EXPECT_EQ(c.raw.at("conductivity").at("region.4"), "0.0042");
}

TEST(Config, UnknownSectionOrKeyIsParseError) {
  EXPECT_EQ(parse_kind("[meshes]\nlevel = 1\n"), ErrorKind::Parse);
  EXPECT_EQ(parse_kind("[mesh]\nlevl = 1\n"), ErrorKind::Parse);
  EXPECT_EQ(parse_kind("level = 1\n"), ErrorKind::Parse);
}

TEST(Config, SemanticErrorsAreParameterErrors) {
  EXPECT_EQ(parse_kind("[mesh]\nr_inner = 1.2\n"), ErrorKind::Parameter);
  EXPECT_EQ(parse_kind("[qrm]\ndelta = 0\n"), ErrorKind::Parameter);
  EXPECT_EQ(parse_kind("[inverse]\nepsilons = 1e-7, 1e-7\n"), ErrorKind::Parameter);
  EXPECT_EQ(parse_kind("[inverse]\nepsilons = -1e-7\n"), ErrorKind::Parameter);
  EXPECT_EQ(parse_kind("[data]\nnoise = -0.01\n"), ErrorKind::Parameter);
  EXPECT_EQ(parse_kind("[data]\nsource = file\n"), ErrorKind::Parameter);
  EXPECT_EQ(parse_kind("[solver]\nmethod = cholesky\n"), ErrorKind::Parameter);
}

TEST(Config, MissingFileIsIoError) {
  try {
    load_config("/nonexistent/run.ini");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}
