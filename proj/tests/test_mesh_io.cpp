#include <gtest/gtest.h>

#include <sstream>

#include "eegoc/mesh_io.hpp"

using namespace eegoc;

namespace {

const char* kSingleTet = R"($MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
1
2 1 "scalp"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
5
1 2 2 1 1 1 3 2
2 2 2 1 1 1 2 4
3 2 2 1 1 1 4 3
4 2 2 1 1 2 3 4
5 4 2 7 7 1 2 3 4
$EndElements
)";

MshTagTable scalp_only() { return {{{1, BoundaryTag::Scalp}}}; }

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Usage;
}

}  // namespace

TEST(Msh, SingleTet) {
  std::istringstream in(kSingleTet);
  const TetMesh m = load_msh(in, scalp_only());
  EXPECT_EQ(m.tets.size(), 1u);
  EXPECT_EQ(m.faces.size(), 4u);
  EXPECT_EQ(m.regions.front(), 7);
  EXPECT_GT(signed_volume(m, m.tets.front()), 0.0);
}

TEST(Msh, InvertedInputIsCanonicalized) {
  std::string text = kSingleTet;
  text.replace(text.find("5 4 2 7 7 1 2 3 4"), 17, "5 4 2 7 7 2 1 3 4");
  std::istringstream in(text);
  const TetMesh m = load_msh(in, scalp_only());
  EXPECT_GT(signed_volume(m, m.tets.front()), 0.0);
}

TEST(Msh, PyramidIsUnsupported) {
  std::string text = kSingleTet;
  text.replace(text.find("5 4 2 7 7 1 2 3 4"), 17, "5 7 2 7 7 1 2 3 4 4");
  std::istringstream in(text);
  EXPECT_EQ(kind_of([&] { load_msh(in, scalp_only()); }), ErrorKind::Unsupported);
}

TEST(Msh, MalformedLineCarriesLineNumber) {
  std::string text = kSingleTet;
  text.replace(text.find("3 0 1 0"), 7, "3 0 x 0");
  std::istringstream in(text);
  try {
    load_msh(in, scalp_only());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 12u);
  }
}

TEST(Msh, UnknownPhysicalSurfaceIsValidationError) {
  std::istringstream in(kSingleTet);
  const MshTagTable table{{{5, BoundaryTag::Scalp}}};
  EXPECT_EQ(kind_of([&] { load_msh(in, table); }), ErrorKind::Validation);
}

TEST(Msh, MissingBoundaryFaceIsValidationError) {
  std::string text = kSingleTet;
  text.replace(text.find("4 2 2 1 1 2 3 4\n"), 16, "");
  text.replace(text.find("$Elements\n5"), 11, "$Elements\n4");
  std::istringstream in(text);
  EXPECT_EQ(kind_of([&] { load_msh(in, scalp_only()); }), ErrorKind::Validation);
}

TEST(Msh, RoundTripShell) {
  const TetMesh m = build_shell_mesh(0.7, 1.0, 1);
  std::stringstream io;
  write_msh(io, m);
  const TetMesh r = load_msh(io, MshTagTable::shell_default());
  ASSERT_EQ(r.vertices.size(), m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_LE((r.vertices[i] - m.vertices[i]).norm(), 1e-12);
  EXPECT_EQ(r.tets, m.tets);
  EXPECT_EQ(r.regions, m.regions);
  ASSERT_EQ(r.faces.size(), m.faces.size());
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    EXPECT_EQ(r.faces[i].v, m.faces[i].v);
    EXPECT_EQ(r.faces[i].tag, m.faces[i].tag);
  }
}

TEST(Dump, BitExactRoundTrip) {
  const TetMesh m = build_shell_mesh(0.7, 1.0, 1);
  std::stringstream a;
  write_mesh_dump(a, m);
  const std::string first = a.str();
  const TetMesh r = read_mesh_dump(a);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(r.vertices[i], m.vertices[i]);
  std::stringstream b;
  write_mesh_dump(b, r);
  EXPECT_EQ(b.str(), first);
}

TEST(Dump, RejectsBadHeaderAndTag) {
  std::istringstream bad("eegoc-mesh 2\n");
  EXPECT_THROW(read_mesh_dump(bad), ParseError);
  std::stringstream io;
  write_mesh_dump(io, build_shell_mesh(0.7, 1.0, 0));
  std::string text = io.str();
  text.replace(text.find(" scalp\n"), 7, " skull\n");
  std::istringstream in(text);
  EXPECT_THROW(read_mesh_dump(in), ParseError);
}

TEST(FormatDouble, RoundTripsSeventeenDigits) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(format_double(x)), x);
}
