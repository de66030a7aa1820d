#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "tdbem/mesh.hpp"

using namespace tdbem;

TEST(SquareScreen, Counts) {
  for (int n : {1, 2, 3, 5}) {
    const auto mesh = make_square_screen(n);
    EXPECT_EQ(mesh.n_triangles(), 2 * n * n);
    EXPECT_EQ(mesh.n_vertices(), (n + 1) * (n + 1));
    EXPECT_FALSE(mesh.is_closed());
    EXPECT_NEAR(mesh_stats(mesh).quasi_uniformity, 1.0, 1e-12);
  }
  EXPECT_THROW(make_square_screen(0), ValidationError);
}

TEST(SquareScreen, Stats) {
  const auto s = mesh_stats(make_square_screen(2));
  EXPECT_NEAR(s.h, std::sqrt(2.0) / 2.0, 1e-15);
  EXPECT_NEAR(s.diam, std::sqrt(2.0), 1e-15);
}

TEST(Icosahedron, Geometry) {
  const auto mesh = make_icosahedron(1.0);
  EXPECT_EQ(mesh.n_triangles(), 20);
  EXPECT_EQ(mesh.n_vertices(), 12);
  EXPECT_EQ(mesh.n_edges(), 30);
  EXPECT_TRUE(mesh.is_closed());
  for (const auto& v : mesh.vertices()) EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  const double a0 = mesh.area(0);
  for (int t = 0; t < 20; ++t) EXPECT_NEAR(mesh.area(t) / a0, 1.0, 1e-12);
  for (int t = 0; t < 20; ++t) {
    auto c = mesh.corners(t);
    EXPECT_GT((c[1] - c[0]).cross(c[2] - c[0]).dot(c[0] + c[1] + c[2]), 0.0);
  }
  const auto big = make_icosahedron(2.0);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      EXPECT_NEAR((big.vertices()[i] - big.vertices()[j]).norm(),
                  2.0 * (mesh.vertices()[i] - mesh.vertices()[j]).norm(), 1e-12);
  EXPECT_THROW(make_icosahedron(0.0), ValidationError);
  EXPECT_THROW(make_icosahedron(-1.0), ValidationError);
}

TEST(Refinement, CountsAreaAndMeshSize) {
  const auto square = make_square_screen(2);
  const auto fine = refine_uniform(square);
  EXPECT_EQ(fine.n_triangles(), 32);
  EXPECT_NEAR(mesh_stats(fine).h, 0.5 * mesh_stats(square).h, 1e-12);
  EXPECT_NEAR(fine.total_area(), square.total_area(), 1e-12);

  auto ico = make_icosahedron(1.0);
  const double area = ico.total_area();
  const double h = mesh_stats(ico).h;
  for (int i = 0; i < 3; ++i) ico = refine_uniform(ico);
  EXPECT_EQ(ico.n_triangles(), 1280);
  EXPECT_TRUE(ico.is_closed());
  EXPECT_NEAR(ico.total_area() / area, 1.0, 1e-12);
  EXPECT_NEAR(mesh_stats(ico).h, h / 8.0, 1e-12);
}

TEST(Off, RoundTrip) {
  const auto mesh = refine_uniform(make_icosahedron(1.3));
  const std::string path = ::testing::TempDir() + "/ico.off";
  save_off(mesh, path);
  const auto back = load_off(path);
  ASSERT_EQ(back.n_vertices(), mesh.n_vertices());
  ASSERT_EQ(back.n_triangles(), mesh.n_triangles());
  EXPECT_TRUE(back.is_closed());
  for (int i = 0; i < mesh.n_vertices(); ++i) EXPECT_EQ(back.vertices()[i], mesh.vertices()[i]);
  EXPECT_EQ(back.triangles(), mesh.triangles());
  EXPECT_EQ(back.hash(), mesh.hash());

  const auto screen = make_square_screen(2);
  save_off(screen, path);
  EXPECT_FALSE(load_off(path).is_closed());
  EXPECT_EQ(load_off(path).triangles(), screen.triangles());
}

TEST(Off, Errors) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return read_off(in);
  };
  const std::string verts = "0 0 0\n1 0 0\n1 1 0\n0 1 0\n";
  try {
    parse("OFF\n4 1 0\n" + verts + "4 0 1 2 3\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("non-triangle face"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
  }
  try {
    parse("OFF\n4 1 0\n" + verts + "3 0 1 99\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("index out of range"), std::string::npos);
  }
  EXPECT_THROW(parse("PLY\n4 1 0\n" + verts), ValidationError);
  EXPECT_NO_THROW(parse("OFF\n# comment\n4 2 0\n" + verts + "3 0 1 2\n3 0 2 3\n"));
}
