#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "oracles.hpp"

namespace voxify {
namespace {

std::filesystem::path write_file(const std::string& dir, const std::string& name, const std::string& text) {
  const auto p = testing::scratch_dir(dir) / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

TEST(MeshLoad, SingleRedTrianglePly) {
  const auto p = write_file("ply_tri", "t.ply",
                            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                            "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n"
                            "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
                            "0 0 0 255 0 0\n1 0 0 255 0 0\n0 1 0 255 0 0\n3 0 1 2\n");
  const Mesh m = load_mesh(p);
  ASSERT_EQ(m.triangles.size(), 1u);
  for (const Rgb& c : m.vertex_colors) EXPECT_EQ(c, Rgb(1, 0, 0));
}

TEST(MeshLoad, ObjWithoutColorsIsRejected) {
  const auto p = write_file("obj_nocolor", "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  try {
    load_mesh(p);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingColors);
    EXPECT_NE(std::string(e.what()).find("missing vertex colors"), std::string::npos);
  }
}

TEST(MeshLoad, ObjWithFloatColorsAndQuads) {
  const auto p = write_file("obj_quad", "q.obj",
                            "v 0 0 0 0 1 0\nv 1 0 0 0 1 0\nv 1 1 0 0 1 0\nv 0 1 0 0 1 0\nf 1 2 3 4\n");
  const Mesh m = load_mesh(p);
  EXPECT_EQ(m.vertices.size(), 4u);
  EXPECT_EQ(m.triangles.size(), 2u);
  EXPECT_EQ(m.vertex_colors[2], Rgb(0, 1, 0));
}

TEST(MeshLoad, CubePlyCounts) {
  const auto dir = testing::scratch_dir("ply_cube");
  testing::write_mesh_ply(testing::solid_cube({1, 0, 0}), dir / "cube.ply");
  const Mesh m = load_mesh(dir / "cube.ply");
  EXPECT_EQ(m.vertices.size(), 8u);
  EXPECT_EQ(m.triangles.size(), 12u);
}

TEST(MeshLoad, BinaryPlyMatchesAscii) {
  const auto dir = testing::scratch_dir("ply_binary");
  {
    std::ofstream out(dir / "b.ply", std::ios::binary);
    out << "ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
           "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n"
           "element face 1\nproperty list uchar int vertex_indices\nend_header\n";
    const float xyz[3][3] = {{0, 0, 0}, {2, 0, 0}, {0, 3, 0}};
    for (const auto& v : xyz) {
      out.write(reinterpret_cast<const char*>(v), 12);
      const unsigned char rgb[3] = {0, 0, 255};
      out.write(reinterpret_cast<const char*>(rgb), 3);
    }
    const unsigned char n = 3;
    out.write(reinterpret_cast<const char*>(&n), 1);
    const int32_t idx[3] = {0, 1, 2};
    out.write(reinterpret_cast<const char*>(idx), 12);
  }
  const Mesh m = load_mesh(dir / "b.ply");
  ASSERT_EQ(m.triangles.size(), 1u);
  EXPECT_EQ(m.vertices[2], Vec3(0, 3, 0));
  EXPECT_EQ(m.vertex_colors[0], Rgb(0, 0, 1));
}

TEST(MeshLoad, MissingFileAndEmptyMesh) {
  EXPECT_THROW(load_mesh("/nonexistent/x.ply"), Error);
  const auto p = write_file("ply_empty", "e.ply",
                            "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\n"
                            "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n"
                            "element face 0\nproperty list uchar int vertex_indices\nend_header\n");
  try {
    load_mesh(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyMesh);
  }
}

TEST(Normalize, TranslatedUnitCube) {
  Mesh m;
  testing::add_box(m, {4.5, 4.5, 4.5}, {5.5, 5.5, 5.5}, {1, 1, 1});
  const NormalizedMesh n = normalize_mesh(m);
  const Box3 b = n.mesh.bounds();
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(b.lo[a], -0.5, 1e-12);
    EXPECT_NEAR(b.hi[a], 0.5, 1e-12);
  }
}

TEST(Normalize, LongestSideBecomesOne) {
  Mesh m;
  testing::add_box(m, {0, 0, 0}, {2, 1, 1}, {1, 1, 1});
  const Vec3 e = normalize_mesh(m).mesh.bounds().extent();
  EXPECT_NEAR(e.x, 1.0, 1e-12);
  EXPECT_NEAR(e.y, 0.5, 1e-12);
  EXPECT_NEAR(e.z, 0.5, 1e-12);
}

TEST(Normalize, DegenerateMesh) {
  Mesh m;
  m.vertices = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
  m.vertex_colors.assign(3, {1, 0, 0});
  m.triangles = {{0, 1, 2}};
  try {
    normalize_mesh(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateMesh);
  }
}

// Camera looking along +Y at a box; a square in the plane y = y0.
Mesh square_at(double y0, double half, const Rgb& color) {
  Mesh m;
  m.vertices = {{-half, y0, -half}, {half, y0, -half}, {half, y0, half}, {-half, y0, half}};
  m.vertex_colors.assign(4, color);
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

TEST(Rasterize, FlatSquareIsUniformAtConstantDepth) {
  const Box3 box{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
  const OrthoCamera cam = canonical_camera(ViewName::kFront, box, 64, 1.0);
  const ViewRaster r = rasterize(square_at(0.1, 0.3, {0, 1, 0}), cam);
  int covered = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (!r.coverage(x, y)) continue;
      ++covered;
      EXPECT_LT(distance(r.color(x, y), Rgb(0, 1, 0)), 1e-12);
      // Image plane at y = -0.5.
      EXPECT_NEAR(r.depth(x, y), 0.6, 1e-6);
    }
  EXPECT_GT(covered, 0);
}

TEST(Rasterize, NearerSquareWins) {
  const Box3 box{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
  const OrthoCamera cam = canonical_camera(ViewName::kFront, box, 32, 1.0);
  Mesh m = square_at(0.0, 0.3, {0, 0, 1});  // depth 0.5
  const Mesh near = square_at(-0.3, 0.2, {1, 0, 0});  // depth 0.2
  const uint32_t base = static_cast<uint32_t>(m.vertices.size());
  m.vertices.insert(m.vertices.end(), near.vertices.begin(), near.vertices.end());
  m.vertex_colors.insert(m.vertex_colors.end(), near.vertex_colors.begin(), near.vertex_colors.end());
  for (auto t : near.triangles) m.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  const ViewRaster r = rasterize(m, cam);
  const ViewRaster only_near = rasterize(near, cam);
  int overlap = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (only_near.coverage(x, y)) {
        ++overlap;
        EXPECT_LT(distance(r.color(x, y), Rgb(1, 0, 0)), 1e-12);
        EXPECT_NEAR(r.depth(x, y), 0.2, 1e-9);
      }
  EXPECT_GT(overlap, 0);
}

TEST(Rasterize, HalfImageTriangleCoverage) {
  const Box3 box{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
  const int W = 64;
  const OrthoCamera cam = canonical_camera(ViewName::kFront, box, W, 1.0);
  Mesh m;
  m.vertices = {{-0.5, 0, -0.5}, {0.5, 0, -0.5}, {0.5, 0, 0.5}};
  m.vertex_colors.assign(3, {1, 1, 1});
  m.triangles = {{0, 1, 2}};
  const ViewRaster r = rasterize(m, cam);
  int covered = 0;
  for (uint8_t c : r.coverage.data) covered += c;
  EXPECT_NEAR(covered / double(W * W), 0.5, 2.0 / W);
}

TEST(Camera, RaysAreParallelAndProjectionInvertsOrigins) {
  const Box3 box{{-0.3, -0.5, -0.2}, {0.4, 0.5, 0.6}};
  Rng rng(3);
  for (ViewName v : kCanonicalViews) {
    const OrthoCamera c = canonical_camera(v, box, 48);
    for (int i = 0; i < 20; ++i) {
      const double px = rng.uniform() * 48, py = rng.uniform() * 48;
      const Vec3 p = c.project(c.ray_origin(px, py));
      EXPECT_NEAR(p.x, px, 1e-9);
      EXPECT_NEAR(p.y, py, 1e-9);
      EXPECT_NEAR(p.z, 0.0, 1e-9);
    }
  }
  for (const OrthoCamera& c : diagonal_cameras(box, 32)) {
    EXPECT_NEAR(norm(c.view_dir), 1.0, 1e-12);
    EXPECT_NEAR(dot(c.view_dir, c.up), 0.0, 1e-12);
  }
}

TEST(Rasterize, DepthOfTiltedPlaneMatchesRayIntersection) {
  // Plane through three points, viewed from the diagonal: every covered
  // pixel's depth equals the analytic ray/plane distance.
  const Box3 box{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
  const OrthoCamera cam = fit_camera({1, 2, 0.5}, {0, 0, 1}, box, 64);
  Mesh m;
  m.vertices = {{-0.5, 0.2, -0.5}, {0.5, -0.1, -0.4}, {0.0, 0.3, 0.5}};
  m.vertex_colors.assign(3, {1, 1, 1});
  m.triangles = {{0, 1, 2}};
  const ViewRaster r = rasterize(m, cam);
  const Vec3 n = cross(m.vertices[1] - m.vertices[0], m.vertices[2] - m.vertices[0]);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (!r.coverage(x, y)) continue;
      const Vec3 o = cam.ray_origin(x + 0.5, y + 0.5);
      const double t = dot(m.vertices[0] - o, n) / dot(cam.view_dir, n);
      EXPECT_NEAR(r.depth(x, y), t, 1e-6);
    }
}

TEST(RasterizeProperty, CoverageAgreesWithRayTriangleOracle) {
  const Box3 box{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
  const int W = 256;
  Rng rng(11);
  long agree = 0, total = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Mesh m;
    for (int k = 0; k < 3; ++k) m.vertices.push_back({rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5});
    m.vertex_colors.assign(3, {1, 1, 1});
    m.triangles = {{0, 1, 2}};
    const OrthoCamera cam = canonical_camera(kCanonicalViews[trial % 6], box, W);
    const ViewRaster r = rasterize(m, cam);
    for (int y = 0; y < W; ++y)
      for (int x = 0; x < W; ++x) {
        const Ray ray{cam.ray_origin(x + 0.5, y + 0.5), cam.view_dir};
        const double margin = oracle::ray_triangle_margin(ray, m.vertices[0], m.vertices[1], m.vertices[2]);
        if (std::abs(margin) < 1e-9) continue;  // edge pixel
        ++total;
        agree += (margin > 0) == (r.coverage(x, y) != 0);
      }
  }
  EXPECT_GE(agree, 0.99 * total);
}

}  // namespace
}  // namespace voxify
