#pragma once

// Synthetic meshes and small helpers shared by the test binaries.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <array>
#include <string>

#include "voxify/voxify.hpp"

namespace voxify::testing {

inline void add_box(Mesh& m, const Vec3& lo, const Vec3& hi, const Rgb& color) {
  const uint32_t b = static_cast<uint32_t>(m.vertices.size());
  for (int c = 0; c < 8; ++c) {
    m.vertices.push_back({(c & 1) ? hi.x : lo.x, (c & 2) ? hi.y : lo.y, (c & 4) ? hi.z : lo.z});
    m.vertex_colors.push_back(color);
  }
  static constexpr uint32_t kFaces[12][3] = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                                             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  for (const auto& f : kFaces) m.triangles.push_back({b + f[0], b + f[1], b + f[2]});
}

inline void add_sphere(Mesh& m, const Vec3& center, double radius, const Rgb& color, int rings = 24, int segments = 48) {
  const uint32_t b = static_cast<uint32_t>(m.vertices.size());
  for (int r = 0; r <= rings; ++r) {
    const double th = M_PI * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double ph = 2.0 * M_PI * s / segments;
      m.vertices.push_back(center + Vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)) * radius);
      m.vertex_colors.push_back(color);
    }
  }
  auto at = [&](int r, int s) { return b + static_cast<uint32_t>(r * segments + (s % segments)); };
  for (int r = 0; r < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      m.triangles.push_back({at(r, s), at(r + 1, s), at(r + 1, s + 1)});
      m.triangles.push_back({at(r, s), at(r + 1, s + 1), at(r, s + 1)});
    }
}

/// Axis-aligned box with arbitrary corner positions (8 vertices, 12 triangles).
inline void add_prism(Mesh& m, const std::array<Vec3, 4>& base, double z0, double z1, const Rgb& color) {
  const uint32_t b = static_cast<uint32_t>(m.vertices.size());
  for (double z : {z0, z1})
    for (const Vec3& p : base) {
      m.vertices.push_back({p.x, p.y, z});
      m.vertex_colors.push_back(color);
    }
  static constexpr uint32_t kFaces[12][3] = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                                             {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
  for (const auto& f : kFaces) m.triangles.push_back({b + f[0], b + f[1], b + f[2]});
}

/// Tan square slab turned 45° about +Z with a blue sphere resting on it.
/// Already normalized (longest side 1, centered). Flat faces sit on voxel
/// boundaries of a 16³ grid over the 1.1 scene cube (edge 0.06875); the
/// only extremes off the boundaries are the slab's vertical edges and the
/// sphere's apex.
inline Mesh sphere_on_cube() {
  Mesh m;
  add_prism(m, {Vec3(0.5, 0, 0), Vec3(0, 0.5, 0), Vec3(-0.5, 0, 0), Vec3(0, -0.5, 0)}, -0.4125, -0.1375,
            {0.85, 0.6, 0.3});
  add_sphere(m, {0.0, 0.0, 0.1375}, 0.275, {0.15, 0.3, 0.85});
  return m;
}

inline Mesh solid_cube(const Rgb& color) {
  Mesh m;
  add_box(m, {-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}, color);
  return m;
}

inline Mesh two_color_sphere() {
  Mesh m;
  add_sphere(m, {0, 0, 0}, 0.5, {0.9, 0.2, 0.2});
  for (size_t i = 0; i < m.vertices.size(); ++i)
    if (m.vertices[i].z < 0) m.vertex_colors[i] = {0.2, 0.2, 0.9};
  return m;
}

/// ASCII PLY with uchar vertex colors.
inline void write_mesh_ply(const Mesh& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << m.vertices.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\n"
         "property uchar blue\nelement face "
      << m.triangles.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
  out.precision(9);
  for (size_t i = 0; i < m.vertices.size(); ++i) {
    const Rgba8 c = to_rgba8(m.vertex_colors[i]);
    out << m.vertices[i].x << ' ' << m.vertices[i].y << ' ' << m.vertices[i].z << ' ' << int(c.r) << ' ' << int(c.g)
        << ' ' << int(c.b) << '\n';
  }
  for (const auto& t : m.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("voxify_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace voxify::testing
