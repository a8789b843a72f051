#pragma once

// Final discrete voxel model and its writers: MagicaVoxel .vox, cube-mesh PLY
// and orthographic PNG renders.

#include <filesystem>
#include <fstream>
#include <vector>

#include "geometry.hpp"
#include "png_io.hpp"
#include "quantizer.hpp"
#include "renderer.hpp"

namespace voxify {

struct QuantizedModel {
  GridSpec spec;
  std::vector<uint8_t> occupied;
  std::vector<int> index;  // palette index, meaningful where occupied
  Palette palette;

  size_t occupied_count() const { return static_cast<size_t>(std::count(occupied.begin(), occupied.end(), 1)); }
};

/// Density at which one voxel edge reaches α = 0.5: d·edge = ln 2.
inline double default_occupancy_threshold(const GridSpec& spec) { return std::log(2.0) / spec.voxel_edge; }

template <typename Real>
QuantizedModel quantize_model(const DensityGrid<Real>& density, const LogitGrid<Real>& logits, const Palette& palette,
                              std::optional<double> threshold = std::nullopt) {
  if (density.spec.voxel_count() != logits.spec.voxel_count())
    throw Error(ErrorCode::kResolutionMismatch, "density and logit grids differ");
  const double th = threshold.value_or(default_occupancy_threshold(density.spec));
  QuantizedModel m{density.spec, std::vector<uint8_t>(density.spec.voxel_count(), 0), finalize(logits), palette};
  for (size_t v = 0; v < m.occupied.size(); ++v) m.occupied[v] = density.density(v) > th ? 1 : 0;
  return m;
}

namespace detail {

inline void put_chunk_header(std::vector<unsigned char>& buf, const char id[4], uint32_t content, uint32_t children) {
  buf.insert(buf.end(), id, id + 4);
  for (uint32_t v : {content, children})
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u32_le(std::vector<unsigned char>& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

}  // namespace detail

/// MagicaVoxel bytes: "VOX " 150, MAIN{SIZE, XYZI, RGBA}. Grid (i,j,k) maps to
/// .vox (x,y,z) with z up; color index = palette index + 1; RGBA entry n holds
/// palette color n (alpha 255) and unused entries are zero.
inline std::vector<unsigned char> encode_vox(const QuantizedModel& m) {
  for (int a = 0; a < 3; ++a)
    if (m.spec.resolution[a] > 256) throw Error(ErrorCode::kDimensionTooLarge, ".vox dimensions are limited to 256");
  if (m.palette.size() > 255) throw Error(ErrorCode::kDimensionTooLarge, ".vox palettes hold at most 255 colors");
  std::vector<unsigned char> xyzi;
  uint32_t count = 0;
  for (size_t v = 0; v < m.occupied.size(); ++v) {
    if (!m.occupied[v]) continue;
    const Index3 ijk = m.spec.unravel(v);
    xyzi.push_back(static_cast<unsigned char>(ijk[0]));
    xyzi.push_back(static_cast<unsigned char>(ijk[1]));
    xyzi.push_back(static_cast<unsigned char>(ijk[2]));
    xyzi.push_back(static_cast<unsigned char>(m.index[v] + 1));
    ++count;
  }
  const uint32_t size_chunk = 12 + 12;
  const uint32_t xyzi_chunk = 12 + 4 + static_cast<uint32_t>(xyzi.size());
  const uint32_t rgba_chunk = 12 + 1024;

  std::vector<unsigned char> buf;
  buf.insert(buf.end(), {'V', 'O', 'X', ' '});
  detail::put_u32_le(buf, 150);
  detail::put_chunk_header(buf, "MAIN", 0, size_chunk + xyzi_chunk + rgba_chunk);
  detail::put_chunk_header(buf, "SIZE", 12, 0);
  for (int a = 0; a < 3; ++a) detail::put_u32_le(buf, static_cast<uint32_t>(m.spec.resolution[a]));
  detail::put_chunk_header(buf, "XYZI", 4 + static_cast<uint32_t>(xyzi.size()), 0);
  detail::put_u32_le(buf, count);
  buf.insert(buf.end(), xyzi.begin(), xyzi.end());
  detail::put_chunk_header(buf, "RGBA", 1024, 0);
  for (int n = 0; n < 256; ++n) {
    if (n < m.palette.size()) {
      const Rgba8 c = to_rgba8(m.palette.colors[n]);
      buf.insert(buf.end(), {c.r, c.g, c.b, 255});
    } else {
      buf.insert(buf.end(), {0, 0, 0, 0});
    }
  }
  return buf;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kUnreadableFile, path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kUnreadableFile, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_vox(const QuantizedModel& m, const std::filesystem::path& path) { write_bytes(path, encode_vox(m)); }

/// Parsed .vox content: dimensions, voxels (x, y, z, color index) and the
/// 256-entry RGBA table.
struct VoxFile {
  Index3 size{0, 0, 0};
  std::vector<std::array<uint8_t, 4>> voxels;
  std::vector<Rgba8> rgba;
};

inline VoxFile decode_vox(const std::vector<unsigned char>& bytes) {
  auto u32 = [&](size_t off) {
    if (off + 4 > bytes.size()) throw Error(ErrorCode::kMalformedFile, "truncated .vox");
    return static_cast<uint32_t>(bytes[off] | (bytes[off + 1] << 8) | (bytes[off + 2] << 16)) |
           (static_cast<uint32_t>(bytes[off + 3]) << 24);
  };
  if (bytes.size() < 20 || std::memcmp(bytes.data(), "VOX ", 4) != 0) throw Error(ErrorCode::kMalformedFile, "bad .vox magic");
  if (std::memcmp(bytes.data() + 8, "MAIN", 4) != 0) throw Error(ErrorCode::kMalformedFile, "missing MAIN chunk");
  VoxFile f;
  size_t off = 8 + 12 + u32(12);
  const size_t end = off + u32(16);
  while (off + 12 <= end && off + 12 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + off), 4);
    const uint32_t content = u32(off + 4);
    const size_t body = off + 12;
    if (body + content > bytes.size()) throw Error(ErrorCode::kMalformedFile, "chunk overruns file");
    if (id == "SIZE") {
      for (int a = 0; a < 3; ++a) f.size[a] = static_cast<int>(u32(body + 4 * a));
    } else if (id == "XYZI") {
      const uint32_t n = u32(body);
      if (4 + 4ull * n > content) throw Error(ErrorCode::kMalformedFile, "XYZI count exceeds chunk");
      for (uint32_t i = 0; i < n; ++i) {
        const unsigned char* p = bytes.data() + body + 4 + 4 * i;
        f.voxels.push_back({p[0], p[1], p[2], p[3]});
      }
    } else if (id == "RGBA") {
      for (int n = 0; n < 256; ++n) {
        const unsigned char* p = bytes.data() + body + 4 * n;
        f.rgba.push_back({p[0], p[1], p[2], p[3]});
      }
    }
    off = body + content + u32(off + 8);
  }
  return f;
}

/// Rebuilds a model from a decoded .vox; colors come from the RGBA table, so
/// palettes round-trip at 8-bit precision.
inline QuantizedModel model_from_vox(const VoxFile& f, int palette_size) {
  QuantizedModel m;
  m.spec.resolution = f.size;
  m.occupied.assign(m.spec.voxel_count(), 0);
  m.index.assign(m.spec.voxel_count(), 0);
  for (const auto& v : f.voxels) {
    const size_t idx = m.spec.linear(v[0], v[1], v[2]);
    m.occupied[idx] = 1;
    m.index[idx] = v[3] - 1;
  }
  for (int n = 0; n < palette_size && n < static_cast<int>(f.rgba.size()); ++n) m.palette.colors.push_back(to_rgb(f.rgba[n]));
  return m;
}

inline QuantizedModel read_vox(const std::filesystem::path& path, int palette_size) {
  return model_from_vox(decode_vox(read_bytes(path)), palette_size);
}

/// ASCII PLY with 8 vertices and 12 triangles per occupied voxel, colored by palette.
inline void write_ply_cubes(const QuantizedModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kUnreadableFile, path.string());
  const size_t n = m.occupied_count();
  out << "ply\nformat ascii 1.0\nelement vertex " << 8 * n
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "element face " << 12 * n << "\nproperty list uchar int vertex_indices\nend_header\n";
  const Vec3 lo = m.spec.grid_box().lo;
  const double e = m.spec.voxel_edge;
  for (size_t v = 0; v < m.occupied.size(); ++v) {
    if (!m.occupied[v]) continue;
    const Index3 ijk = m.spec.unravel(v);
    const Rgba8 c = to_rgba8(m.palette.colors[m.index[v]]);
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 p = lo + Vec3(ijk[0] + (corner & 1), ijk[1] + ((corner >> 1) & 1), ijk[2] + ((corner >> 2) & 1)) * e;
      out << p.x << ' ' << p.y << ' ' << p.z << ' ' << int(c.r) << ' ' << int(c.g) << ' ' << int(c.b) << '\n';
    }
  }
  static constexpr int kFaces[12][3] = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                                        {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  for (size_t q = 0; q < n; ++q)
    for (const auto& f : kFaces)
      out << "3 " << 8 * q + f[0] << ' ' << 8 * q + f[1] << ' ' << 8 * q + f[2] << '\n';
}

struct ModelRender {
  Image<Rgb> color;
  Image<double> alpha;
};

/// Renders occupied voxels as opaque cubes of their palette color through the
/// volume renderer; one ray per pixel center.
inline ModelRender render_model(const QuantizedModel& m, const OrthoCamera& cam) {
  DensityGrid<double> opaque(m.spec, -1e4);
  std::vector<Rgb> colors(m.spec.voxel_count());
  for (size_t v = 0; v < m.occupied.size(); ++v) {
    if (!m.occupied[v]) continue;
    opaque.raw[v] = 1e4;
    colors[v] = m.palette.colors[m.index[v]];
  }
  ModelRender out{Image<Rgb>(cam.width, cam.height), Image<double>(cam.width, cam.height, 0.0)};
  RaySegmentList segs;
  RenderOutput ro;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      traverse_into(m.spec, {cam.ray_origin(x + 0.5, y + 0.5), cam.view_dir}, segs);
      render_ray(segs, opaque, colors, {}, ro);
      out.color(x, y) = ro.color;
      out.alpha(x, y) = ro.acc_alpha;
    }
  return out;
}

inline Image<Rgba8> to_rgba_image(const ModelRender& r) {
  Image<Rgba8> img(r.color.width, r.color.height);
  for (size_t i = 0; i < img.size(); ++i) {
    const double a = r.alpha.data[i];
    img.data[i] = to_rgba8(a > 0.0 ? r.color.data[i] / a : Rgb{}, a);
  }
  return img;
}

inline void render_png(const QuantizedModel& m, const OrthoCamera& cam, const std::filesystem::path& path) {
  write_png(path, to_rgba_image(render_model(m, cam)));
}

}  // namespace voxify
