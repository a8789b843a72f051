#pragma once

// Explicit voxel grids (density, RGB, palette logits), exact ray/grid
// traversal and the VXG1 checkpoint format.

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "common.hpp"
#include "palette.hpp"

namespace voxify {

using Index3 = std::array<int, 3>;

/// Cubic voxels of edge `voxel_edge` laid over `bbox`; the grid box is centered
/// on `bbox` and spans resolution × voxel_edge.
struct GridSpec {
  Index3 resolution{1, 1, 1};
  Box3 bbox;
  int cell_size = 1;
  int image_width = 1;
  double voxel_edge = 1.0;

  size_t voxel_count() const {
    return static_cast<size_t>(resolution[0]) * resolution[1] * resolution[2];
  }
  size_t linear(int i, int j, int k) const {
    return static_cast<size_t>(i) + static_cast<size_t>(resolution[0]) * (static_cast<size_t>(j) + static_cast<size_t>(resolution[1]) * k);
  }
  Index3 unravel(size_t v) const {
    const int nx = resolution[0], ny = resolution[1];
    return {static_cast<int>(v % nx), static_cast<int>((v / nx) % ny), static_cast<int>(v / (static_cast<size_t>(nx) * ny))};
  }
  Box3 grid_box() const {
    const Vec3 half = Vec3(resolution[0], resolution[1], resolution[2]) * (0.5 * voxel_edge);
    return {bbox.center() - half, bbox.center() + half};
  }
  Vec3 voxel_center(size_t v) const {
    const Index3 ijk = unravel(v);
    return grid_box().lo + Vec3(ijk[0] + 0.5, ijk[1] + 0.5, ijk[2] + 0.5) * voxel_edge;
  }
  bool operator==(const GridSpec& o) const {
    return resolution == o.resolution && bbox.lo == o.bbox.lo && bbox.hi == o.bbox.hi && cell_size == o.cell_size &&
           image_width == o.image_width && voxel_edge == o.voxel_edge;
  }
};

/// Voxel edge = longest box side × cell_size / W; per-axis counts follow the
/// box aspect ratio.
inline GridSpec make_grid_spec(const Box3& bbox, int image_width, int cell_size) {
  if (cell_size < 1 || image_width < 1 || image_width % cell_size != 0)
    throw Error(ErrorCode::kIndivisible,
                "image width " + std::to_string(image_width) + " by cell size " + std::to_string(cell_size));
  GridSpec s;
  s.bbox = bbox;
  s.cell_size = cell_size;
  s.image_width = image_width;
  s.voxel_edge = bbox.longest_side() * cell_size / image_width;
  if (!(s.voxel_edge > 0)) throw Error(ErrorCode::kInvalidArgument, "empty grid bounding box");
  const Vec3 e = bbox.extent();
  for (int a = 0; a < 3; ++a) s.resolution[a] = std::max(1, static_cast<int>(std::lround(e[a] / s.voxel_edge)));
  return s;
}

template <typename Real>
struct DensityGrid {
  GridSpec spec;
  std::vector<Real> raw;  // softplus(raw) is the density

  DensityGrid() = default;
  DensityGrid(const GridSpec& s, Real init) : spec(s), raw(s.voxel_count(), init) {}

  double density(size_t v) const { return softplus(static_cast<double>(raw[v])); }
};

template <typename Real>
struct ColorGrid {
  GridSpec spec;
  std::vector<Real> raw;  // 3 per voxel; sigmoid(raw) is the RGB color

  ColorGrid() = default;
  ColorGrid(const GridSpec& s, Real init) : spec(s), raw(3 * s.voxel_count(), init) {}

  Rgb rgb(size_t v) const {
    return {sigmoid(static_cast<double>(raw[3 * v])), sigmoid(static_cast<double>(raw[3 * v + 1])),
            sigmoid(static_cast<double>(raw[3 * v + 2]))};
  }
};

template <typename Real>
struct LogitGrid {
  GridSpec spec;
  int colors = 0;
  std::vector<Real> values;  // `colors` consecutive logits per voxel

  LogitGrid() = default;
  LogitGrid(const GridSpec& s, int c) : spec(s), colors(c), values(s.voxel_count() * c, Real(0)) {}

  std::span<const Real> logits(size_t v) const { return {values.data() + v * colors, static_cast<size_t>(colors)}; }
  std::span<Real> logits(size_t v) { return {values.data() + v * colors, static_cast<size_t>(colors)}; }
};

template <typename To, typename From>
std::vector<To> convert(const std::vector<From>& v) {
  return std::vector<To>(v.begin(), v.end());
}

struct RaySegment {
  uint32_t voxel = 0;
  double t_enter = 0.0;
  double t_exit = 0.0;

  double length() const { return t_exit - t_enter; }
  double t_mid() const { return 0.5 * (t_enter + t_exit); }
};

using RaySegmentList = std::vector<RaySegment>;

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

/// Slab test against `box`; returns false on a miss. t_near is clamped to 0.
inline bool intersect_box(const Box3& box, const Ray& ray, double& t_near, double& t_far) {
  t_near = 0.0;
  t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (ray.dir[a] == 0.0) {
      if (ray.origin[a] < box.lo[a] || ray.origin[a] > box.hi[a]) return false;
      continue;
    }
    double t0 = (box.lo[a] - ray.origin[a]) / ray.dir[a];
    double t1 = (box.hi[a] - ray.origin[a]) / ray.dir[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  return t_far > t_near;
}

/// Traversal into a reusable buffer.
inline void traverse_into(const GridSpec& spec, const Ray& ray, RaySegmentList& out) {
  out.clear();
  const Box3 box = spec.grid_box();
  double t_enter, t_exit;
  if (!intersect_box(box, ray, t_enter, t_exit)) return;
  const double edge = spec.voxel_edge;
  const Vec3 p = ray.origin + ray.dir * t_enter;
  int cell[3], step[3];
  double t_max[3], t_delta[3];
  for (int a = 0; a < 3; ++a) {
    const double rel = (p[a] - box.lo[a]) / edge;
    int c = static_cast<int>(std::floor(rel));
    if (ray.dir[a] < 0.0 && rel == std::floor(rel)) --c;
    cell[a] = std::clamp(c, 0, spec.resolution[a] - 1);
    if (ray.dir[a] > 0.0) {
      step[a] = 1;
      t_max[a] = (box.lo[a] + (cell[a] + 1) * edge - ray.origin[a]) / ray.dir[a];
      t_delta[a] = edge / ray.dir[a];
    } else if (ray.dir[a] < 0.0) {
      step[a] = -1;
      t_max[a] = (box.lo[a] + cell[a] * edge - ray.origin[a]) / ray.dir[a];
      t_delta[a] = -edge / ray.dir[a];
    } else {
      step[a] = 0;
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }
  double t = t_enter;
  while (t < t_exit) {
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    const double t_next = std::min(t_max[axis], t_exit);
    if (t_next > t) {
      out.push_back({static_cast<uint32_t>(spec.linear(cell[0], cell[1], cell[2])), t, t_next});
      t = t_next;
    }
    if (t >= t_exit) break;
    cell[axis] += step[axis];
    if (cell[axis] < 0 || cell[axis] >= spec.resolution[axis]) break;
    t_max[axis] += t_delta[axis];
  }
  if (!out.empty()) out.back().t_exit = t_exit;
}

/// Incremental axis-stepping traversal (Amanatides & Woo). The returned
/// segments partition ray ∩ grid box; zero-length pieces at exact edge or
/// corner crossings are dropped.
inline RaySegmentList traverse(const GridSpec& spec, const Ray& ray) {
  RaySegmentList out;
  traverse_into(spec, ray, out);
  return out;
}

/// Logit initialization: λ_n = −scale · ‖rgb − c_n‖ per voxel.
template <typename Real>
LogitGrid<Real> init_logits(const ColorGrid<Real>& rgb, const Palette& palette, double scale = 5.0) {
  LogitGrid<Real> out(rgb.spec, palette.size());
  if (rgb.raw.size() != 3 * rgb.spec.voxel_count()) throw Error(ErrorCode::kResolutionMismatch, "color grid size");
  for (size_t v = 0; v < rgb.spec.voxel_count(); ++v) {
    const Rgb c = rgb.rgb(v);
    auto l = out.logits(v);
    for (int n = 0; n < palette.size(); ++n) l[n] = static_cast<Real>(-scale * distance(c, palette.colors[n]));
  }
  return out;
}

/// Same rule from plain per-voxel RGB values; `spec` must match their count.
template <typename Real>
LogitGrid<Real> init_logits(const GridSpec& spec, std::span<const Rgb> rgb, const Palette& palette, double scale = 5.0) {
  if (rgb.size() != spec.voxel_count()) throw Error(ErrorCode::kResolutionMismatch, "color count differs from voxel count");
  LogitGrid<Real> out(spec, palette.size());
  for (size_t v = 0; v < rgb.size(); ++v) {
    auto l = out.logits(v);
    for (int n = 0; n < palette.size(); ++n) l[n] = static_cast<Real>(-scale * distance(rgb[v], palette.colors[n]));
  }
  return out;
}

/// VXG1 checkpoint: "VXG1", u32 Nx Ny Nz C, f32 density[N], f32 values[N*C];
/// little endian, voxels x-fastest, per-voxel channels contiguous.
struct Checkpoint {
  Index3 dims{0, 0, 0};
  uint32_t channels = 0;
  std::vector<float> density;
  std::vector<float> values;

  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorCode::kMalformedFile, "truncated u32");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<uint32_t>(f)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kUnreadableFile, path.string());
  out.write("VXG1", 4);
  for (int a = 0; a < 3; ++a) detail::put_u32(out, static_cast<uint32_t>(ck.dims[a]));
  detail::put_u32(out, ck.channels);
  for (float f : ck.density) detail::put_f32(out, f);
  for (float f : ck.values) detail::put_f32(out, f);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kUnreadableFile, path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "VXG1", 4) != 0) throw Error(ErrorCode::kMalformedFile, "bad VXG1 magic");
  Checkpoint ck;
  for (int a = 0; a < 3; ++a) ck.dims[a] = static_cast<int>(detail::get_u32(in));
  ck.channels = detail::get_u32(in);
  const size_t n = static_cast<size_t>(ck.dims[0]) * ck.dims[1] * ck.dims[2];
  ck.density.resize(n);
  for (float& f : ck.density) f = detail::get_f32(in);
  ck.values.resize(n * ck.channels);
  for (float& f : ck.values) f = detail::get_f32(in);
  return ck;
}

template <typename Real>
Checkpoint make_checkpoint(const DensityGrid<Real>& density, const std::vector<Real>& values, uint32_t channels) {
  return {density.spec.resolution, channels, convert<float>(density.raw), convert<float>(values)};
}

}  // namespace voxify
