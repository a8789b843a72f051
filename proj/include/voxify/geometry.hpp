#pragma once

// Colored triangle meshes, orthographic cameras and a z-buffered flat
// rasterizer producing color, depth and coverage maps.

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace voxify {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<uint32_t, 3>> triangles;
  std::vector<Rgb> vertex_colors;

  void validate() const {
    if (triangles.empty()) throw Error(ErrorCode::kEmptyMesh, "mesh has no triangles");
    if (vertex_colors.size() != vertices.size())
      throw Error(ErrorCode::kMissingColors, "vertex color count differs from vertex count");
    for (const auto& t : triangles)
      for (uint32_t i : t)
        if (i >= vertices.size()) throw Error(ErrorCode::kMalformedFile, "triangle index out of range");
  }

  Box3 bounds() const {
    Box3 b{vertices.front(), vertices.front()};
    for (const Vec3& v : vertices) {
      b.lo = cwise_min(b.lo, v);
      b.hi = cwise_max(b.hi, v);
    }
    return b;
  }
};

namespace detail {

inline Rgb clamp_color(Rgb c) {
  for (int i = 0; i < 3; ++i) c[i] = std::clamp(c[i], 0.0, 1.0);
  return c;
}

inline void add_polygon(Mesh& mesh, const std::vector<long>& poly) {
  for (size_t i = 1; i + 1 < poly.size(); ++i)
    mesh.triangles.push_back({static_cast<uint32_t>(poly[0]), static_cast<uint32_t>(poly[i]),
                              static_cast<uint32_t>(poly[i + 1])});
}

inline Mesh load_obj(std::istream& in) {
  Mesh mesh;
  bool missing_color = false;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      std::vector<double> vals;
      double d;
      while (ls >> d) vals.push_back(d);
      if (vals.size() < 3) throw Error(ErrorCode::kMalformedFile, "vertex with fewer than 3 coordinates");
      mesh.vertices.push_back({vals[0], vals[1], vals[2]});
      if (vals.size() >= 6) {
        Rgb c{vals[3], vals[4], vals[5]};
        if (c.x > 1.0 || c.y > 1.0 || c.z > 1.0) c = c / 255.0;
        mesh.vertex_colors.push_back(clamp_color(c));
      } else {
        missing_color = true;
      }
    } else if (tag == "f") {
      std::vector<long> poly;
      std::string tok;
      while (ls >> tok) {
        const long idx = std::stol(tok.substr(0, tok.find('/')));
        const long n = static_cast<long>(mesh.vertices.size());
        const long resolved = idx < 0 ? n + idx : idx - 1;
        if (resolved < 0 || resolved >= n) throw Error(ErrorCode::kMalformedFile, "face index out of range");
        poly.push_back(resolved);
      }
      add_polygon(mesh, poly);
    }
  }
  if (missing_color) throw Error(ErrorCode::kMissingColors, "OBJ vertices lack r g b fields");
  return mesh;
}

enum class PlyType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

inline PlyType parse_ply_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::kInt8;
  if (s == "uchar" || s == "uint8") return PlyType::kUint8;
  if (s == "short" || s == "int16") return PlyType::kInt16;
  if (s == "ushort" || s == "uint16") return PlyType::kUint16;
  if (s == "int" || s == "int32") return PlyType::kInt32;
  if (s == "uint" || s == "uint32") return PlyType::kUint32;
  if (s == "float" || s == "float32") return PlyType::kFloat32;
  if (s == "double" || s == "float64") return PlyType::kFloat64;
  throw Error(ErrorCode::kMalformedFile, "unknown PLY type '" + s + "'");
}

inline int ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8: case PlyType::kUint8: return 1;
    case PlyType::kInt16: case PlyType::kUint16: return 2;
    case PlyType::kInt32: case PlyType::kUint32: case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
  }
  return 0;
}

inline bool ply_type_is_integral(PlyType t) { return t != PlyType::kFloat32 && t != PlyType::kFloat64; }

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat32;
  bool is_list = false;
  PlyType count_type = PlyType::kUint8;
};

struct PlyElement {
  std::string name;
  size_t count = 0;
  std::vector<PlyProperty> props;
};

class PlyValueReader {
 public:
  PlyValueReader(std::istream& in, int format) : in_(in), format_(format) {}

  double read(PlyType t) {
    if (format_ == 0) {
      double v;
      if (!(in_ >> v)) throw Error(ErrorCode::kMalformedFile, "truncated ASCII PLY body");
      return v;
    }
    unsigned char buf[8];
    const int n = ply_type_size(t);
    if (!in_.read(reinterpret_cast<char*>(buf), n)) throw Error(ErrorCode::kMalformedFile, "truncated binary PLY body");
    const bool file_le = format_ == 1;
    if (file_le != (std::endian::native == std::endian::little)) std::reverse(buf, buf + n);
    switch (t) {
      case PlyType::kInt8: { int8_t v; std::memcpy(&v, buf, 1); return v; }
      case PlyType::kUint8: return buf[0];
      case PlyType::kInt16: { int16_t v; std::memcpy(&v, buf, 2); return v; }
      case PlyType::kUint16: { uint16_t v; std::memcpy(&v, buf, 2); return v; }
      case PlyType::kInt32: { int32_t v; std::memcpy(&v, buf, 4); return v; }
      case PlyType::kUint32: { uint32_t v; std::memcpy(&v, buf, 4); return v; }
      case PlyType::kFloat32: { float v; std::memcpy(&v, buf, 4); return v; }
      case PlyType::kFloat64: { double v; std::memcpy(&v, buf, 8); return v; }
    }
    return 0.0;
  }

 private:
  std::istream& in_;
  int format_;  // 0 ascii, 1 binary little endian, 2 binary big endian
};

inline Mesh load_ply(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw Error(ErrorCode::kMalformedFile, "missing 'ply' magic");
  int format = -1;
  std::vector<PlyElement> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") format = 0;
      else if (f == "binary_little_endian") format = 1;
      else if (f == "binary_big_endian") format = 2;
      else throw Error(ErrorCode::kMalformedFile, "unknown PLY format '" + f + "'");
    } else if (tag == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) throw Error(ErrorCode::kMalformedFile, "property before element");
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        ls >> ct >> it;
        p.is_list = true;
        p.count_type = parse_ply_type(ct);
        p.type = parse_ply_type(it);
      } else {
        p.type = parse_ply_type(type);
      }
      ls >> p.name;
      elements.back().props.push_back(p);
    } else if (tag == "end_header") {
      break;
    }
  }
  if (format < 0) throw Error(ErrorCode::kMalformedFile, "PLY header lacks format line");

  Mesh mesh;
  PlyValueReader reader(in, format);
  for (const PlyElement& e : elements) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
      for (int i = 0; i < static_cast<int>(e.props.size()); ++i) {
        const std::string& n = e.props[i].name;
        if (n == "x") ix = i;
        else if (n == "y") iy = i;
        else if (n == "z") iz = i;
        else if (n == "red" || n == "r" || n == "diffuse_red") ir = i;
        else if (n == "green" || n == "g" || n == "diffuse_green") ig = i;
        else if (n == "blue" || n == "b" || n == "diffuse_blue") ib = i;
      }
      if (ix < 0 || iy < 0 || iz < 0) throw Error(ErrorCode::kMalformedFile, "vertex element lacks x/y/z");
      if (ir < 0 || ig < 0 || ib < 0) throw Error(ErrorCode::kMissingColors, "PLY vertices lack red/green/blue");
      std::vector<double> vals(e.props.size());
      for (size_t v = 0; v < e.count; ++v) {
        for (size_t i = 0; i < e.props.size(); ++i) {
          const PlyProperty& p = e.props[i];
          if (p.is_list) {
            const auto n = static_cast<size_t>(reader.read(p.count_type));
            for (size_t k = 0; k < n; ++k) reader.read(p.type);
            continue;
          }
          vals[i] = reader.read(p.type);
        }
        mesh.vertices.push_back({vals[ix], vals[iy], vals[iz]});
        Rgb c{vals[ir], vals[ig], vals[ib]};
        if (ply_type_is_integral(e.props[ir].type)) c = c / 255.0;
        mesh.vertex_colors.push_back(clamp_color(c));
      }
    } else {
      const bool is_face = e.name == "face";
      for (size_t f = 0; f < e.count; ++f) {
        for (const PlyProperty& p : e.props) {
          if (!p.is_list) {
            reader.read(p.type);
            continue;
          }
          const auto n = static_cast<size_t>(reader.read(p.count_type));
          std::vector<long> poly(n);
          for (size_t k = 0; k < n; ++k) poly[k] = static_cast<long>(reader.read(p.type));
          if (is_face && (p.name == "vertex_indices" || p.name == "vertex_index")) add_polygon(mesh, poly);
        }
      }
    }
  }
  return mesh;
}

}  // namespace detail

/// Loads an OBJ ("v x y z r g b") or PLY (red/green/blue vertex properties)
/// file. Throws Error with kUnreadableFile, kMissingColors or kEmptyMesh.
inline Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kUnreadableFile, path.string());
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  Mesh mesh;
  if (ext == ".obj") {
    mesh = detail::load_obj(in);
  } else if (ext == ".ply") {
    mesh = detail::load_ply(in);
  } else {
    throw Error(ErrorCode::kUnreadableFile, "unsupported extension '" + ext + "'");
  }
  if (mesh.triangles.empty() || mesh.vertices.empty()) throw Error(ErrorCode::kEmptyMesh, path.string());
  mesh.validate();
  return mesh;
}

struct NormalizedMesh {
  Mesh mesh;
  Box3 box;
};

/// Centers the tight bounding box at the origin and scales the longest side to 1.
inline NormalizedMesh normalize_mesh(Mesh mesh) {
  mesh.validate();
  const Box3 b = mesh.bounds();
  const double longest = b.longest_side();
  if (!(longest > 1e-12)) throw Error(ErrorCode::kDegenerateMesh, "zero-extent bounding box");
  const Vec3 c = b.center();
  for (Vec3& v : mesh.vertices) v = (v - c) / longest;
  const Vec3 half = b.extent() / (2.0 * longest);
  return {std::move(mesh), Box3{-half, half}};
}

/// Parallel-projection camera. Rays for pixel (px,py) start on the image plane
/// `center - near * view_dir` and travel along `view_dir`; depth is measured
/// along `view_dir` from that plane.
struct OrthoCamera {
  Vec3 view_dir{0, 1, 0};
  Vec3 up{0, 0, 1};
  int width = 1;
  int height = 1;
  double extent = 1.0;  // world units spanned horizontally
  Vec3 center{};
  double near = 0.0;

  Vec3 right() const { return cross(view_dir, up); }
  double pixel_size() const { return extent / width; }
  double extent_vertical() const { return pixel_size() * height; }
  Vec3 plane_origin() const { return center - view_dir * near; }

  void validate() const {
    if (std::abs(norm(view_dir) - 1.0) > 1e-9 || std::abs(norm(up) - 1.0) > 1e-9)
      throw Error(ErrorCode::kInvalidArgument, "camera vectors must be unit length");
    if (std::abs(dot(view_dir, up)) > 1e-9) throw Error(ErrorCode::kInvalidArgument, "up must be orthogonal to view_dir");
    if (width < 1 || height < 1 || !(extent > 0)) throw Error(ErrorCode::kInvalidArgument, "empty camera image");
  }

  /// Ray origin for continuous image coordinates; pixel centers are at (x+0.5, y+0.5).
  Vec3 ray_origin(double px, double py) const {
    const double s = pixel_size();
    return plane_origin() + right() * ((px - 0.5 * width) * s) - up * ((py - 0.5 * height) * s);
  }

  /// Image coordinates (x, y) and depth of a world point.
  Vec3 project(const Vec3& p) const {
    const Vec3 rel = p - center;
    const double s = pixel_size();
    return {dot(rel, right()) / s + 0.5 * width, 0.5 * height - dot(rel, up) / s, dot(rel, view_dir) + near};
  }
};

/// Camera looking along `dir` that frames `box`: extent = margin × the box's
/// widest projected side, image plane tangent to the box on the near side.
inline OrthoCamera fit_camera(const Vec3& dir, const Vec3& up_hint, const Box3& box, int width, double margin = 1.1) {
  OrthoCamera cam;
  cam.view_dir = normalized(dir);
  cam.up = normalized(up_hint - cam.view_dir * dot(up_hint, cam.view_dir));
  cam.width = width;
  cam.height = width;
  cam.center = box.center();
  const Vec3 half = box.extent() * 0.5;
  auto projected_half = [&](const Vec3& axis) {
    return std::abs(axis.x) * half.x + std::abs(axis.y) * half.y + std::abs(axis.z) * half.z;
  };
  cam.extent = margin * 2.0 * std::max(projected_half(cam.right()), projected_half(cam.up));
  cam.near = projected_half(cam.view_dir);
  cam.validate();
  return cam;
}

enum class ViewName { kFront, kBack, kLeft, kRight, kTop, kBottom };

inline constexpr std::array<ViewName, 6> kCanonicalViews = {ViewName::kFront, ViewName::kBack, ViewName::kLeft,
                                                            ViewName::kRight, ViewName::kTop, ViewName::kBottom};

inline const char* view_file_stem(ViewName v) {
  switch (v) {
    case ViewName::kFront: return "front";
    case ViewName::kBack: return "back";
    case ViewName::kLeft: return "left";
    case ViewName::kRight: return "right";
    case ViewName::kTop: return "top";
    case ViewName::kBottom: return "bottom";
  }
  return "?";
}

/// Front looks along +Y, left along +X, top along -Z. Up is +Z for the four
/// side views and +Y for top/bottom.
inline std::pair<Vec3, Vec3> view_axes(ViewName v) {
  switch (v) {
    case ViewName::kFront: return {{0, 1, 0}, {0, 0, 1}};
    case ViewName::kBack: return {{0, -1, 0}, {0, 0, 1}};
    case ViewName::kLeft: return {{1, 0, 0}, {0, 0, 1}};
    case ViewName::kRight: return {{-1, 0, 0}, {0, 0, 1}};
    case ViewName::kTop: return {{0, 0, -1}, {0, 1, 0}};
    case ViewName::kBottom: return {{0, 0, 1}, {0, 1, 0}};
  }
  return {{0, 1, 0}, {0, 0, 1}};
}

inline OrthoCamera canonical_camera(ViewName v, const Box3& box, int width, double margin = 1.1) {
  const auto [dir, up] = view_axes(v);
  return fit_camera(dir, up, box, width, margin);
}

/// The eight corner-diagonal views (±1,±1,±1)/√3 with up derived from +Z.
inline std::vector<OrthoCamera> diagonal_cameras(const Box3& box, int width, double margin = 1.1) {
  std::vector<OrthoCamera> cams;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) cams.push_back(fit_camera(Vec3(sx, sy, sz), Vec3(0, 0, 1), box, width, margin));
  return cams;
}

struct ViewRaster {
  Image<Rgb> color;
  Image<double> depth;  // +inf where uncovered
  Image<uint8_t> coverage;

  int width() const { return color.width; }
  int height() const { return color.height; }
};

/// Z-buffered orthographic rasterization sampling pixel centers. Colors are the
/// barycentric interpolation of vertex colors of the nearest triangle.
inline ViewRaster rasterize(const Mesh& mesh, const OrthoCamera& cam) {
  const int W = cam.width, H = cam.height;
  ViewRaster out{Image<Rgb>(W, H), Image<double>(W, H, std::numeric_limits<double>::infinity()),
                 Image<uint8_t>(W, H, 0)};
  std::vector<Vec3> proj(mesh.vertices.size());
  for (size_t i = 0; i < proj.size(); ++i) proj[i] = cam.project(mesh.vertices[i]);

  for (const auto& tri : mesh.triangles) {
    const Vec3& a = proj[tri[0]];
    const Vec3& b = proj[tri[1]];
    const Vec3& c = proj[tri[2]];
    const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if (std::abs(area) < 1e-14) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}) - 0.5)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}) - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double w0 = ((b.x - px) * (c.y - py) - (b.y - py) * (c.x - px)) / area;
        const double w1 = ((c.x - px) * (a.y - py) - (c.y - py) * (a.x - px)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double depth = w0 * a.z + w1 * b.z + w2 * c.z;
        if (depth >= out.depth(x, y)) continue;
        out.depth(x, y) = depth;
        out.coverage(x, y) = 1;
        out.color(x, y) = detail::clamp_color(mesh.vertex_colors[tri[0]] * w0 + mesh.vertex_colors[tri[1]] * w1 +
                                              mesh.vertex_colors[tri[2]] * w2);
      }
    }
  }
  return out;
}

}  // namespace voxify
