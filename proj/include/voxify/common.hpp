#pragma once

// Shared value types for the voxify library: a small 3-vector, dense 2D images,
// the library error type and a counter-based hash RNG.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxify {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) { return v / norm(v); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }
constexpr double squared_distance(const Vec3& a, const Vec3& b) { return dot(a - b, a - b); }
constexpr Vec3 cwise_min(const Vec3& a, const Vec3& b) {
  return {a.x < b.x ? a.x : b.x, a.y < b.y ? a.y : b.y, a.z < b.z ? a.z : b.z};
}
constexpr Vec3 cwise_max(const Vec3& a, const Vec3& b) {
  return {a.x > b.x ? a.x : b.x, a.y > b.y ? a.y : b.y, a.z > b.z ? a.z : b.z};
}
constexpr bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  return a.z < b.z;
}

/// Linear RGB triple; components nominally in [0,1].
using Rgb = Vec3;

struct Box3 {
  Vec3 lo;
  Vec3 hi;

  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return (lo + hi) * 0.5; }
  double longest_side() const {
    const Vec3 e = extent();
    return std::max({e.x, e.y, e.z});
  }
};

enum class ErrorCode {
  kUnreadableFile,
  kMissingColors,
  kEmptyMesh,
  kMalformedFile,
  kDegenerateMesh,
  kIndivisible,
  kMissingAlpha,
  kInsufficientColors,
  kInvalidArgument,
  kResolutionMismatch,
  kDimensionTooLarge,
  kMissingCache,
  kDiverged,
  kExternalProcess,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnreadableFile: return "unreadable file";
    case ErrorCode::kMissingColors: return "missing vertex colors";
    case ErrorCode::kEmptyMesh: return "empty mesh";
    case ErrorCode::kMalformedFile: return "malformed file";
    case ErrorCode::kDegenerateMesh: return "degenerate mesh";
    case ErrorCode::kIndivisible: return "dimensions not divisible by cell size";
    case ErrorCode::kMissingAlpha: return "missing alpha channel";
    case ErrorCode::kInsufficientColors: return "insufficient distinct colors";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kResolutionMismatch: return "resolution mismatch";
    case ErrorCode::kDimensionTooLarge: return "dimension too large";
    case ErrorCode::kMissingCache: return "missing forward cache";
    case ErrorCode::kDiverged: return "optimization diverged";
    case ErrorCode::kExternalProcess: return "external process failure";
  }
  return "unknown error";
}

/// Every recoverable failure in the library is reported as an Error carrying a
/// machine-checkable code plus a human readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Dense row-major H×W image of arbitrary pixel type.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, const T& fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  T& operator()(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const T& operator()(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }
  bool operator==(const Image&) const = default;
};

// splitmix64 finalizer; the basis of all counter-based randomness.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr uint64_t hash_combine(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

/// Maps 64 random bits to a double in [0,1).
constexpr double to_unit(uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Small deterministic generator with platform-independent output, used instead
/// of <random> distributions whose results vary between standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }
  double uniform() { return to_unit(next()); }
  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n == 0 ? 0 : static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n; }
  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  uint64_t state_;
};

using WarningSink = std::function<void(const std::string&)>;

/// Destination of non-fatal diagnostics; replaceable (tests capture it).
inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

inline void warn(const std::string& msg) { warning_sink()(msg); }

inline double softplus(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y > 20.0 ? y : std::log(std::expm1(y)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace voxify
