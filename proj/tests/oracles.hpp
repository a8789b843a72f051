#pragma once

// Reference implementations used only by tests. Each one is written without
// calling the library routine it checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "voxify/voxify.hpp"

namespace voxify::oracle {

/// Ray/box entry and exit by direct slab arithmetic; false on a miss.
inline bool ray_box(const Box3& b, const Ray& r, double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = r.origin[a], d = r.dir[a];
    if (d == 0.0) {
      if (o < b.lo[a] || o > b.hi[a]) return false;
      continue;
    }
    double ta = (b.lo[a] - o) / d, tb = (b.hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

/// Voxel containing p by flooring, or -1 outside the grid.
inline long voxel_at(const GridSpec& s, const Vec3& p) {
  const Vec3 lo = s.grid_box().lo;
  int ijk[3];
  for (int a = 0; a < 3; ++a) {
    ijk[a] = static_cast<int>(std::floor((p[a] - lo[a]) / s.voxel_edge));
    if (ijk[a] < 0 || ijk[a] >= s.resolution[a]) return -1;
  }
  return static_cast<long>(s.linear(ijk[0], ijk[1], ijk[2]));
}

struct DenseResult {
  Rgb color;
  double acc_alpha = 0.0;
  double depth = 0.0;
};

/// Emission-absorption quadrature with `samples` equal midpoint steps over
/// ray ∩ grid box.
template <typename Real>
DenseResult dense_render(const GridSpec& s, const Ray& r, const DensityGrid<Real>& density,
                         const std::vector<Rgb>& colors, int samples = 10000) {
  DenseResult out;
  double t0, t1;
  if (!ray_box(s.grid_box(), r, t0, t1)) return out;
  const double dt = (t1 - t0) / samples;
  double T = 1.0;
  for (int i = 0; i < samples; ++i) {
    const double t = t0 + (i + 0.5) * dt;
    const long v = voxel_at(s, r.origin + r.dir * t);
    if (v < 0) continue;
    const double a = 1.0 - std::exp(-softplus(static_cast<double>(density.raw[v])) * dt);
    out.color += colors[v] * (T * a);
    out.depth += T * a * t;
    T *= 1.0 - a;
  }
  out.acc_alpha = 1.0 - T;
  return out;
}

/// Per-voxel path length estimated by `steps` midpoint samples.
inline std::vector<double> sampled_lengths(const GridSpec& s, const Ray& r, int steps = 100000) {
  std::vector<double> len(s.voxel_count(), 0.0);
  double t0, t1;
  if (!ray_box(s.grid_box(), r, t0, t1)) return len;
  const double dt = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const long v = voxel_at(s, r.origin + r.dir * (t0 + (i + 0.5) * dt));
    if (v >= 0) len[v] += dt;
  }
  return len;
}

/// Plain Lloyd k-means on points from a random C-subset start.
inline std::vector<Rgb> lloyd(const std::vector<Rgb>& pts, int C, Rng& rng) {
  std::vector<Rgb> c;
  std::vector<size_t> order(pts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int k = 0; k < C; ++k) {
    const size_t j = k + rng.below(order.size() - k);
    std::swap(order[k], order[j]);
    c.push_back(pts[order[k]]);
  }
  for (int it = 0; it < 200; ++it) {
    std::vector<Rgb> sum(C);
    std::vector<int> n(C, 0);
    for (const Rgb& p : pts) {
      int best = 0;
      for (int k = 1; k < C; ++k)
        if (squared_distance(p, c[k]) < squared_distance(p, c[best])) best = k;
      sum[best] += p;
      ++n[best];
    }
    bool moved = false;
    for (int k = 0; k < C; ++k)
      if (n[k] > 0) {
        const Rgb next = sum[k] / n[k];
        moved = moved || !(next == c[k]);
        c[k] = next;
      }
    if (!moved) break;
  }
  return c;
}

inline double sse(const std::vector<Rgb>& pts, const std::vector<Rgb>& centers) {
  double e = 0.0;
  for (const Rgb& p : pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const Rgb& c : centers) best = std::min(best, squared_distance(p, c));
    e += best;
  }
  return e;
}

/// Lowest-SSE result over `restarts` random starts.
inline std::vector<Rgb> best_kmeans(const std::vector<Rgb>& pts, int C, int restarts, uint64_t seed) {
  Rng rng(seed);
  std::vector<Rgb> best;
  double best_e = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    auto c = lloyd(pts, C, rng);
    const double e = sse(pts, c);
    if (e < best_e) {
      best_e = e;
      best = c;
    }
  }
  return best;
}

/// Largest minimum pairwise distance over all 2-subsets.
inline double best_pair_separation(const std::vector<Rgb>& colors) {
  double best = 0.0;
  for (size_t i = 0; i < colors.size(); ++i)
    for (size_t j = i + 1; j < colors.size(); ++j) best = std::max(best, distance(colors[i], colors[j]));
  return best;
}

/// Three σ=0.01 blobs around the primaries, `per_blob` points each.
inline std::vector<Rgb> three_blobs(int per_blob, uint64_t seed) {
  Rng rng(seed);
  std::vector<Rgb> pts;
  for (const Rgb& c : {Rgb(1, 0, 0), Rgb(0, 1, 0), Rgb(0, 0, 1)})
    for (int i = 0; i < per_blob; ++i) pts.push_back(c + Rgb(rng.normal(), rng.normal(), rng.normal()) * 0.01);
  return pts;
}

/// Ray/triangle test (Möller–Trumbore); returns the smallest barycentric
/// coordinate, negative on a miss.
inline double ray_triangle_margin(const Ray& r, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = cross(r.dir, e2);
  const double det = dot(e1, p);
  if (std::abs(det) < 1e-15) return -1.0;
  const Vec3 s = r.origin - a;
  const double u = dot(s, p) / det;
  const Vec3 q = cross(s, e1);
  const double v = dot(r.dir, q) / det;
  return std::min({u, v, 1.0 - u - v});
}

}  // namespace voxify::oracle
