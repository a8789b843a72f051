#pragma once

// Emission-absorption volume rendering over exact ray segments and its
// analytic adjoint.
//
//   C = Σ_k T_k α_k c_k,  α_k = 1 − exp(−d_k δ_k),  T_k = exp(−Σ_{j<k} d_j δ_j)
//   D = Σ_k T_k α_k t_mid,k        ᾱ = 1 − Π_k (1 − α_k)

#include <span>
#include <vector>

#include "voxgrid.hpp"

namespace voxify {

struct RenderOptions {
  /// Stop marching once transmittance falls below this value (0 disables).
  double transmittance_cutoff = 0.0;
};

struct RenderOutput {
  Rgb color;
  double depth = 0.0;
  double acc_alpha = 0.0;
  double final_transmittance = 1.0;
  // Backward cache: T_k and α_k for the segments actually composited.
  std::vector<double> transmittance;
  std::vector<double> alpha;
  bool has_cache = false;
};

template <typename Real>
void render_ray(const RaySegmentList& segs, const DensityGrid<Real>& density, std::span<const Rgb> colors,
                const RenderOptions& opt, RenderOutput& out) {
  out.color = {};
  out.depth = 0.0;
  out.transmittance.clear();
  out.alpha.clear();
  double T = 1.0;
  for (const RaySegment& s : segs) {
    if (T < opt.transmittance_cutoff) break;
    const double sigma = density.density(s.voxel) * s.length();
    const double a = -std::expm1(-sigma);
    const double w = T * a;
    out.color += colors[s.voxel] * w;
    out.depth += w * s.t_mid();
    out.transmittance.push_back(T);
    out.alpha.push_back(a);
    T *= std::exp(-sigma);
  }
  out.final_transmittance = T;
  out.acc_alpha = 1.0 - T;
  out.has_cache = true;
}

template <typename Real>
RenderOutput render_color(const RaySegmentList& segs, const DensityGrid<Real>& density, std::span<const Rgb> colors,
                          const RenderOptions& opt = {}) {
  RenderOutput out;
  render_ray(segs, density, colors, opt, out);
  return out;
}

/// Unnormalized expected termination depth Σ T_k α_k t_mid,k (0 for empty rays).
template <typename Real>
double render_depth(const RaySegmentList& segs, const DensityGrid<Real>& density) {
  double T = 1.0, depth = 0.0;
  for (const RaySegment& s : segs) {
    const double sigma = density.density(s.voxel) * s.length();
    depth += T * -std::expm1(-sigma) * s.t_mid();
    T *= std::exp(-sigma);
  }
  return depth;
}

/// ∂L/∂(color, depth, ᾱ) for one ray.
struct RayGrad {
  Rgb color;
  double depth = 0.0;
  double acc_alpha = 0.0;

  bool is_zero() const { return color == Rgb{} && depth == 0.0 && acc_alpha == 0.0; }
};

/// Per-voxel accumulators for ∂L/∂(raw density) and ∂L/∂(activated RGB).
struct GradBuffer {
  std::vector<double> density;
  std::vector<double> color;  // 3 per voxel

  GradBuffer() = default;
  explicit GradBuffer(size_t voxels) : density(voxels, 0.0), color(3 * voxels, 0.0) {}

  void zero() {
    std::fill(density.begin(), density.end(), 0.0);
    std::fill(color.begin(), color.end(), 0.0);
  }
  GradBuffer& operator+=(const GradBuffer& o) {
    for (size_t i = 0; i < density.size(); ++i) density[i] += o.density[i];
    for (size_t i = 0; i < color.size(); ++i) color[i] += o.color[i];
    return *this;
  }
};

/// Accumulates the exact gradient of one ray's outputs into `grads`:
///   ∂C/∂c_k = T_k α_k
///   ∂L/∂σ_j = T_{j+1} e_j − Σ_{k>j} T_k α_k e_k + g_ᾱ T_{N+1},  e_k = g_C·c_k + g_D t_mid,k
/// followed by σ_j = softplus(raw_j) δ_j.
template <typename Real>
void backward(const RaySegmentList& segs, const RenderOutput& out, const DensityGrid<Real>& density,
              std::span<const Rgb> colors, const RayGrad& g, GradBuffer& grads) {
  if (!out.has_cache) throw Error(ErrorCode::kMissingCache, "backward called without a forward pass");
  if (g.is_zero()) return;
  const size_t n = out.alpha.size();
  double suffix = 0.0;  // Σ_{k>j} w_k e_k
  for (size_t jj = n; jj-- > 0;) {
    const RaySegment& s = segs[jj];
    const double T = out.transmittance[jj];
    const double a = out.alpha[jj];
    const double w = T * a;
    const Rgb& c = colors[s.voxel];
    const double e = dot(g.color, c) + g.depth * s.t_mid();
    const double T_next = T * (1.0 - a);
#ifdef VOXIFY_INJECT_SIGN_FLIP
    const double d_sigma = T_next * e + suffix + g.acc_alpha * out.final_transmittance;  // deliberate fault
#else
    const double d_sigma = T_next * e - suffix + g.acc_alpha * out.final_transmittance;
#endif
    suffix += w * e;
    const double raw = static_cast<double>(density.raw[s.voxel]);
    grads.density[s.voxel] += d_sigma * s.length() * sigmoid(raw);
    grads.color[3 * s.voxel] += w * g.color.x;
    grads.color[3 * s.voxel + 1] += w * g.color.y;
    grads.color[3 * s.voxel + 2] += w * g.color.z;
  }
}

}  // namespace voxify
