#pragma once

// Loss terms with their gradients w.r.t. rendered quantities, the density TV
// regularizer and the iteration-dependent weighting.
//
// Conventions: batch losses are means over rays; color losses sum channels.

#include <span>
#include <vector>

#include "embed.hpp"
#include "voxgrid.hpp"

namespace voxify {

template <typename G>
struct LossTerm {
  double value = 0.0;
  std::vector<G> grad;
};

/// mean_r Σ_c (ŷ − y)²
inline LossTerm<Rgb> pixel_loss(std::span<const Rgb> rendered, std::span<const Rgb> target) {
  LossTerm<Rgb> out{0.0, std::vector<Rgb>(rendered.size())};
  if (rendered.empty()) return out;
  const double inv = 1.0 / static_cast<double>(rendered.size());
  for (size_t i = 0; i < rendered.size(); ++i) {
    const Rgb d = rendered[i] - target[i];
    out.value += dot(d, d) * inv;
    out.grad[i] = d * (2.0 * inv);
  }
  return out;
}

/// Mean |D − D_gt| over rays where mask != 0.
inline LossTerm<double> depth_loss(std::span<const double> depth, std::span<const double> gt,
                                   std::span<const uint8_t> mask) {
  LossTerm<double> out{0.0, std::vector<double>(depth.size(), 0.0)};
  size_t count = 0;
  for (uint8_t m : mask) count += m ? 1 : 0;
  if (count == 0) return out;
  const double inv = 1.0 / static_cast<double>(count);
  for (size_t i = 0; i < depth.size(); ++i) {
    if (!mask[i]) continue;
    const double d = depth[i] - gt[i];
    out.value += std::abs(d) * inv;
    out.grad[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  return out;
}

/// Depth supervision mask: pixel-art foreground with mesh depth available, and ᾱ above 0.1.
inline constexpr double kDepthAlphaThreshold = 0.1;

inline uint8_t depth_mask(bool foreground, double acc_alpha) { return foreground && acc_alpha > kDepthAlphaThreshold; }

/// mean_r (M_α ᾱ)², M_α = 1 on background rays.
inline LossTerm<double> alpha_loss(std::span<const double> acc_alpha, std::span<const uint8_t> background) {
  LossTerm<double> out{0.0, std::vector<double>(acc_alpha.size(), 0.0)};
  if (acc_alpha.empty()) return out;
  const double inv = 1.0 / static_cast<double>(acc_alpha.size());
  for (size_t i = 0; i < acc_alpha.size(); ++i) {
    if (!background[i]) continue;
    out.value += acc_alpha[i] * acc_alpha[i] * inv;
    out.grad[i] = 2.0 * acc_alpha[i] * inv;
  }
  return out;
}

/// Mean binary entropy of ᾱ, clamped to [1e-6, 1 − 1e-6].
inline LossTerm<double> bg_entropy_loss(std::span<const double> acc_alpha) {
  LossTerm<double> out{0.0, std::vector<double>(acc_alpha.size(), 0.0)};
  if (acc_alpha.empty()) return out;
  constexpr double lo = 1e-6, hi = 1.0 - 1e-6;
  const double inv = 1.0 / static_cast<double>(acc_alpha.size());
  for (size_t i = 0; i < acc_alpha.size(); ++i) {
    const double a = std::clamp(acc_alpha[i], lo, hi);
    out.value += -(a * std::log(a) + (1.0 - a) * std::log(1.0 - a)) * inv;
    if (acc_alpha[i] > lo && acc_alpha[i] < hi) out.grad[i] = (std::log(1.0 - a) - std::log(a)) * inv;
  }
  return out;
}

/// Mean over axes (that have neighbours) of the mean squared difference of
/// activated density between face-adjacent voxels. Gradient is w.r.t. raw density.
template <typename Real>
LossTerm<double> tv_loss(const DensityGrid<Real>& grid) {
  const GridSpec& s = grid.spec;
  LossTerm<double> out{0.0, std::vector<double>(s.voxel_count(), 0.0)};
  std::vector<double> d(s.voxel_count());
  for (size_t v = 0; v < d.size(); ++v) d[v] = grid.density(v);
  std::vector<double> dd(s.voxel_count(), 0.0);  // ∂/∂(activated density)
  int axes = 0;
  for (int a = 0; a < 3; ++a) axes += s.resolution[a] > 1;
  if (axes == 0) return out;
  for (int a = 0; a < 3; ++a) {
    if (s.resolution[a] < 2) continue;
    Index3 r = s.resolution;
    const size_t pairs = s.voxel_count() / r[a] * (r[a] - 1);
    const double w = 1.0 / (static_cast<double>(pairs) * axes);
    for (int k = 0; k < r[2]; ++k)
      for (int j = 0; j < r[1]; ++j)
        for (int i = 0; i < r[0]; ++i) {
          Index3 q{i, j, k};
          if (q[a] + 1 >= r[a]) continue;
          Index3 n = q;
          ++n[a];
          const size_t v0 = s.linear(q[0], q[1], q[2]);
          const size_t v1 = s.linear(n[0], n[1], n[2]);
          const double diff = d[v1] - d[v0];
          out.value += diff * diff * w;
          dd[v1] += 2.0 * diff * w;
          dd[v0] -= 2.0 * diff * w;
        }
  }
  for (size_t v = 0; v < dd.size(); ++v) out.grad[v] = dd[v] * sigmoid(static_cast<double>(grid.raw[v]));
  return out;
}

/// 1 − cos(e(rendered), e(target)); nullopt when the embedder skips this call.
inline std::optional<SemanticResult> semantic_loss(const Patch& rendered, const Patch& target, Embedder& embedder) {
  return embedder.loss_and_grad(rendered, target);
}

/// Loss weights; λ_depth and λ_clip are step functions of the iteration.
struct LossWeights {
  double pixel = 10.0;
  double depth = 20.0;
  double depth_late = 30.0;
  int depth_switch_iter = 4500;
  double alpha = 20.0;
  double clip = 1.0;
  int clip_until_iter = 6000;
  double bg = 0.5;
  double density_tv = 0.0;

  double depth_at(int iter) const { return iter < depth_switch_iter ? depth : depth_late; }
  double clip_at(int iter) const { return iter < clip_until_iter ? clip : 0.0; }

  void validate() const {
    for (double w : {pixel, depth, depth_late, alpha, clip, bg, density_tv})
      if (!(w >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "loss weights must be non-negative");
  }
};

enum class Stage { kCoarse = 1, kPixelArt = 2 };

/// Raw (unweighted) loss values for one iteration.
struct LossParts {
  double render = 0.0;  // stage 1 color MSE
  double tv = 0.0;
  double bg = 0.0;
  double pixel = 0.0;
  double depth = 0.0;
  double alpha = 0.0;
  double semantic = 0.0;
};

/// Multipliers applied to each part at a given stage and iteration.
inline LossParts loss_multipliers(const LossWeights& w, Stage stage, int iter) {
  LossParts m;
  if (stage == Stage::kCoarse) {
    m.render = 1.0;
    m.tv = w.density_tv;
    m.bg = w.bg;
  } else {
    m.pixel = w.pixel;
    m.depth = w.depth_at(iter);
    m.alpha = w.alpha;
    m.semantic = w.clip_at(iter);
  }
  return m;
}

/// Stage 1: L_render + λ_d TV + λ_b L_bg.
/// Stage 2: λ_pixel L_pixel + λ_depth(iter) L_depth + λ_alpha L_alpha + λ_clip(iter) L_sem.
inline double total_loss(const LossWeights& w, Stage stage, int iter, const LossParts& p) {
  const LossParts m = loss_multipliers(w, stage, iter);
  return m.render * p.render + m.tv * p.tv + m.bg * p.bg + m.pixel * p.pixel + m.depth * p.depth + m.alpha * p.alpha +
         m.semantic * p.semantic;
}

}  // namespace voxify
