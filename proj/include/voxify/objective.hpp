#pragma once

// Per-iteration objectives of both training stages: render a ray batch,
// evaluate the weighted losses, and pull gradients back to the raw grid
// parameters. Shared by the trainer and the finite-difference checker.

#include <optional>
#include <span>
#include <vector>

#include "losses.hpp"
#include "parallel.hpp"
#include "quantizer.hpp"
#include "renderer.hpp"

namespace voxify {

/// One supervised ray.
struct RaySample {
  Ray ray;
  Rgb target;             // stage 1: mesh color on white; stage 2: pixel-art cell color
  double depth_gt = 0.0;  // distance along the ray from the image plane
  uint8_t covered = 0;    // mesh coverage at this pixel
  uint8_t background = 0; // pixel-art alpha mask (1 = background)
};

/// Square block of rays rendered as an image for the semantic loss.
struct PatchSample {
  std::vector<Ray> rays;  // row-major size×size
  Patch target;
};

template <typename Real>
struct Stage1Params {
  DensityGrid<Real> density;
  ColorGrid<Real> color;
};

template <typename Real>
struct Stage2Params {
  DensityGrid<Real> density;
  LogitGrid<Real> logits;
};

/// Gradients w.r.t. raw parameters: density, then either RGB logits (stage 1)
/// or palette logits (stage 2).
struct ParamGrads {
  std::vector<double> density;
  std::vector<double> values;
};

struct EvalResult {
  LossParts parts;
  double total = 0.0;
  bool semantic_applied = false;
  std::vector<uint8_t> depth_mask;  // mask actually used by the depth loss
  std::vector<RenderOutput> outputs;
};

/// Renders every ray of `batch`, keeping forward caches.
template <typename Real>
void render_batch(const GridSpec& spec, std::span<const Ray> rays, const DensityGrid<Real>& density,
                  std::span<const Rgb> colors, const RenderOptions& opt, std::vector<RaySegmentList>& segs,
                  std::vector<RenderOutput>& outs, int chunks) {
  segs.resize(rays.size());
  outs.resize(rays.size());
  parallel_chunks(chunks, [&](int c) {
    const auto [b, e] = chunk_range(rays.size(), chunks, c);
    for (size_t i = b; i < e; ++i) {
      traverse_into(spec, rays[i], segs[i]);
      render_ray(segs[i], density, colors, opt, outs[i]);
    }
  });
}

/// Backpropagates per-ray gradients into one buffer; chunk partials are summed
/// in chunk order so the result is independent of the thread count.
template <typename Real>
GradBuffer backward_batch(const std::vector<RaySegmentList>& segs, const std::vector<RenderOutput>& outs,
                          const DensityGrid<Real>& density, std::span<const Rgb> colors, std::span<const RayGrad> grads,
                          int chunks) {
  const size_t voxels = density.spec.voxel_count();
  std::vector<GradBuffer> partial(chunks, GradBuffer(voxels));
  parallel_chunks(chunks, [&](int c) {
    const auto [b, e] = chunk_range(segs.size(), chunks, c);
    for (size_t i = b; i < e; ++i) backward(segs[i], outs[i], density, colors, grads[i], partial[c]);
  });
  for (int c = 1; c < chunks; ++c) partial[0] += partial[c];
  return std::move(partial[0]);
}

struct ObjectiveOptions {
  RenderOptions render;
  int chunks = 8;
};

inline std::vector<Ray> rays_of(std::span<const RaySample> batch) {
  std::vector<Ray> r(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) r[i] = batch[i].ray;
  return r;
}

/// Stage 1: L_render (white background composite) + λ_d TV + λ_b entropy.
template <typename Real>
EvalResult evaluate_stage1(const Stage1Params<Real>& p, std::span<const RaySample> batch, const LossWeights& w,
                           int iter, const ObjectiveOptions& opt, ParamGrads* grads) {
  const GridSpec& spec = p.density.spec;
  const size_t voxels = spec.voxel_count();
  std::vector<Rgb> colors(voxels);
  for (size_t v = 0; v < voxels; ++v) colors[v] = p.color.rgb(v);

  EvalResult res;
  std::vector<RaySegmentList> segs;
  const std::vector<Ray> rays = rays_of(batch);
  render_batch(spec, rays, p.density, colors, opt.render, segs, res.outputs, opt.chunks);

  const size_t B = batch.size();
  std::vector<Rgb> composite(B), target(B);
  std::vector<double> acc(B);
  for (size_t i = 0; i < B; ++i) {
    const RenderOutput& o = res.outputs[i];
    composite[i] = o.color + Rgb(1, 1, 1) * (1.0 - o.acc_alpha);
    target[i] = batch[i].target;
    acc[i] = o.acc_alpha;
  }
  const auto render = pixel_loss(composite, target);
  const auto bg = bg_entropy_loss(acc);
  const LossParts m = loss_multipliers(w, Stage::kCoarse, iter);
  res.parts.render = render.value;
  res.parts.bg = bg.value;
  std::optional<LossTerm<double>> tv;
  if (m.tv > 0.0 || grads == nullptr) {
    tv = tv_loss(p.density);
    res.parts.tv = tv->value;
  }
  res.total = total_loss(w, Stage::kCoarse, iter, res.parts);
  if (!grads) return res;

  std::vector<RayGrad> rg(B);
  for (size_t i = 0; i < B; ++i) {
    const Rgb gc = render.grad[i] * m.render;
    rg[i].color = gc;
    rg[i].acc_alpha = -(gc.x + gc.y + gc.z) + m.bg * bg.grad[i];
  }
  GradBuffer buf = backward_batch(segs, res.outputs, p.density, colors, rg, opt.chunks);
  grads->density = std::move(buf.density);
  if (tv && m.tv > 0.0)
    for (size_t v = 0; v < voxels; ++v) grads->density[v] += m.tv * tv->grad[v];
  grads->values.assign(3 * voxels, 0.0);
  for (size_t v = 0; v < voxels; ++v) {
    const Rgb c = colors[v];
    grads->values[3 * v] = buf.color[3 * v] * c.x * (1.0 - c.x);
    grads->values[3 * v + 1] = buf.color[3 * v + 1] * c.y * (1.0 - c.y);
    grads->values[3 * v + 2] = buf.color[3 * v + 2] * c.z * (1.0 - c.z);
  }
  return res;
}

/// Per-iteration quantizer state of stage 2.
struct QuantizerState {
  double tau = 1.0;
  QuantMode mode = QuantMode::kSoft;
  GumbelSampler sampler;
  int noise_iteration = 0;
};

/// Per-voxel colors under the quantizer, with the soft weights needed for the
/// backward pass stored flat (C per voxel).
template <typename Real>
struct QuantizedColors {
  std::vector<Rgb> rgb;
  std::vector<double> soft;
  std::vector<int> selected;

  void compute(const LogitGrid<Real>& logits, const Palette& palette, const QuantizerState& q) {
    const size_t voxels = logits.spec.voxel_count();
    const int C = logits.colors;
    rgb.resize(voxels);
    soft.resize(voxels * C);
    selected.resize(voxels);
    std::vector<double> noise(C);
    VoxelColor vc;
    for (size_t v = 0; v < voxels; ++v) {
      sample_gumbel(q.sampler, q.noise_iteration, v, noise);
      voxel_color<Real>(logits.logits(v), palette, q.tau, q.mode, noise, vc);
      rgb[v] = vc.rgb;
      std::copy(vc.soft.begin(), vc.soft.end(), soft.begin() + static_cast<long>(v * C));
      selected[v] = vc.selected;
    }
  }
};

struct Stage2Inputs {
  const Palette* palette = nullptr;
  QuantizerState quant;
  int schedule_iter = 0;  // iteration used for the weight schedule
  const PatchSample* patch = nullptr;
  Embedder* embedder = nullptr;
  const std::vector<uint8_t>* frozen_depth_mask = nullptr;
};

/// Stage 2: λ_pixel L_pixel (foreground rays) + λ_depth L_depth + λ_alpha L_alpha
/// + λ_clip L_sem on a rendered patch composited on white.
template <typename Real>
EvalResult evaluate_stage2(const Stage2Params<Real>& p, std::span<const RaySample> batch, const LossWeights& w,
                           const Stage2Inputs& in, const ObjectiveOptions& opt, ParamGrads* grads) {
  const GridSpec& spec = p.density.spec;
  const Palette& palette = *in.palette;
  const size_t voxels = spec.voxel_count();
  const int C = p.logits.colors;
  QuantizedColors<Real> qc;
  qc.compute(p.logits, palette, in.quant);

  EvalResult res;
  std::vector<RaySegmentList> segs;
  const std::vector<Ray> rays = rays_of(batch);
  render_batch(spec, rays, p.density, qc.rgb, opt.render, segs, res.outputs, opt.chunks);

  const size_t B = batch.size();
  std::vector<Rgb> fg_rendered, fg_target;
  std::vector<size_t> fg_index;
  std::vector<double> depth(B), gt(B), acc(B);
  std::vector<uint8_t> bgmask(B);
  res.depth_mask.resize(B);
  for (size_t i = 0; i < B; ++i) {
    const RenderOutput& o = res.outputs[i];
    if (!batch[i].background) {
      fg_rendered.push_back(o.color);
      fg_target.push_back(batch[i].target);
      fg_index.push_back(i);
    }
    depth[i] = o.depth;
    gt[i] = batch[i].depth_gt;
    acc[i] = o.acc_alpha;
    bgmask[i] = batch[i].background;
    res.depth_mask[i] = in.frozen_depth_mask ? (*in.frozen_depth_mask)[i] : depth_mask(batch[i].covered && !batch[i].background, o.acc_alpha);
  }
  const auto pix = pixel_loss(fg_rendered, fg_target);
  const auto dep = depth_loss(depth, gt, res.depth_mask);
  const auto alp = alpha_loss(acc, bgmask);
  const LossParts m = loss_multipliers(w, Stage::kPixelArt, in.schedule_iter);
  res.parts.pixel = pix.value;
  res.parts.depth = dep.value;
  res.parts.alpha = alp.value;

  // Semantic patch.
  std::vector<RaySegmentList> psegs;
  std::vector<RenderOutput> pouts;
  std::optional<SemanticResult> sem;
  if (in.patch && in.embedder && m.semantic > 0.0) {
    render_batch(spec, in.patch->rays, p.density, qc.rgb, opt.render, psegs, pouts, opt.chunks);
    Patch rendered(in.patch->target.size);
    for (size_t i = 0; i < pouts.size(); ++i)
      rendered.pixels[i] = pouts[i].color + Rgb(1, 1, 1) * (1.0 - pouts[i].acc_alpha);
    sem = semantic_loss(rendered, in.patch->target, *in.embedder);
    if (sem) {
      res.parts.semantic = sem->loss;
      res.semantic_applied = true;
    }
  }
  res.total = total_loss(w, Stage::kPixelArt, in.schedule_iter, res.parts);
  if (!grads) return res;

  std::vector<RayGrad> rg(B);
  for (size_t f = 0; f < fg_index.size(); ++f) rg[fg_index[f]].color = pix.grad[f] * m.pixel;
  for (size_t i = 0; i < B; ++i) {
    rg[i].depth = m.depth * dep.grad[i];
    rg[i].acc_alpha = m.alpha * alp.grad[i];
  }
  GradBuffer buf = backward_batch(segs, res.outputs, p.density, qc.rgb, rg, opt.chunks);
  if (sem) {
    std::vector<RayGrad> pg(pouts.size());
    for (size_t i = 0; i < pouts.size(); ++i) {
      const Rgb g = sem->grad[i] * m.semantic;
      pg[i].color = g;
      pg[i].acc_alpha = -(g.x + g.y + g.z);
    }
    buf += backward_batch(psegs, pouts, p.density, qc.rgb, pg, opt.chunks);
  }
  grads->density = std::move(buf.density);
  grads->values.assign(voxels * C, 0.0);
  VoxelColor vc;
  for (size_t v = 0; v < voxels; ++v) {
    const Rgb g(buf.color[3 * v], buf.color[3 * v + 1], buf.color[3 * v + 2]);
    if (g == Rgb{}) continue;
    vc.soft.assign(qc.soft.begin() + static_cast<long>(v * C), qc.soft.begin() + static_cast<long>((v + 1) * C));
    logit_grad(vc, palette, in.quant.tau, g, std::span<double>(grads->values.data() + v * C, C));
  }
  return res;
}

}  // namespace voxify
