#pragma once

// Central finite-difference checks of the analytic gradients, run on small
// seeded grids through the full traversal + render + loss path.

#include <ostream>
#include <string>
#include <vector>

#include "objective.hpp"

namespace voxify {

enum class Precision { kF32, kF64 };

inline double gradient_tolerance(Precision p) { return p == Precision::kF32 ? 1e-3 : 1e-6; }

template <typename Real>
struct GradFixture {
  GridSpec spec;
  DensityGrid<Real> density;
  ColorGrid<Real> color;
  LogitGrid<Real> logits;
  Palette palette;
  std::vector<RaySample> rays;
  PatchSample patch;
};

/// 4³ grid over the unit cube, 20 random rays crossing it, an 8×8 patch.
inline GradFixture<double> make_grad_fixture(uint64_t seed, int resolution = 4, int rays = 20, int patch = 8) {
  Rng rng(seed);
  GradFixture<double> f;
  f.spec = make_grid_spec(Box3{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)}, resolution, 1);
  const size_t n = f.spec.voxel_count();
  f.density = DensityGrid<double>(f.spec, 0.0);
  for (double& r : f.density.raw) r = -2.0 + 3.5 * rng.uniform();
  f.color = ColorGrid<double>(f.spec, 0.0);
  for (double& r : f.color.raw) r = rng.normal();
  f.palette.colors = {{0.9, 0.1, 0.1}, {0.1, 0.8, 0.2}, {0.2, 0.3, 0.9}, {0.95, 0.9, 0.3}};
  f.logits = LogitGrid<double>(f.spec, f.palette.size());
  for (double& l : f.logits.values) l = rng.normal();
  (void)n;

  auto random_ray = [&] {
    // Aim at a random interior point from a random direction; start outside the box.
    const Vec3 target(rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5);
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    dir = normalized(dir);
    return Ray{target - dir * 2.0, dir};
  };
  for (int i = 0; i < rays; ++i) {
    RaySample s;
    s.ray = random_ray();
    s.target = {rng.uniform(), rng.uniform(), rng.uniform()};
    s.depth_gt = 1.0 + 2.0 * rng.uniform();
    s.covered = rng.uniform() < 0.7;
    s.background = rng.uniform() < 0.4;
    f.rays.push_back(s);
  }
  // Parallel rays on an axis-aligned square, like a camera patch.
  const Vec3 dir = normalized(Vec3(0.3, 1.0, -0.2));
  const Vec3 u = normalized(cross(dir, Vec3(0, 0, 1)));
  const Vec3 v = cross(u, dir);
  f.patch.target = Patch(patch);
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x) {
      const Vec3 o = u * ((x + 0.5) / patch - 0.5) * 0.9 + v * ((y + 0.5) / patch - 0.5) * 0.9 - dir * 2.0;
      f.patch.rays.push_back({o, dir});
      f.patch.target.at(x, y) = {rng.uniform(), rng.uniform(), rng.uniform()};
    }
  return f;
}

template <typename To, typename From>
GradFixture<To> cast_fixture(const GradFixture<From>& f) {
  GradFixture<To> t;
  t.spec = f.spec;
  t.density.spec = f.spec;
  t.density.raw = convert<To>(f.density.raw);
  t.color.spec = f.spec;
  t.color.raw = convert<To>(f.color.raw);
  t.logits.spec = f.spec;
  t.logits.colors = f.logits.colors;
  t.logits.values = convert<To>(f.logits.values);
  t.palette = f.palette;
  t.rays = f.rays;
  t.patch = f.patch;
  return t;
}

/// Which value block a check differentiates besides density.
enum class ValueBlock { kNone, kColor, kLogits };

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  size_t parameters = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const GradCheckEntry& e) { return e.pass; });
  }
  void print(std::ostream& os) const {
    for (const GradCheckEntry& e : entries)
      os << (e.pass ? "ok   " : "FAIL ") << e.name << "  max_rel_error=" << e.max_rel_error << "  tol=" << e.tolerance
         << "  params=" << e.parameters << '\n';
  }
};

/// rel_i = |a − n| / max(|a|, |n|, 1e-2 · max_j |n_j|); returns max_i rel_i.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-2 * scale});
    if (denom == 0.0) continue;
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

namespace detail {

template <typename Real>
std::vector<Real>* value_block(GradFixture<Real>& f, ValueBlock b) {
  switch (b) {
    case ValueBlock::kColor: return &f.color.raw;
    case ValueBlock::kLogits: return &f.logits.values;
    case ValueBlock::kNone: return nullptr;
  }
  return nullptr;
}

}  // namespace detail

/// Five-point central differences: truncation O(h⁴), so a step large enough
/// to keep round-off well below the f64 tolerance is usable.
/// `eval(fixture, grads*)` must be callable for GradFixture<float> and
/// GradFixture<double>; with grads != nullptr it fills ∂/∂density and ∂/∂values.
template <typename Eval>
GradCheckEntry check_gradient(const std::string& name, const GradFixture<double>& base, ValueBlock block,
                              Precision precision, Eval&& eval, double h = 1e-3) {
  std::vector<double> analytic;
  GradFixture<double> fd_base;
  ParamGrads g;
  if (precision == Precision::kF32) {
    GradFixture<float> f32 = cast_fixture<float>(base);
    eval(f32, &g);
    fd_base = cast_fixture<double>(f32);
  } else {
    fd_base = base;
    eval(fd_base, &g);
  }
  analytic = g.density;
  if (block != ValueBlock::kNone) analytic.insert(analytic.end(), g.values.begin(), g.values.end());

  std::vector<double> numeric;
  GradFixture<double> work = fd_base;
  auto probe = [&](std::vector<double>& params) {
    for (size_t i = 0; i < params.size(); ++i) {
      const double x = params[i];
      auto at = [&](double dx) {
        params[i] = x + dx;
        return eval(work, nullptr);
      };
      const double d = 8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h));
      params[i] = x;
      numeric.push_back(d / (12.0 * h));
    }
  };
  probe(work.density.raw);
  if (std::vector<double>* values = detail::value_block(work, block)) probe(*values);

  GradCheckEntry e;
  e.name = name;
  e.parameters = numeric.size();
  e.tolerance = gradient_tolerance(precision);
  if (analytic.size() != numeric.size()) {
    e.max_rel_error = std::numeric_limits<double>::infinity();
  } else {
    e.max_rel_error = max_relative_error(analytic, numeric);
  }
  e.pass = e.max_rel_error < e.tolerance;
  return e;
}

/// Every loss term in isolation plus both stage totals.
inline GradCheckReport run_gradient_checks(Precision precision, uint64_t seed = 0) {
  const GradFixture<double> base = make_grad_fixture(seed);
  const ObjectiveOptions opt{{0.0}, 4};
  GradCheckReport report;

  auto stage1 = [&](LossWeights w) {
    return [w, opt](auto& f, ParamGrads* g) {
      using Real = typename std::remove_reference_t<decltype(f.density.raw)>::value_type;
      const Stage1Params<Real> p{f.density, f.color};
      const EvalResult ev = evaluate_stage1(p, f.rays, w, 0, opt, g);
      return ev.total;
    };
  };

  // Depth loss uses the mask of the unperturbed f64 parameters throughout.
  std::vector<uint8_t> frozen_mask;
  {
    Stage2Inputs in;
    in.palette = &base.palette;
    const Stage2Params<double> p{base.density, base.logits};
    frozen_mask = evaluate_stage2(p, base.rays, LossWeights{}, in, opt, nullptr).depth_mask;
  }
  BuiltinEmbedder embedder;
  auto stage2 = [&](LossWeights w, bool patch) {
    return [w, patch, opt, &frozen_mask, &embedder](auto& f, ParamGrads* g) {
      using Real = typename std::remove_reference_t<decltype(f.density.raw)>::value_type;
      const Stage2Params<Real> p{f.density, f.logits};
      Stage2Inputs in;
      in.palette = &f.palette;
      in.quant = {0.7, QuantMode::kSoft, {17, QuantMode::kSoft}, 7};
      in.schedule_iter = 0;
      in.frozen_depth_mask = &frozen_mask;
      if (patch) {
        in.patch = &f.patch;
        in.embedder = &embedder;
      }
      return evaluate_stage2(p, f.rays, w, in, opt, g).total;
    };
  };
  auto only = [](double LossWeights::*field) {
    LossWeights w{};
    w.pixel = w.depth = w.depth_late = w.alpha = w.clip = w.bg = w.density_tv = 0.0;
    w.*field = 1.0;
    if (field == &LossWeights::depth) w.depth_late = 1.0;
    return w;
  };

  report.entries.push_back(check_gradient("pixel", base, ValueBlock::kLogits, precision, stage2(only(&LossWeights::pixel), false)));
  report.entries.push_back(check_gradient("depth", base, ValueBlock::kLogits, precision, stage2(only(&LossWeights::depth), false)));
  report.entries.push_back(check_gradient("alpha", base, ValueBlock::kLogits, precision, stage2(only(&LossWeights::alpha), false)));
  report.entries.push_back(
      check_gradient("semantic-builtin", base, ValueBlock::kLogits, precision, stage2(only(&LossWeights::clip), true)));
  report.entries.push_back(check_gradient("stage2-total", base, ValueBlock::kLogits, precision, stage2(LossWeights{}, true)));

  report.entries.push_back(check_gradient("tv", base, ValueBlock::kNone, precision, [](auto& f, ParamGrads* g) {
    const auto t = tv_loss(f.density);
    if (g) g->density = t.grad;
    return t.value;
  }));
  report.entries.push_back(check_gradient("bg-entropy", base, ValueBlock::kNone, precision, [opt](auto& f, ParamGrads* g) {
    const std::vector<Ray> rays = rays_of(f.rays);
    std::vector<RaySegmentList> segs;
    std::vector<RenderOutput> outs;
    const std::vector<Rgb> colors(f.spec.voxel_count());
    render_batch(f.spec, rays, f.density, colors, opt.render, segs, outs, opt.chunks);
    std::vector<double> acc(outs.size());
    for (size_t i = 0; i < outs.size(); ++i) acc[i] = outs[i].acc_alpha;
    const auto bg = bg_entropy_loss(acc);
    if (g) {
      std::vector<RayGrad> rg(outs.size());
      for (size_t i = 0; i < rg.size(); ++i) rg[i].acc_alpha = bg.grad[i];
      g->density = backward_batch(segs, outs, f.density, colors, rg, opt.chunks).density;
    }
    return bg.value;
  }));
  LossWeights s1w{};
  s1w.density_tv = 1.0;
  report.entries.push_back(check_gradient("stage1-total", base, ValueBlock::kColor, precision, stage1(s1w)));
  return report;
}

}  // namespace voxify
