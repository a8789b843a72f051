#pragma once

// Two-stage optimization and the end-to-end pipeline.
//
// Stage 1 fits density + RGB grids to rasterized mesh views. Stage 2
// fine-tunes density + palette logits against six pixel-art views with the
// Gumbel-Softmax quantizer.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "exportio.hpp"
#include "objective.hpp"
#include "pixelart.hpp"

#ifndef VOXIFY_VERSION
#define VOXIFY_VERSION "0.1.0"
#endif

namespace voxify {

inline constexpr const char* kVersion = VOXIFY_VERSION;

/// Side of the cubic region shared by the grid and the canonical cameras, for
/// a mesh normalized to unit longest side.
inline constexpr double kSceneExtent = 1.1;

inline Box3 scene_box() {
  const double h = 0.5 * kSceneExtent;
  return {Vec3(-h, -h, -h), Vec3(h, h, h)};
}

/// Canonical cameras frame the scene cube exactly, so pixel cells line up
/// with voxel faces.
inline OrthoCamera scene_camera(ViewName v, int width) { return canonical_camera(v, scene_box(), width, 1.0); }

/// Grid spec recovered from checkpoint dimensions (pipeline layout).
inline GridSpec scene_grid_spec(const Index3& dims) {
  GridSpec s;
  s.resolution = dims;
  s.bbox = scene_box();
  s.voxel_edge = kSceneExtent / std::max({dims[0], dims[1], dims[2]});
  s.cell_size = 1;
  s.image_width = std::max({dims[0], dims[1], dims[2]});
  return s;
}

struct ViewData {
  OrthoCamera cam;
  ViewRaster raster;
};

struct CanonicalView {
  ViewName name = ViewName::kFront;
  OrthoCamera cam;
  ViewRaster raster;
  PixelArtView art;
};

/// Optional on-disk side effects of training. Empty `dir` disables them.
struct TrainIO {
  std::filesystem::path dir;

  bool enabled() const { return !dir.empty(); }
  std::filesystem::path checkpoint_dir() const { return dir / "checkpoints"; }
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline constexpr const char* kLossCsvHeader = "iter,loss_total,loss_pixel,loss_depth,loss_alpha,loss_sem,tau,mode";
inline constexpr const char* kScheduleCsvHeader = "iter,tau,mode,lambda_depth,lambda_clip,active_views,patch";

inline void write_stage_checkpoint(const TrainIO& io, const std::string& name, const Checkpoint& ck) {
  std::filesystem::create_directories(io.checkpoint_dir());
  write_checkpoint(io.checkpoint_dir() / (name + ".vxg"), ck);
}

inline std::string checkpoint_name(int stage, int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "stage%d_%06d", stage, iter);
  return buf;
}

inline void guard_finite(double loss, int stage, int iter) {
  if (!std::isfinite(loss))
    throw Error(ErrorCode::kDiverged, "stage " + std::to_string(stage) + " loss is not finite at iteration " +
                                          std::to_string(iter));
}

struct StageResult {
  LossParts parts;
  double total = 0.0;
  int iterations = 0;
};

struct Stage1Result {
  Stage1Params<double> params;
  StageResult summary;
};

/// Uniform pixel-center rays over the pixels of all views.
class Stage1Sampler {
 public:
  Stage1Sampler(std::span<const ViewData> views, uint64_t seed) : views_(views), rng_(hash_combine(seed, 1)) {
    for (const ViewData& v : views_) offsets_.push_back(total_ += static_cast<uint64_t>(v.cam.width) * v.cam.height);
  }

  void draw(int count, std::vector<RaySample>& out) {
    out.resize(count);
    for (RaySample& s : out) {
      const uint64_t flat = rng_.below(total_);
      size_t vi = 0;
      while (flat >= offsets_[vi]) ++vi;
      const uint64_t local = flat - (vi ? offsets_[vi - 1] : 0);
      const ViewData& v = views_[vi];
      const int x = static_cast<int>(local % v.cam.width), y = static_cast<int>(local / v.cam.width);
      s = {};
      s.ray = {v.cam.ray_origin(x + 0.5, y + 0.5), v.cam.view_dir};
      s.covered = v.raster.coverage(x, y);
      s.target = s.covered ? v.raster.color(x, y) : Rgb(1, 1, 1);
      s.depth_gt = s.covered ? v.raster.depth(x, y) : 0.0;
    }
  }

 private:
  std::span<const ViewData> views_;
  Rng rng_;
  std::vector<uint64_t> offsets_;
  uint64_t total_ = 0;
};

inline void write_loss_row(std::ostream& csv, int iter, double total, const LossParts& p, double pixel,
                           const std::string& tau, const std::string& mode) {
  csv << iter << ',' << format_number(total) << ',' << format_number(pixel) << ',' << format_number(p.depth) << ','
      << format_number(p.alpha) << ',' << format_number(p.semantic) << ',' << tau << ',' << mode << '\n';
}

inline Stage1Result train_stage1(std::span<const ViewData> views, const GridSpec& spec, const TrainConfig& cfg,
                                 const TrainIO& io = {}) {
  if (views.size() < 6) throw Error(ErrorCode::kInvalidArgument, "stage 1 needs at least six views");
  cfg.validate();
  Stage1Result r{{DensityGrid<double>(spec, cfg.density_init), ColorGrid<double>(spec, 0.0)}, {}};
  Adam<double> adam_density(spec.voxel_count(), cfg.adam), adam_color(3 * spec.voxel_count(), cfg.adam);
  const LrSchedule lr_d{cfg.lr_density_s1, cfg.stage1_iters, cfg.lr_decay_step, cfg.lr_decay, 0.1, cfg.lr_step_gamma};
  const LrSchedule lr_c{cfg.lr_color_s1, cfg.stage1_iters, cfg.lr_decay_step, cfg.lr_decay, 0.1, cfg.lr_step_gamma};
  const ObjectiveOptions opt{{cfg.transmittance_cutoff}, 8};

  std::ofstream csv;
  if (io.enabled()) {
    std::filesystem::create_directories(io.dir);
    csv.open(io.dir / "loss_stage1.csv");
    csv << kLossCsvHeader << '\n';
  }
  Stage1Sampler sampler(views, cfg.seed);
  std::vector<RaySample> batch;
  ParamGrads grads;
  for (int iter = 0; iter < cfg.stage1_iters; ++iter) {
    sampler.draw(cfg.batch_rays, batch);
    const EvalResult ev = evaluate_stage1(r.params, batch, cfg.weights, iter, opt, &grads);
    guard_finite(ev.total, 1, iter);
    adam_density.step(r.params.density.raw, grads.density, lr_d.at(iter));
    adam_color.step(r.params.color.raw, grads.values, lr_c.at(iter));
    r.summary = {ev.parts, ev.total, iter + 1};
    if (io.enabled()) {
      write_loss_row(csv, iter, ev.total, ev.parts, ev.parts.render, "", "rgb");
      if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
        write_stage_checkpoint(io, checkpoint_name(1, iter + 1), make_checkpoint(r.params.density, r.params.color.raw, 3));
    }
  }
  if (io.enabled()) write_stage_checkpoint(io, "stage1_final", make_checkpoint(r.params.density, r.params.color.raw, 3));
  return r;
}

/// Stage-2 schedule values at one iteration; a pure function of the config.
struct Stage2Schedule {
  int schedule_iter = 0;
  double tau = 1.0;
  QuantMode mode = QuantMode::kSoft;
  double lambda_depth = 0.0;
  double lambda_clip = 0.0;
  int active_views = 6;
};

inline Stage2Schedule stage2_schedule(const TrainConfig& cfg, int iter) {
  Stage2Schedule s;
  s.schedule_iter = cfg.schedule_iter(iter);
  s.tau = cfg.tau_schedule.tau(s.schedule_iter);
  s.mode = mode_for(s.schedule_iter, cfg.switch_iter);
  s.lambda_depth = cfg.weights.depth_at(s.schedule_iter);
  s.lambda_clip = cfg.weights.clip_at(s.schedule_iter);
  s.active_views = s.schedule_iter < cfg.front_only_after ? 6 : 1;
  return s;
}

inline int effective_patch_size(const TrainConfig& cfg, int image_width) {
  return std::min(cfg.patch_size, image_width) / 8 * 8;
}

struct Stage2Result {
  Stage2Params<double> params;
  StageResult summary;
  std::vector<double> pixel_history;  // per-iteration pixel loss
  int semantic_applied = 0;
};

/// Views are ordered as kCanonicalViews; index 0 (front) is the view kept
/// active in the front-only phase.
inline Stage2Result train_stage2(std::span<const CanonicalView> views, const Palette& palette,
                                 Stage2Params<double> init, const TrainConfig& cfg, Embedder* embedder,
                                 const TrainIO& io = {}) {
  if (views.size() != 6 || views[0].name != ViewName::kFront)
    throw Error(ErrorCode::kInvalidArgument, "stage 2 needs the six canonical views, front first");
  if (init.logits.colors != palette.size()) throw Error(ErrorCode::kResolutionMismatch, "logit channels vs palette");
  cfg.validate();
  const GridSpec& spec = init.density.spec;
  const int W = views[0].cam.width;
  const int cs = views[0].art.cell_size;
  const int P = effective_patch_size(cfg, W);
  const double depth_offset = cfg.depth_target_offset * spec.voxel_edge;

  Stage2Result r{std::move(init), {}, {}, 0};
  Adam<double> adam_density(spec.voxel_count(), cfg.adam), adam_logits(r.params.logits.values.size(), cfg.adam);
  const LrSchedule lr_d{cfg.lr_density_s2, cfg.stage2_iters, cfg.lr_decay_step, cfg.lr_decay, 0.1, cfg.lr_step_gamma};
  const LrSchedule lr_l{cfg.lr_logit_s2, cfg.stage2_iters, cfg.lr_decay_step, cfg.lr_decay, 0.1, cfg.lr_step_gamma};
  const ObjectiveOptions opt{{cfg.transmittance_cutoff}, 8};
  const GumbelSampler base_sampler{hash_combine(cfg.seed, 2), QuantMode::kSoft};
  Rng rng(hash_combine(cfg.seed, 3));

  std::ofstream loss_csv, sched_csv;
  if (io.enabled()) {
    std::filesystem::create_directories(io.dir);
    loss_csv.open(io.dir / "loss_stage2.csv");
    loss_csv << kLossCsvHeader << '\n';
    sched_csv.open(io.dir / "schedule_stage2.csv");
    sched_csv << kScheduleCsvHeader << '\n';
  }

  std::vector<RaySample> batch(cfg.batch_rays);
  PatchSample patch;
  ParamGrads grads;
  for (int iter = 0; iter < cfg.stage2_iters; ++iter) {
    const Stage2Schedule sch = stage2_schedule(cfg, iter);
    for (RaySample& s : batch) {
      const CanonicalView& v = views[rng.below(sch.active_views)];
      const uint64_t flat = rng.below(static_cast<uint64_t>(W) * W);
      const int x = static_cast<int>(flat % W), y = static_cast<int>(flat / W);
      s = {};
      s.ray = {v.cam.ray_origin(x + 0.5, y + 0.5), v.cam.view_dir};
      s.background = v.art.alpha(x / cs, y / cs);
      s.target = v.art.cells(x / cs, y / cs);
      s.covered = v.raster.coverage(x, y);
      s.depth_gt = s.covered ? v.raster.depth(x, y) + depth_offset : 0.0;
    }

    Stage2Inputs in;
    in.palette = &palette;
    in.quant = {sch.tau, sch.mode, {base_sampler.seed, sch.mode}, iter};
    in.schedule_iter = sch.schedule_iter;
    const bool use_patch = embedder != nullptr && sch.lambda_clip > 0.0 && P >= 8;
    if (use_patch) {
      const CanonicalView& v = views[rng.below(sch.active_views)];
      const int x0 = static_cast<int>(rng.below(W - P + 1)), y0 = static_cast<int>(rng.below(W - P + 1));
      patch.rays.resize(static_cast<size_t>(P) * P);
      patch.target = Patch(P);
      for (int y = 0; y < P; ++y)
        for (int x = 0; x < P; ++x) {
          const int px = x0 + x, py = y0 + y;
          patch.rays[static_cast<size_t>(y) * P + x] = {v.cam.ray_origin(px + 0.5, py + 0.5), v.cam.view_dir};
          patch.target.at(x, y) = v.art.alpha(px / cs, py / cs) ? Rgb(1, 1, 1) : v.art.cells(px / cs, py / cs);
        }
      in.patch = &patch;
      in.embedder = embedder;
    }

    const EvalResult ev = evaluate_stage2(r.params, batch, cfg.weights, in, opt, &grads);
    guard_finite(ev.total, 2, iter);
    adam_density.step(r.params.density.raw, grads.density, lr_d.at(iter));
    adam_logits.step(r.params.logits.values, grads.values, lr_l.at(iter));
    r.summary = {ev.parts, ev.total, iter + 1};
    r.pixel_history.push_back(ev.parts.pixel);
    r.semantic_applied += ev.semantic_applied ? 1 : 0;

    if (io.enabled()) {
      write_loss_row(loss_csv, iter, ev.total, ev.parts, ev.parts.pixel, format_number(sch.tau), mode_name(sch.mode));
      sched_csv << iter << ',' << format_number(sch.tau) << ',' << mode_name(sch.mode) << ','
                << format_number(sch.lambda_depth) << ',' << format_number(sch.lambda_clip) << ','
                << sch.active_views << ',' << (use_patch ? 1 : 0) << '\n';
      if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
        write_stage_checkpoint(io, checkpoint_name(2, iter + 1),
                               make_checkpoint(r.params.density, r.params.logits.values, palette.size()));
    }
  }
  if (io.enabled())
    write_stage_checkpoint(io, "stage2_final",
                           make_checkpoint(r.params.density, r.params.logits.values, palette.size()));
  return r;
}

/// "builtin" or "external:CMD".
inline std::unique_ptr<Embedder> make_embedder(const std::string& spec) {
  if (spec == "builtin") return std::make_unique<BuiltinEmbedder>();
  if (spec.rfind("external:", 0) == 0 && spec.size() > 9) return std::make_unique<ExternalEmbedder>(spec.substr(9));
  throw Error(ErrorCode::kInvalidArgument, "embedder must be 'builtin' or 'external:CMD'");
}

struct PipelineOptions {
  std::filesystem::path mesh;
  std::filesystem::path out;
  int image_width = 160;
  int cell_size = 10;
  PaletteOptions palette;
  TrainConfig train;
  std::optional<std::filesystem::path> pixel_art_dir;
  std::string embedder = "builtin";
  nlohmann::json flags = nlohmann::json::object();  // command line as given, for the manifest
};

struct RunManifest {
  nlohmann::json json;

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kUnreadableFile, path.string());
    out << json.dump(2) << '\n';
  }
};

inline nlohmann::json parts_json(const LossParts& p, double total, int iterations) {
  return {{"iterations", iterations}, {"total", total},   {"render", p.render}, {"tv", p.tv},
          {"bg", p.bg},               {"pixel", p.pixel}, {"depth", p.depth},   {"alpha", p.alpha},
          {"semantic", p.semantic}};
}

inline nlohmann::json grid_json(const GridSpec& s) {
  return {{"resolution", {s.resolution[0], s.resolution[1], s.resolution[2]}},
          {"voxel_edge", s.voxel_edge},
          {"box_lo", {s.grid_box().lo.x, s.grid_box().lo.y, s.grid_box().lo.z}},
          {"box_hi", {s.grid_box().hi.x, s.grid_box().hi.y, s.grid_box().hi.z}},
          {"image_width", s.image_width},
          {"cell_size", s.cell_size}};
}

struct PipelineResult {
  RunManifest manifest;
  QuantizedModel model;
  std::vector<CanonicalView> views;
  Stage2Params<double> params;
};

inline std::vector<CanonicalView> canonical_views(const Mesh& mesh, int width) {
  std::vector<CanonicalView> views;
  for (ViewName name : kCanonicalViews) {
    CanonicalView v;
    v.name = name;
    v.cam = scene_camera(name, width);
    v.raster = rasterize(mesh, v.cam);
    views.push_back(std::move(v));
  }
  return views;
}

inline PipelineResult run_pipeline(const PipelineOptions& o) {
  const auto started = std::chrono::steady_clock::now();
  o.train.validate();
  if (o.palette.colors < 2 || o.palette.colors > 255)
    throw Error(ErrorCode::kInvalidArgument, "palette size must be in [2, 255]");
  const Mesh loaded = load_mesh(o.mesh);
  const NormalizedMesh nm = normalize_mesh(loaded);
  const GridSpec spec = make_grid_spec(scene_box(), o.image_width, o.cell_size);
  for (int a = 0; a < 3; ++a)
    if (spec.resolution[a] > 256) throw Error(ErrorCode::kDimensionTooLarge, "grid exceeds 256 voxels per axis");
  std::unique_ptr<Embedder> embedder = make_embedder(o.embedder);
  std::filesystem::create_directories(o.out);

  PipelineResult res;
  res.views = canonical_views(nm.mesh, o.image_width);
  const int cells = o.image_width / o.cell_size;
  Palette palette;
  if (o.pixel_art_dir) {
    for (CanonicalView& v : res.views) {
      v.art = load_external(*o.pixel_art_dir / (std::string(view_file_stem(v.name)) + ".png"), o.cell_size);
      if (v.art.cells_x() != cells || v.art.cells_y() != cells)
        throw Error(ErrorCode::kResolutionMismatch,
                    std::string(view_file_stem(v.name)) + ".png does not match --image-width");
    }
    std::vector<PixelArtView> arts;
    for (const CanonicalView& v : res.views) arts.push_back(v.art);
    palette = extract_palette(ColorHistogram::from_pixels(pool_foreground(arts)), o.palette);
  } else {
    // First pass fixes the palette; the second snaps the stand-in cells to it.
    std::vector<PixelArtView> arts;
    for (const CanonicalView& v : res.views) arts.push_back(generate_standin(v.raster, o.cell_size));
    palette = extract_palette(ColorHistogram::from_pixels(pool_foreground(arts)), o.palette);
    for (CanonicalView& v : res.views) v.art = generate_standin(v.raster, o.cell_size, palette);
  }
  std::filesystem::create_directories(o.out / "pixel_art");
  for (const CanonicalView& v : res.views)
    save_pixel_art(v.art, o.out / "pixel_art" / (std::string(view_file_stem(v.name)) + ".png"));
  {
    std::ofstream pj(o.out / "palette.json");
    pj << palette_to_json(palette).dump(2) << '\n';
  }

  std::vector<ViewData> s1_views;
  for (const CanonicalView& v : res.views) s1_views.push_back({v.cam, v.raster});
  for (const OrthoCamera& cam : diagonal_cameras(nm.box, o.image_width)) s1_views.push_back({cam, rasterize(nm.mesh, cam)});
  const TrainIO io{o.out};
  Stage1Result s1 = train_stage1(s1_views, spec, o.train, io);

  Stage2Params<double> init{std::move(s1.params.density), init_logits(s1.params.color, palette, o.train.logit_init_scale)};
  Stage2Result s2 = train_stage2(res.views, palette, std::move(init), o.train, embedder.get(), io);

  res.model = quantize_model(s2.params.density, s2.params.logits, palette);
  write_vox(res.model, o.out / "model.vox");
  write_ply_cubes(res.model, o.out / "model.ply");
  std::filesystem::create_directories(o.out / "renders");
  for (const CanonicalView& v : res.views)
    render_png(res.model, v.cam, o.out / "renders" / (std::string(view_file_stem(v.name)) + ".png"));
  res.params = std::move(s2.params);

  const Box3 mb = loaded.bounds();
  nlohmann::json& m = res.manifest.json;
  m["software"] = {{"name", "voxify"}, {"version", kVersion}};
  m["flags"] = o.flags;
  m["mesh"] = {{"path", o.mesh.string()},
               {"vertices", loaded.vertices.size()},
               {"triangles", loaded.triangles.size()},
               {"bounds_lo", {mb.lo.x, mb.lo.y, mb.lo.z}},
               {"bounds_hi", {mb.hi.x, mb.hi.y, mb.hi.z}}};
  m["config"] = to_json(o.train);
  m["palette_options"] = {{"method", std::string(method_name(o.palette.method))},
                          {"colors", o.palette.colors},
                          {"seed", o.palette.seed},
                          {"boost_quantile", o.palette.boost_quantile},
                          {"anneal_iters", o.palette.anneal_iters}};
  m["palette"] = palette_to_json(palette);
  m["grid"] = grid_json(spec);
  m["pixel_art"] = o.pixel_art_dir ? "external" : "standin";
  m["embedder"] = embedder->name();
  m["stage1"] = parts_json(s1.summary.parts, s1.summary.total, s1.summary.iterations);
  m["stage2"] = parts_json(s2.summary.parts, s2.summary.total, s2.summary.iterations);
  m["stage2"]["semantic_applied"] = s2.semantic_applied;
  m["occupied_voxels"] = res.model.occupied_count();
  m["outputs"] = {"model.vox", "model.ply", "palette.json", "loss_stage1.csv", "loss_stage2.csv",
                  "schedule_stage2.csv", "checkpoints/", "pixel_art/", "renders/"};
  m["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  res.manifest.write(o.out / "manifest.json");
  return res;
}

}  // namespace voxify
