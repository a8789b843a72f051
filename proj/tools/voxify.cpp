// voxify command-line tool.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <iostream>

#include "voxify/voxify.hpp"

namespace {

using namespace voxify;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kMethodNames = {"kmeans", "kmeans-rare", "mediancut", "maxmin", "anneal"};

PaletteMethod method_from(const std::string& s) {
  const auto m = parse_method(s);
  if (!m) throw UsageError("unknown palette method '" + s + "'");
  return *m;
}

nlohmann::json recorded_flags(const CLI::App& cmd) {
  nlohmann::json flags = nlohmann::json::object();
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->count() == 0 || opt->get_name() == "--help") continue;
    const auto& r = opt->results();
    flags[opt->get_name()] = r.size() == 1 ? nlohmann::json(r[0]) : nlohmann::json(r);
  }
  return flags;
}

struct RunFlags {
  std::string mesh, out, config, pixel_art_dir, embedder = "builtin", method = "kmeans";
  int image_width = 160, cell_size = 10, colors = 4, stage1_iters = 0, stage2_iters = 0, batch_rays = 0;
  uint64_t seed = 0;
};

int cmd_run(CLI::App& cmd, const RunFlags& f) {
  PipelineOptions o;
  o.image_width = f.image_width;
  o.cell_size = f.cell_size;
  o.palette.colors = f.colors;
  o.palette.method = method_from(f.method);
  o.embedder = f.embedder;
  o.train.seed = f.seed;
  o.palette.seed = f.seed;

  // Config keys first; explicit flags override them.
  auto given = [&](const char* name) { return cmd.get_option(name)->count() > 0; };
  if (!f.config.empty()) {
    try {
      for (const auto& [key, value] : read_key_values(f.config)) {
        if (apply_train_key(o.train, key, value)) continue;
        if (key == "image_width") o.image_width = std::stoi(value);
        else if (key == "cell_size") o.cell_size = std::stoi(value);
        else if (key == "colors") o.palette.colors = std::stoi(value);
        else if (key == "palette_method") o.palette.method = method_from(value);
        else if (key == "boost_quantile") o.palette.boost_quantile = std::stod(value);
        else if (key == "anneal_iters") o.palette.anneal_iters = std::stoi(value);
        else if (key == "embedder") o.embedder = value;
        else if (key == "pixel_art_dir") o.pixel_art_dir = value;
        else throw UsageError(f.config + ": unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      throw UsageError(e.what());
    } catch (const std::invalid_argument&) {
      throw UsageError(f.config + ": malformed number");
    } catch (const std::out_of_range&) {
      throw UsageError(f.config + ": number out of range");
    }
    if (!given("--seed")) o.palette.seed = o.train.seed;
  }
  if (given("--image-width")) o.image_width = f.image_width;
  if (given("--cell-size")) o.cell_size = f.cell_size;
  if (given("--colors")) o.palette.colors = f.colors;
  if (given("--palette-method")) o.palette.method = method_from(f.method);
  if (given("--embedder")) o.embedder = f.embedder;
  if (given("--seed")) o.train.seed = o.palette.seed = f.seed;
  if (given("--stage1-iters")) o.train.stage1_iters = f.stage1_iters;
  if (given("--stage2-iters")) o.train.stage2_iters = f.stage2_iters;
  if (given("--batch-rays")) o.train.batch_rays = f.batch_rays;
  if (given("--pixel-art-dir")) o.pixel_art_dir = f.pixel_art_dir;
  if (o.palette.colors < 2 || o.palette.colors > 255) throw UsageError("--colors must be in [2, 255]");
  if (o.image_width < 1 || o.cell_size < 1) throw UsageError("--image-width and --cell-size must be positive");
  if (o.embedder != "builtin" && o.embedder.rfind("external:", 0) != 0)
    throw UsageError("--embedder must be builtin or external:CMD");
  try {
    o.train.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  o.mesh = f.mesh;
  o.out = f.out;
  o.flags = recorded_flags(cmd);
  const PipelineResult r = run_pipeline(o);
  std::cout << r.manifest.json.dump(2) << '\n';
  return 0;
}

int cmd_palette(const std::vector<std::string>& images, const std::string& dir, int cell_size, int colors,
                const std::string& method, uint64_t seed, const std::string& out) {
  std::vector<std::filesystem::path> paths(images.begin(), images.end());
  if (!dir.empty())
    for (ViewName v : kCanonicalViews) {
      const auto p = std::filesystem::path(dir) / (std::string(view_file_stem(v)) + ".png");
      if (std::filesystem::exists(p)) paths.push_back(p);
    }
  if (paths.empty()) throw UsageError("no input images (use --image or --pixel-art-dir)");
  std::vector<PixelArtView> views;
  for (const auto& p : paths) views.push_back(load_external(p, cell_size));
  PaletteOptions opt;
  opt.method = method_from(method);
  opt.colors = colors;
  opt.seed = seed;
  const Palette pal = extract_palette(ColorHistogram::from_pixels(pool_foreground(views)), opt);
  const std::string text = palette_to_json(pal).dump(2);
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw Error(ErrorCode::kUnreadableFile, out);
    f << text << '\n';
  }
  std::cout << text << '\n';
  return 0;
}

Palette read_palette_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kUnreadableFile, path);
  try {
    return palette_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, path + ": " + e.what());
  }
}

QuantizedModel model_from_checkpoint(const std::string& checkpoint, const std::string& palette_path,
                                     std::optional<double> threshold) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  const Palette pal = read_palette_file(palette_path);
  if (static_cast<int>(ck.channels) != pal.size())
    throw Error(ErrorCode::kResolutionMismatch, "checkpoint channels differ from palette size");
  const GridSpec spec = scene_grid_spec(ck.dims);
  DensityGrid<float> density;
  density.spec = spec;
  density.raw = ck.density;
  LogitGrid<float> logits;
  logits.spec = spec;
  logits.colors = pal.size();
  logits.values = ck.values;
  return quantize_model(density, logits, pal, threshold);
}

ViewName view_from(const std::string& s) {
  for (ViewName v : kCanonicalViews)
    if (s == view_file_stem(v)) return v;
  throw UsageError("unknown view '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxify: palette-constrained voxel art from colored triangle meshes"};
  app.require_subcommand(1);

  RunFlags rf;
  CLI::App* run = app.add_subcommand("run", "Run the full two-stage pipeline");
  run->add_option("--mesh", rf.mesh, "Input mesh (.ply or .obj with vertex colors)")->required();
  run->add_option("--out", rf.out, "Output directory")->required();
  run->add_option("--image-width", rf.image_width, "View resolution W in pixels")->capture_default_str();
  run->add_option("--cell-size", rf.cell_size, "Pixel-art cell size; grid resolution is W / cell size")
      ->capture_default_str();
  run->add_option("--colors", rf.colors, "Palette size C")->check(CLI::Range(2, 255))->capture_default_str();
  run->add_option("--palette-method", rf.method, "Palette extraction method")
      ->check(CLI::IsMember(kMethodNames))
      ->capture_default_str();
  run->add_option("--seed", rf.seed, "Random seed")->capture_default_str();
  run->add_option("--pixel-art-dir", rf.pixel_art_dir, "Directory with front/back/left/right/top/bottom.png");
  run->add_option("--embedder", rf.embedder, "Semantic embedder: builtin or external:CMD")->capture_default_str();
  run->add_option("--stage1-iters", rf.stage1_iters, "Stage-1 iterations (default 8000)")->check(CLI::NonNegativeNumber);
  run->add_option("--stage2-iters", rf.stage2_iters, "Stage-2 iterations (default 6500)")->check(CLI::NonNegativeNumber);
  run->add_option("--batch-rays", rf.batch_rays, "Rays per iteration (default 8192)")->check(CLI::PositiveNumber);
  run->add_option("--config", rf.config, "key = value file; flags take precedence")->check(CLI::ExistingFile);

  std::vector<std::string> pal_images;
  std::string pal_dir, pal_method = "kmeans", pal_out;
  int pal_cell = 1, pal_colors = 4;
  uint64_t pal_seed = 0;
  CLI::App* pal = app.add_subcommand("palette", "Extract a palette from pixel-art images");
  pal->add_option("--image", pal_images, "RGBA pixel-art PNG (repeatable)")->check(CLI::ExistingFile);
  pal->add_option("--pixel-art-dir", pal_dir, "Directory with canonical view PNGs")->check(CLI::ExistingDirectory);
  pal->add_option("--cell-size", pal_cell, "Cell size of the images")->check(CLI::PositiveNumber)->capture_default_str();
  pal->add_option("--colors", pal_colors, "Palette size C")->check(CLI::Range(2, 255))->capture_default_str();
  pal->add_option("--palette-method", pal_method, "Extraction method")
      ->check(CLI::IsMember(kMethodNames))
      ->capture_default_str();
  pal->add_option("--seed", pal_seed, "Random seed")->capture_default_str();
  pal->add_option("--out", pal_out, "Also write the palette JSON here");

  std::string r_ck, r_pal, r_view = "front", r_out;
  int r_width = 0;
  CLI::App* render = app.add_subcommand("render", "Render a stage-2 checkpoint as an orthographic PNG");
  render->add_option("--checkpoint", r_ck, "Stage-2 VXG1 checkpoint")->required()->check(CLI::ExistingFile);
  render->add_option("--palette", r_pal, "Palette JSON")->required()->check(CLI::ExistingFile);
  render->add_option("--view", r_view, "front, back, left, right, top or bottom")->capture_default_str();
  render->add_option("--image-width", r_width, "Output width (default 10 px per voxel)")->check(CLI::PositiveNumber);
  render->add_option("--out", r_out, "Output PNG")->required();

  std::string e_ck, e_pal, e_vox, e_ply;
  std::optional<double> e_threshold;
  CLI::App* exp = app.add_subcommand("export", "Export a stage-2 checkpoint as .vox and/or PLY");
  exp->add_option("--checkpoint", e_ck, "Stage-2 VXG1 checkpoint")->required()->check(CLI::ExistingFile);
  exp->add_option("--palette", e_pal, "Palette JSON")->required()->check(CLI::ExistingFile);
  exp->add_option("--vox", e_vox, "MagicaVoxel output path");
  exp->add_option("--ply", e_ply, "Cube-mesh PLY output path");
  exp->add_option("--threshold", e_threshold, "Occupancy density threshold (default ln2 / voxel edge)");

  std::string precision = "f32";
  uint64_t gc_seed = 0;
  CLI::App* gc = app.add_subcommand("check-gradients", "Finite-difference check of every analytic gradient");
  gc->add_option("--precision", precision, "f32 (tol 1e-3) or f64 (tol 1e-6)")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  gc->add_option("--seed", gc_seed, "Fixture seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(*run, rf);
    if (*pal) return cmd_palette(pal_images, pal_dir, pal_cell, pal_colors, pal_method, pal_seed, pal_out);
    if (*render) {
      const QuantizedModel m = model_from_checkpoint(r_ck, r_pal, std::nullopt);
      const int width = r_width > 0 ? r_width : 10 * m.spec.resolution[0];
      render_png(m, scene_camera(view_from(r_view), width), r_out);
      return 0;
    }
    if (*exp) {
      if (e_vox.empty() && e_ply.empty()) throw UsageError("nothing to export: give --vox and/or --ply");
      const QuantizedModel m = model_from_checkpoint(e_ck, e_pal, e_threshold);
      if (!e_vox.empty()) write_vox(m, e_vox);
      if (!e_ply.empty()) write_ply_cubes(m, e_ply);
      std::cout << m.occupied_count() << " occupied voxels\n";
      return 0;
    }
    if (*gc) {
      const GradCheckReport report =
          run_gradient_checks(precision == "f64" ? Precision::kF64 : Precision::kF32, gc_seed);
      report.print(std::cout);
      std::cout << (report.all_pass() ? "all gradients within tolerance" : "gradient check FAILED") << '\n';
      return report.all_pass() ? 0 : 1;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
