#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "process.hpp"

namespace voxify {
namespace {

using testing::quoted;
using testing::run_command;

const std::string kCli = VOXIFY_CLI;

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_command(kCli).exit_code, 2);
  EXPECT_EQ(run_command(kCli + " run --out /tmp/x").exit_code, 2);
  EXPECT_EQ(run_command(kCli + " run --mesh m.ply --out /tmp/x --colors 1").exit_code, 2);
  EXPECT_EQ(run_command(kCli + " run --mesh m.ply --out /tmp/x --palette-method bogus").exit_code, 2);
  EXPECT_EQ(run_command(kCli + " check-gradients --precision f16").exit_code, 2);
  EXPECT_EQ(run_command(kCli + " palette").exit_code, 2);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run_command(kCli + " --help");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("check-gradients"), std::string::npos);
}

TEST(Cli, RuntimeErrorsExitOne) {
  const auto dir = testing::scratch_dir("cli_runtime");
  const auto r = run_command(kCli + " run --mesh " + quoted((dir / "missing.ply").string()) + " --out " +
                             quoted((dir / "out").string()));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("unreadable"), std::string::npos) << r.output;
}

TEST(Cli, PaletteMedianCutOnTwoColorArtIsExact) {
  const auto dir = testing::scratch_dir("cli_palette");
  Image<Rgba8> img(8, 8, Rgba8{255, 0, 0, 255});
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x) img(x, y) = {0, 0, 255, 255};
  img(0, 0) = {0, 255, 0, 0};  // transparent cells do not vote
  write_png(dir / "a.png", img);
  const auto r = run_command(kCli + " palette --image " + quoted((dir / "a.png").string()) +
                             " --colors 2 --palette-method mediancut --out " + quoted((dir / "p.json").string()));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const Palette p = palette_from_json(nlohmann::json::parse(testing::read_text(dir / "p.json")));
  EXPECT_EQ(p.colors, (std::vector<Rgb>{{0, 0, 1}, {1, 0, 0}}));
  EXPECT_EQ(p.method, PaletteMethod::kMedianCut);
}

TEST(Cli, GradientCheckPassesInBothPrecisions) {
  for (const char* prec : {"f32", "f64"}) {
    const auto r = run_command(kCli + " check-gradients --precision " + prec);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    EXPECT_NE(r.output.find("all gradients within tolerance"), std::string::npos);
  }
}

TEST(Cli, GradientCheckCatchesPlantedSignError) {
  const auto r = run_command(std::string(VOXIFY_FAULTY_CLI) + " check-gradients --precision f64");
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("FAIL"), std::string::npos);
}

TEST(Cli, RunRecordsFlagsAndExportsAgree) {
  const auto dir = testing::scratch_dir("cli_run");
  testing::write_mesh_ply(testing::two_color_sphere(), dir / "s.ply");
  std::ofstream(dir / "cfg.txt") << "# overrides\nlambda_alpha = 15\nstage2_iters = 999\n";
  const auto out = dir / "out";
  const auto r = run_command(kCli + " run --mesh " + quoted((dir / "s.ply").string()) + " --out " +
                             quoted(out.string()) + " --image-width 32 --cell-size 4 --colors 2 --seed 5" +
                             " --stage1-iters 20 --stage2-iters 20 --batch-rays 256 --config " +
                             quoted((dir / "cfg.txt").string()));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto m = nlohmann::json::parse(testing::read_text(out / "manifest.json"));
  EXPECT_EQ(m["flags"]["--colors"], "2");
  EXPECT_EQ(m["flags"]["--seed"], "5");
  EXPECT_EQ(m["config"]["seed"], 5);
  EXPECT_EQ(m["config"]["stage2_iters"], 20);  // flag beats config file
  EXPECT_EQ(m["config"]["weights"]["alpha"], 15.0);
  EXPECT_EQ(m["stage2"]["iterations"], 20);

  // Exporting the final checkpoint reproduces the pipeline's .vox.
  const auto ck = out / "checkpoints" / "stage2_final.vxg";
  const auto e = run_command(kCli + " export --checkpoint " + quoted(ck.string()) + " --palette " +
                             quoted((out / "palette.json").string()) + " --vox " + quoted((dir / "e.vox").string()));
  ASSERT_EQ(e.exit_code, 0) << e.output;
  EXPECT_EQ(read_bytes(dir / "e.vox"), read_bytes(out / "model.vox"));
  const auto rr = run_command(kCli + " render --checkpoint " + quoted(ck.string()) + " --palette " +
                              quoted((out / "palette.json").string()) + " --view left --out " +
                              quoted((dir / "left.png").string()));
  ASSERT_EQ(rr.exit_code, 0) << rr.output;
  EXPECT_EQ(read_png(dir / "left.png").pixels.width, 80);
  EXPECT_EQ(run_command(kCli + " export --checkpoint " + quoted(ck.string()) + " --palette " +
                        quoted((out / "palette.json").string()))
                .exit_code,
            2);
}

TEST(Cli, UnknownConfigKeyIsAUsageError) {
  const auto dir = testing::scratch_dir("cli_cfg");
  testing::write_mesh_ply(testing::two_color_sphere(), dir / "s.ply");
  std::ofstream(dir / "cfg.txt") << "no_such_key = 1\n";
  const auto r = run_command(kCli + " run --mesh " + quoted((dir / "s.ply").string()) + " --out " +
                             quoted((dir / "out").string()) + " --config " + quoted((dir / "cfg.txt").string()));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("no_such_key"), std::string::npos);
}

}  // namespace
}  // namespace voxify
