#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

namespace voxify {
namespace {

const Box3 kUnit{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};

TEST(GridSpec, ResolutionFromWidthAndCellSize) {
  EXPECT_EQ(make_grid_spec(kUnit, 400, 8).resolution, (Index3{50, 50, 50}));
  EXPECT_EQ(make_grid_spec(kUnit, 400, 20).resolution, (Index3{20, 20, 20}));
  const GridSpec s = make_grid_spec({{0, 0, 0}, {1, 0.5, 0.5}}, 100, 10);
  EXPECT_EQ(s.resolution, (Index3{10, 5, 5}));
  EXPECT_DOUBLE_EQ(s.voxel_edge, 0.1);
  EXPECT_THROW(make_grid_spec(kUnit, 100, 7), Error);
}

TEST(GridSpec, LinearIndexRoundTrip) {
  const GridSpec s = make_grid_spec({{0, 0, 0}, {1, 0.5, 0.25}}, 40, 5);
  for (size_t v = 0; v < s.voxel_count(); ++v) {
    const Index3 ijk = s.unravel(v);
    EXPECT_EQ(s.linear(ijk[0], ijk[1], ijk[2]), v);
  }
}

TEST(Traverse, AxisAlignedCenterRay) {
  const GridSpec s = make_grid_spec(kUnit, 4, 1);
  const auto segs = traverse(s, {{0.01, -2, 0.02}, {0, 1, 0}});
  ASSERT_EQ(segs.size(), 4u);
  for (const RaySegment& g : segs) EXPECT_NEAR(g.length(), 0.25, 1e-12);
  EXPECT_NEAR(segs.front().t_enter, 1.5, 1e-12);
}

TEST(Traverse, MissIsEmpty) {
  const GridSpec s = make_grid_spec(kUnit, 4, 1);
  EXPECT_TRUE(traverse(s, {{2, 2, 2}, {0, 0, 1}}).empty());
  EXPECT_TRUE(traverse(s, {{0, -2, 0}, {0, -1, 0}}).empty());
}

TEST(Traverse, DiagonalMatchesDenseSampling) {
  const GridSpec s = make_grid_spec(kUnit, 2, 1);
  const Ray r{{-1, -1, -1}, normalized(Vec3(1, 1, 1))};
  const auto segs = traverse(s, r);
  double sum = 0.0;
  std::vector<double> len(s.voxel_count(), 0.0);
  for (const RaySegment& g : segs) {
    sum += g.length();
    len[g.voxel] += g.length();
  }
  EXPECT_NEAR(sum, std::sqrt(3.0), 1e-12);
  const auto ref = oracle::sampled_lengths(s, r);
  for (size_t v = 0; v < len.size(); ++v) EXPECT_NEAR(len[v], ref[v], 1e-4);
}

TEST(TraverseProperty, SegmentsPartitionTheChord) {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const GridSpec s = make_grid_spec({{-0.5, -0.3, -0.4}, {0.5, 0.3, 0.4}}, 10 + 2 * static_cast<int>(rng.below(10)), 2);
    const Box3 gb = s.grid_box();
    Vec3 target = gb.lo;
    for (int a = 0; a < 3; ++a) target[a] += gb.extent()[a] * rng.uniform();
    const Vec3 dir = normalized(Vec3(rng.normal(), rng.normal(), rng.normal()));
    const Ray r{target - dir * 3.0, dir};
    const auto segs = traverse(s, r);
    double t0, t1, sum = 0.0;
    ASSERT_TRUE(oracle::ray_box(s.grid_box(), r, t0, t1));
    for (size_t i = 0; i < segs.size(); ++i) {
      EXPECT_GT(segs[i].length(), 0.0);
      if (i > 0) EXPECT_NEAR(segs[i].t_enter, segs[i - 1].t_exit, 1e-12);
      sum += segs[i].length();
    }
    EXPECT_NEAR(sum, t1 - t0, 1e-9);
    // Each segment's midpoint lies in the voxel it names.
    for (const RaySegment& g : segs) EXPECT_EQ(oracle::voxel_at(s, r.origin + r.dir * g.t_mid()), long(g.voxel));
  }
}

TEST(InitLogits, DefinitionExamples) {
  const GridSpec s = make_grid_spec(kUnit, 1, 1);
  Palette pal{{{1, 0, 0}, {0, 0, 1}}};
  const std::vector<Rgb> red{{1, 0, 0}};
  const auto l = init_logits<double>(s, red, pal, 1.0);
  EXPECT_DOUBLE_EQ(l.values[0], 0.0);
  EXPECT_NEAR(l.values[1], -std::sqrt(2.0), 1e-15);
  EXPECT_EQ(finalize(l)[0], 0);
  const std::vector<Rgb> mid{{0.5, 0, 0.5}};
  const auto t = init_logits<double>(s, mid, pal, 1.0);
  EXPECT_EQ(t.values[0], t.values[1]);
  EXPECT_EQ(finalize(t)[0], 0);
}

TEST(InitLogitsProperty, ScaleDoesNotChangeArgmax) {
  const GridSpec s = make_grid_spec(kUnit, 6, 1);
  Rng rng(2);
  std::vector<Rgb> rgb(s.voxel_count());
  for (Rgb& c : rgb) c = {rng.uniform(), rng.uniform(), rng.uniform()};
  Palette pal{{{0, 0, 0}, {1, 1, 1}, {1, 0, 0}, {0.2, 0.7, 0.4}}};
  EXPECT_EQ(finalize(init_logits<double>(s, rgb, pal, 1.0)), finalize(init_logits<double>(s, rgb, pal, 5.0)));
}

TEST(InitLogitsProperty, ArgmaxIsNearestPaletteColor) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const GridSpec s = make_grid_spec(kUnit, 8, 1);
    ColorGrid<double> g(s, 0.0);
    for (double& r : g.raw) r = 3.0 * rng.normal();
    Palette pal;
    for (int k = 0; k < 2 + static_cast<int>(rng.below(7)); ++k) pal.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    const auto idx = finalize(init_logits(g, pal));
    for (size_t v = 0; v < s.voxel_count(); ++v) {
      const Rgb c = g.rgb(v);
      int best = 0;
      for (int n = 1; n < pal.size(); ++n)
        if (distance(c, pal.colors[n]) < distance(c, pal.colors[best])) best = n;
      ASSERT_EQ(idx[v], best) << "seed " << seed << " voxel " << v;
    }
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto dir = testing::scratch_dir("vxg");
  const GridSpec s = make_grid_spec({{0, 0, 0}, {1, 0.5, 0.75}}, 8, 1);
  Rng rng(6);
  DensityGrid<double> d(s, 0.0);
  for (double& r : d.raw) r = rng.normal() * 10;
  std::vector<double> vals(s.voxel_count() * 5);
  for (double& v : vals) v = rng.normal();
  const Checkpoint ck = make_checkpoint(d, vals, 5);
  write_checkpoint(dir / "a.vxg", ck);
  EXPECT_EQ(read_checkpoint(dir / "a.vxg"), ck);
  const auto bytes = read_bytes(dir / "a.vxg");
  EXPECT_EQ(bytes.size(), 4 + 16 + 4 * s.voxel_count() * 6);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VXG1");
  EXPECT_EQ(bytes[4], 8);  // Nx little endian
}

TEST(Checkpoint, BadMagicAndTruncation) {
  const auto dir = testing::scratch_dir("vxg_bad");
  write_bytes(dir / "m.vxg", {'N', 'O', 'P', 'E', 0, 0, 0, 0});
  EXPECT_THROW(read_checkpoint(dir / "m.vxg"), Error);
  write_bytes(dir / "t.vxg", {'V', 'X', 'G', '1', 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 0, 0});
  EXPECT_THROW(read_checkpoint(dir / "t.vxg"), Error);
}

}  // namespace
}  // namespace voxify
