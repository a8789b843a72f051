#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace voxify {
namespace {

Patch random_patch(int P, uint64_t seed) {
  Rng rng(seed);
  Patch p(P);
  for (Rgb& c : p.pixels) c = {rng.uniform(), rng.uniform(), rng.uniform()};
  return p;
}

// Smooth blobs: a less adversarial input for finite differences than noise.
Patch smooth_patch(int P, uint64_t seed, int dx = 0) {
  Rng rng(seed);
  const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
  Patch p(P);
  for (int y = 0; y < P; ++y)
    for (int x = 0; x < P; ++x) {
      const double u = (x + dx) / double(P), v = y / double(P);
      p.at(x, y) = {0.5 + 0.4 * std::sin(6 * u + a * 6), 0.5 + 0.4 * std::cos(5 * v + b * 6),
                    0.5 + 0.3 * std::sin(4 * (u + v) + c * 6)};
    }
  return p;
}

double norm_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

TEST(Builtin, EmbeddingIsUnitNorm) {
  for (int P : {8, 16, 80}) EXPECT_NEAR(norm_of(BuiltinEmbedder::embed(random_patch(P, P))), 1.0, 1e-12);
}

TEST(Builtin, IdenticalPatchesHaveZeroLoss) {
  BuiltinEmbedder e;
  const Patch p = random_patch(16, 1);
  EXPECT_NEAR(e.loss_and_grad(p, p)->loss, 0.0, 1e-12);
  Patch flat(16);
  for (Rgb& c : flat.pixels) c = {0.3, 0.3, 0.3};
  EXPECT_NEAR(e.loss_and_grad(flat, flat)->loss, 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(BuiltinEmbedder::embed(flat)[0]));
}

TEST(Builtin, SensitiveToTranslationAndContent) {
  BuiltinEmbedder e;
  const Patch p = smooth_patch(32, 3);
  const double shifted = e.loss_and_grad(smooth_patch(32, 3, 5), p)->loss;
  const double other = e.loss_and_grad(random_patch(32, 4), p)->loss;
  EXPECT_GT(shifted, 1e-4);
  EXPECT_GT(other, shifted);
}

TEST(Builtin, RejectsBadPatchSizes) {
  EXPECT_THROW(BuiltinEmbedder::embed(Patch(12)), Error);
  EXPECT_THROW(BuiltinEmbedder::embed(Patch(4)), Error);
}

TEST(Builtin, GradientMatchesFiniteDifferences) {
  BuiltinEmbedder e;
  const int P = 80;
  Patch r = smooth_patch(P, 9);
  const Patch t = smooth_patch(P, 10);
  const auto res = e.loss_and_grad(r, t);
  ASSERT_TRUE(res);
  double scale = 0.0;
  for (const Rgb& g : res->grad) scale = std::max({scale, std::abs(g.x), std::abs(g.y), std::abs(g.z)});
  Rng rng(11);
  double worst = 0.0;
  for (int probe = 0; probe < 200; ++probe) {
    const size_t i = rng.below(r.pixels.size());
    const int c = static_cast<int>(rng.below(3));
    const double h = 1e-6, x = r.pixels[i][c];
    r.pixels[i][c] = x + h;
    const double fp = e.loss_and_grad(r, t)->loss;
    r.pixels[i][c] = x - h;
    const double fm = e.loss_and_grad(r, t)->loss;
    r.pixels[i][c] = x;
    const double num = (fp - fm) / (2 * h), ana = res->grad[i][c];
    worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-2 * scale}));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Wire, RequestLayout) {
  const Patch a = random_patch(8, 1), b = random_patch(8, 2);
  const auto req = vemb::encode_request(a, b);
  ASSERT_EQ(req.size(), vemb::kHeaderBytes + 2 * 8 * 8 * 3 * 4);
  EXPECT_EQ(std::string(req.begin(), req.begin() + 4), "VEMB");
  EXPECT_EQ(vemb::read_u32(req.data() + 4), 8u);
  EXPECT_EQ(vemb::read_u32(req.data() + 8), 1u);
  EXPECT_EQ(vemb::read_u32(req.data() + 12), 0u);
  EXPECT_EQ(vemb::read_f32(req.data() + 16), static_cast<float>(a.pixels[0].x));
  EXPECT_EQ(vemb::reply_bytes(8, 1), 4u + 8 * 8 * 3 * 4);
}

std::string stub(const std::string& mode) { return std::string(VOXIFY_VEMB_STUB) + " " + mode; }

struct WarningCapture {
  std::vector<std::string> lines;
  WarningSink saved = warning_sink();
  WarningCapture() {
    warning_sink() = [this](const std::string& m) { lines.push_back(m); };
  }
  ~WarningCapture() { warning_sink() = saved; }
};

TEST(External, MatchesBuiltinWithinSinglePrecision) {
  ExternalEmbedder ext(stub("builtin"));
  BuiltinEmbedder in;
  const Patch r = smooth_patch(16, 1), t = smooth_patch(16, 2);
  const auto a = ext.loss_and_grad(r, t);
  const auto b = in.loss_and_grad(r, t);
  ASSERT_TRUE(a);
  EXPECT_NEAR(a->loss, b->loss, 1e-5);
  for (size_t i = 0; i < a->grad.size(); ++i) EXPECT_LT(distance(a->grad[i], b->grad[i]), 1e-5);
  // The child stays up between calls.
  EXPECT_TRUE(ext.loss_and_grad(r, t));
}

TEST(External, ZeroReply) {
  ExternalEmbedder ext(stub("zero"));
  const auto a = ext.loss_and_grad(random_patch(8, 1), random_patch(8, 2));
  ASSERT_TRUE(a);
  EXPECT_EQ(a->loss, 0.0);
  for (const Rgb& g : a->grad) EXPECT_EQ(g, Rgb());
}

TEST(External, NonFiniteReplyIsSkippedWithWarning) {
  WarningCapture w;
  ExternalEmbedder ext(stub("nan"));
  EXPECT_FALSE(ext.loss_and_grad(random_patch(8, 1), random_patch(8, 2)));
  ASSERT_EQ(w.lines.size(), 1u);
  EXPECT_NE(w.lines[0].find("non-finite"), std::string::npos);
}

TEST(External, MisbehavingChildrenAreSkipped) {
  for (const char* mode : {"crash", "short"}) {
    WarningCapture w;
    ExternalEmbedder ext(stub(mode), std::chrono::seconds(5));
    EXPECT_FALSE(ext.loss_and_grad(random_patch(8, 1), random_patch(8, 2))) << mode;
    EXPECT_EQ(w.lines.size(), 1u) << mode;
    // Restarted on the next call, fails the same way.
    EXPECT_FALSE(ext.loss_and_grad(random_patch(8, 1), random_patch(8, 2))) << mode;
  }
}

TEST(External, HangTimesOut) {
  WarningCapture w;
  ExternalEmbedder ext(stub("hang"), std::chrono::milliseconds(300));
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_FALSE(ext.loss_and_grad(random_patch(8, 1), random_patch(8, 2)));
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
  EXPECT_EQ(w.lines.size(), 1u);
}

TEST(External, MissingCommandIsSkipped) {
  WarningCapture w;
  ExternalEmbedder ext("/nonexistent/embedder", std::chrono::seconds(2));
  EXPECT_FALSE(ext.loss_and_grad(random_patch(8, 1), random_patch(8, 2)));
  EXPECT_FALSE(w.lines.empty());
}

}  // namespace
}  // namespace voxify
