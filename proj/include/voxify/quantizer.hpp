#pragma once

// Differentiable palette selection with Gumbel-Softmax: counter-based noise,
// temperature softmax, straight-through forward, annealing schedule and the
// final argmax snap.

#include <sstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "palette.hpp"
#include "voxgrid.hpp"

namespace voxify {

/// Piecewise-constant iteration → τ map given as sorted (start_iter, τ) steps.
class TemperatureSchedule {
 public:
  TemperatureSchedule() : steps_{{0, 1.0}, {1000, 0.8}, {3000, 0.3}, {4000, 0.6}, {5000, 0.3}, {6001, 0.1}} {}

  explicit TemperatureSchedule(std::vector<std::pair<int, double>> steps) : steps_(std::move(steps)) {
    if (steps_.empty() || steps_.front().first != 0)
      throw Error(ErrorCode::kInvalidArgument, "temperature schedule must start at iteration 0");
    for (size_t i = 0; i < steps_.size(); ++i) {
      if (!(steps_[i].second > 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
      if (i > 0 && steps_[i].first <= steps_[i - 1].first)
        throw Error(ErrorCode::kInvalidArgument, "temperature schedule must be strictly increasing");
    }
  }

  /// Parses "0:1.0,1000:0.8,...".
  static TemperatureSchedule parse(const std::string& text) {
    std::vector<std::pair<int, double>> steps;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "bad schedule entry '" + item + "'");
      try {
        steps.emplace_back(std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kInvalidArgument, "bad schedule entry '" + item + "'");
      }
    }
    return TemperatureSchedule(std::move(steps));
  }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    for (size_t i = 0; i < steps_.size(); ++i) os << (i ? "," : "") << steps_[i].first << ':' << steps_[i].second;
    return os.str();
  }

  double tau(int iteration) const {
    double t = steps_.front().second;
    for (const auto& [start, value] : steps_)
      if (iteration >= start) t = value;
    return t;
  }

  const std::vector<std::pair<int, double>>& steps() const { return steps_; }

 private:
  std::vector<std::pair<int, double>> steps_;
};

enum class QuantMode { kSoft, kStraightThrough, kDeterministic };

inline const char* mode_name(QuantMode m) {
  switch (m) {
    case QuantMode::kSoft: return "soft";
    case QuantMode::kStraightThrough: return "st";
    case QuantMode::kDeterministic: return "det";
  }
  return "?";
}

/// Soft before `switch_iter`, straight-through from it on.
inline QuantMode mode_for(int iteration, int switch_iter = 3000) {
  return iteration < switch_iter ? QuantMode::kSoft : QuantMode::kStraightThrough;
}

/// Gumbel(0,1) noise keyed by (seed, iteration, voxel, palette slot), so any
/// voxel's noise can be regenerated independently of evaluation order.
struct GumbelSampler {
  uint64_t seed = 0;
  QuantMode mode = QuantMode::kSoft;
};

inline void sample_gumbel(const GumbelSampler& s, int iteration, size_t voxel, std::span<double> out) {
  if (s.mode == QuantMode::kDeterministic) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  constexpr double eps = 1e-10;
  const uint64_t base = hash_combine(hash_combine(s.seed, static_cast<uint64_t>(iteration)), voxel);
  for (size_t n = 0; n < out.size(); ++n) {
    const double u = eps + (1.0 - 2.0 * eps) * to_unit(hash_combine(base, n));
    out[n] = -std::log(-std::log(u));
  }
}

inline std::vector<double> sample_gumbel(const GumbelSampler& s, int iteration, size_t voxel, int colors) {
  std::vector<double> g(colors);
  sample_gumbel(s, iteration, voxel, g);
  return g;
}

/// s_n = softmax((λ + g) / τ), evaluated with max subtraction. `noise` may be empty.
template <typename Real>
void soft_weights(std::span<const Real> logits, double tau, std::span<const double> noise, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t n = 0; n < logits.size(); ++n) {
    out[n] = (static_cast<double>(logits[n]) + (noise.empty() ? 0.0 : noise[n])) / tau;
    mx = std::max(mx, out[n]);
  }
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
}

inline std::vector<double> soft_weights(std::span<const double> logits, double tau, std::span<const double> noise = {}) {
  std::vector<double> out(logits.size());
  soft_weights<double>(logits, tau, noise, out);
  return out;
}

/// First index of the maximum.
inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct VoxelColor {
  Rgb rgb;
  std::vector<double> soft;  // soft weights; the backward pass always uses these
  int selected = 0;          // argmax of the soft weights
};

/// Soft: Σ s_n c_n. Straight-through/deterministic: c_{argmax s}, with the
/// soft-weight Jacobian used for backpropagation.
template <typename Real>
void voxel_color(std::span<const Real> logits, const Palette& palette, double tau, QuantMode mode,
                 std::span<const double> noise, VoxelColor& out) {
  out.soft.resize(logits.size());
  soft_weights<Real>(logits, tau, noise, out.soft);
  out.selected = argmax(out.soft);
  if (mode == QuantMode::kSoft) {
    out.rgb = {};
    for (size_t n = 0; n < out.soft.size(); ++n) out.rgb += palette.colors[n] * out.soft[n];
  } else {
    out.rgb = palette.colors[out.selected];
  }
}

inline VoxelColor voxel_color(std::span<const double> logits, const Palette& palette, double tau, QuantMode mode,
                              std::span<const double> noise = {}) {
  VoxelColor out;
  voxel_color<double>(logits, palette, tau, mode, noise, out);
  return out;
}

/// ∂L/∂λ_n = (s_n / τ) (g·c_n − g·Σ_m s_m c_m) for an upstream RGB gradient g.
inline void logit_grad(const VoxelColor& vc, const Palette& palette, double tau, const Rgb& grad_rgb,
                       std::span<double> out) {
  double mean = 0.0;
  for (size_t n = 0; n < vc.soft.size(); ++n) mean += vc.soft[n] * dot(grad_rgb, palette.colors[n]);
  for (size_t n = 0; n < vc.soft.size(); ++n) out[n] = vc.soft[n] / tau * (dot(grad_rgb, palette.colors[n]) - mean);
}

/// Per-voxel argmax of the logits, lowest index on ties.
template <typename Real>
std::vector<int> finalize(const LogitGrid<Real>& logits) {
  std::vector<int> idx(logits.spec.voxel_count());
  for (size_t v = 0; v < idx.size(); ++v) {
    const auto l = logits.logits(v);
    idx[v] = static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
  }
  return idx;
}

}  // namespace voxify
