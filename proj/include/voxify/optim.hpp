#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace voxify {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

/// Adam with bias correction; moments kept in double.
template <typename Real>
class Adam {
 public:
  Adam() = default;
  Adam(size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<Real> params, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double update = lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
      params[i] = static_cast<Real>(static_cast<double>(params[i]) - update);
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

enum class LrDecay { kExponential, kStep };

inline const char* decay_name(LrDecay d) { return d == LrDecay::kExponential ? "exponential" : "step"; }

/// kExponential: lr · 0.1^(⌊iter/step⌋·step / total), re-evaluated every `step`
/// iterations. kStep: lr · gamma^⌊iter/step⌋.
struct LrSchedule {
  double base = 0.1;
  int total_iters = 1;
  int decay_step = 20;
  LrDecay kind = LrDecay::kExponential;
  double decay_factor = 0.1;
  double step_gamma = 0.99;

  double at(int iter) const {
    const int stepped = decay_step > 0 ? (iter / decay_step) * decay_step : iter;
    if (kind == LrDecay::kExponential)
      return base * std::pow(decay_factor, static_cast<double>(stepped) / std::max(1, total_iters));
    return base * std::pow(step_gamma, decay_step > 0 ? iter / decay_step : 0);
  }
};

}  // namespace voxify
