#pragma once

// Training hyperparameters, their key=value config-file form and JSON snapshot.

#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "losses.hpp"
#include "optim.hpp"
#include "quantizer.hpp"

namespace voxify {

struct TrainConfig {
  int stage1_iters = 8000;
  int stage2_iters = 6500;
  int batch_rays = 8192;
  double lr_density_s1 = 0.1;
  double lr_color_s1 = 0.1;
  double lr_density_s2 = 5e-3;
  double lr_logit_s2 = 0.1;
  int lr_decay_step = 20;
  LrDecay lr_decay = LrDecay::kExponential;
  double lr_step_gamma = 0.99;
  AdamConfig adam;

  // Stage-2 schedule breakpoints, in schedule iterations (see schedule_iter()).
  int front_only_after = 4500;
  int switch_iter = 3000;
  LossWeights weights;
  TemperatureSchedule tau_schedule;
  /// When true and stage2_iters differs from schedule_length, stage-2
  /// iterations are mapped linearly onto [0, schedule_length) before the
  /// schedules are consulted.
  bool rescale_schedules = true;
  int schedule_length = 6500;

  double logit_init_scale = 5.0;
  /// Stage-2 depth targets are the mesh depth plus this many voxel edges, so
  /// an opaque voxel whose face lies on the surface matches its midpoint depth.
  double depth_target_offset = 0.5;
  int patch_size = 80;
  // Raw (pre-softplus) stage-1 density. Per-voxel alpha ~0.01 at 16³: lower
  // traps the grid transparent under the entropy term, higher leaves floaters.
  double density_init = -2.0;
  double transmittance_cutoff = 1e-4;
  int checkpoint_every = 1000;
  uint64_t seed = 0;

  int schedule_iter(int iter) const {
    if (!rescale_schedules || stage2_iters <= 0 || stage2_iters == schedule_length) return iter;
    return static_cast<int>(static_cast<long long>(iter) * schedule_length / stage2_iters);
  }

  void validate() const {
    if (stage1_iters < 0 || stage2_iters < 0) throw Error(ErrorCode::kInvalidArgument, "iteration counts must be >= 0");
    if (batch_rays < 1) throw Error(ErrorCode::kInvalidArgument, "batch_rays must be positive");
    for (double lr : {lr_density_s1, lr_color_s1, lr_density_s2, lr_logit_s2})
      if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rates must be positive");
    const int horizon = rescale_schedules ? schedule_length : stage2_iters;
    if (front_only_after > horizon && stage2_iters > 0)
      throw Error(ErrorCode::kInvalidArgument, "front_only_after exceeds the stage-2 schedule");
    if (patch_size < 8 || patch_size % 8 != 0) throw Error(ErrorCode::kInvalidArgument, "patch_size must be a multiple of 8");
    weights.validate();
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"stage1_iters", c.stage1_iters},
      {"stage2_iters", c.stage2_iters},
      {"batch_rays", c.batch_rays},
      {"lr_density_s1", c.lr_density_s1},
      {"lr_color_s1", c.lr_color_s1},
      {"lr_density_s2", c.lr_density_s2},
      {"lr_logit_s2", c.lr_logit_s2},
      {"lr_decay_step", c.lr_decay_step},
      {"lr_decay", decay_name(c.lr_decay)},
      {"lr_step_gamma", c.lr_step_gamma},
      {"optimizer", {{"name", "adam"}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
      {"front_only_after", c.front_only_after},
      {"switch_iter", c.switch_iter},
      {"tau_schedule", c.tau_schedule.to_string()},
      {"rescale_schedules", c.rescale_schedules},
      {"schedule_length", c.schedule_length},
      {"weights",
       {{"pixel", c.weights.pixel},
        {"depth", c.weights.depth},
        {"depth_late", c.weights.depth_late},
        {"depth_switch_iter", c.weights.depth_switch_iter},
        {"alpha", c.weights.alpha},
        {"clip", c.weights.clip},
        {"clip_until_iter", c.weights.clip_until_iter},
        {"bg", c.weights.bg},
        {"density_tv", c.weights.density_tv}}},
      {"logit_init_scale", c.logit_init_scale},
      {"depth_target_offset", c.depth_target_offset},
      {"patch_size", c.patch_size},
      {"density_init", c.density_init},
      {"transmittance_cutoff", c.transmittance_cutoff},
      {"checkpoint_every", c.checkpoint_every},
      {"seed", c.seed},
  };
}

/// Parses "key = value" lines ('#' starts a comment).
inline std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kUnreadableFile, path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r\"");
    const auto e = s.find_last_not_of(" \t\r\"");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = line.substr(0, line.find('#'));
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kInvalidArgument, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

/// Applies one training key; returns false if the key is not a training key.
inline bool apply_train_key(TrainConfig& c, const std::string& key, const std::string& value) {
  auto to_int = [&] { return std::stoi(value); };
  auto to_double = [&] { return std::stod(value); };
  try {
    if (key == "stage1_iters") c.stage1_iters = to_int();
    else if (key == "stage2_iters") c.stage2_iters = to_int();
    else if (key == "batch_rays") c.batch_rays = to_int();
    else if (key == "lr_density_s1") c.lr_density_s1 = to_double();
    else if (key == "lr_color_s1") c.lr_color_s1 = to_double();
    else if (key == "lr_density_s2") c.lr_density_s2 = to_double();
    else if (key == "lr_logit_s2") c.lr_logit_s2 = to_double();
    else if (key == "lr_decay_step") c.lr_decay_step = to_int();
    else if (key == "lr_decay") {
      if (value == "exponential") c.lr_decay = LrDecay::kExponential;
      else if (value == "step") c.lr_decay = LrDecay::kStep;
      else throw Error(ErrorCode::kInvalidArgument, "lr_decay must be exponential or step");
    } else if (key == "lr_step_gamma") c.lr_step_gamma = to_double();
    else if (key == "adam_beta1") c.adam.beta1 = to_double();
    else if (key == "adam_beta2") c.adam.beta2 = to_double();
    else if (key == "adam_epsilon") c.adam.epsilon = to_double();
    else if (key == "front_only_after") c.front_only_after = to_int();
    else if (key == "switch_iter") c.switch_iter = to_int();
    else if (key == "tau_schedule") c.tau_schedule = TemperatureSchedule::parse(value);
    else if (key == "rescale_schedules") c.rescale_schedules = value == "true" || value == "1";
    else if (key == "schedule_length") c.schedule_length = to_int();
    else if (key == "lambda_pixel") c.weights.pixel = to_double();
    else if (key == "lambda_depth") c.weights.depth = to_double();
    else if (key == "lambda_depth_late") c.weights.depth_late = to_double();
    else if (key == "depth_switch_iter") c.weights.depth_switch_iter = to_int();
    else if (key == "lambda_alpha") c.weights.alpha = to_double();
    else if (key == "lambda_clip") c.weights.clip = to_double();
    else if (key == "clip_until_iter") c.weights.clip_until_iter = to_int();
    else if (key == "lambda_bg") c.weights.bg = to_double();
    else if (key == "lambda_density") c.weights.density_tv = to_double();
    else if (key == "logit_init_scale") c.logit_init_scale = to_double();
    else if (key == "depth_target_offset") c.depth_target_offset = to_double();
    else if (key == "patch_size") c.patch_size = to_int();
    else if (key == "density_init") c.density_init = to_double();
    else if (key == "transmittance_cutoff") c.transmittance_cutoff = to_double();
    else if (key == "checkpoint_every") c.checkpoint_every = to_int();
    else if (key == "seed") c.seed = std::stoull(value);
    else return false;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "bad value '" + value + "' for " + key);
  }
  return true;
}

}  // namespace voxify
