#pragma once

#include "mdsf/losses.hpp"
#include "mdsf/model.hpp"
#include "mdsf/synthetic.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mdsf {

struct SmokeConfig {
  int steps = 300;
  double lr = 0.02;
  std::uint64_t seed = 7;
  Index image_size = 64;
  int scene_pool = 8;  // steps cycle through this many generated scenes
  ToyConfig model{};
  LossConfig loss{};
  SceneConfig scene{};
};

/// Applies one named ablation: "hybrid", "alpha", "csc" or "omega".
/// Throws ConfigError for anything else.
void disable_component(SmokeConfig& cfg, const std::string& name);

/// Seeds of the scene pool, derived from the run seed.
std::vector<std::uint64_t> scene_seeds(std::uint64_t seed, int count);

/// Plain gradient descent, one scene per step (scene t mod pool).
/// Returns the loss report of every step, taken before its update. Throws
/// NonFiniteError naming the first non-finite term and the step.
std::vector<LossReport> smoke_train(const SmokeConfig& cfg);

/// Loss of one scene under `model`, with geometric matching and centre sampling.
LossTerms scene_loss(const ToyMambaDSF& model, const SyntheticScene& scene, const LossConfig& cfg);

/// Mean `total` (or `csc` when `csc` is set) over curve[first, first + count).
double window_mean(const std::vector<LossReport>& curve, std::size_t first, std::size_t count, bool csc = false);

}  // namespace mdsf
