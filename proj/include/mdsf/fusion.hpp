#pragma once

#include "mdsf/attention.hpp"
#include "mdsf/layers.hpp"
#include "mdsf/pyramid_set.hpp"
#include "mdsf/ssm.hpp"

#include <array>
#include <vector>

namespace mdsf {

/// Adjacent pyramid levels, aligned to one target level and projected.
struct ModulatorFeatures {
  Tensor features;  // [C_m, H, W]
};

/// Levels adjacent to `target`: {4} for 3, {3,5} for 4, {4} for 5.
std::vector<int> adjacent_levels(int target);

/// Bilinearly resizes the adjacent levels to the target's H x W, concatenates
/// them on channels, and applies `projection` (input width C * #neighbours).
ModulatorFeatures build_modulator(const PyramidSet& levels, int target, const Pointwise& projection);

/// g = sigmoid(sum over the four scan directions of scan(branch)), where every
/// direction reads the same per-position selective inputs in its own order.
Tensor fus_gate(const Tensor& branch, const SelectiveInputs& inputs, const SSMParams& params);

/// (1 - alpha) * branch + alpha * (branch * gate); alpha is a one-element tensor.
Tensor scm_blend(const Tensor& branch, const Tensor& gate, const Tensor& alpha);

/// LN over channels of concat(branches) + skip.
Tensor afr(const std::vector<Tensor>& branches, const Tensor& skip);

/// SSM whose (delta, B, C) come from a projection of modulator features.
struct FusSSM {
  Pointwise w_p;  // C_m -> C_b + 2S
  Tensor a_log;   // [C_b, S], A = -exp(a_log), shared by all four directions
  Tensor d;       // [C_b]

  static FusSSM init(Index branch_channels, Index modulator_channels, Index state_size, Rng& rng);

  Index branch_channels() const { return d.numel(); }
  Index state_size() const { return a_log.shape()[1]; }
  SSMParams ssm() const;

  /// Splits W_p F_m per position into (softplus delta + floor, B, C); rows are row-major positions.
  SelectiveInputs derive(const ModulatorFeatures& mod) const;
  /// The gate g for `branch`.
  Tensor operator()(const Tensor& branch, const ModulatorFeatures& mod) const;
  std::vector<Tensor> parameters() const;
};

/// One branch's cross-scale modulation: modulator projection, FusSSM gate, blend.
struct SCMBlock {
  Pointwise modulator_proj;
  FusSSM fus;
  Tensor alpha;  // [1], starts at 0.5

  static SCMBlock init(Index channels, Index branch_channels, int level, Index state_size, Rng& rng);

  Tensor operator()(const Tensor& branch, const PyramidSet& levels, int level) const;
  std::vector<Tensor> parameters() const;
};

struct EncoderConfig {
  Index channels = 12;
  MSDAConfig msda{};
  Index state_size = 4;
};

/// Per level: MSDA -> per-branch SCM -> AFR.
struct DFMambaEncoder {
  EncoderConfig config;
  std::array<MSDA, 3> msda;
  std::array<std::vector<SCMBlock>, 3> scm;

  static DFMambaEncoder init(const EncoderConfig& config, Rng& rng);

  PyramidSet operator()(const PyramidSet& levels) const;
  /// Overwrites every SCM alpha.
  void set_alpha(double value);
  /// Zeroes every FusSSM W_p (weights and bias).
  void zero_modulator_projection();
  std::vector<Tensor> parameters() const;
};

}  // namespace mdsf
