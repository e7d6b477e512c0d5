#pragma once

#include "mdsf/layers.hpp"
#include "mdsf/pyramid_set.hpp"
#include "mdsf/ssm.hpp"

#include <array>
#include <vector>

namespace mdsf {

/// Local depthwise branch (DW3 and DW5, each with pointwise mixing) next to a
/// Mamba mixer, merged onto the input through learnable scalar weights:
/// out = x + w_local * local(x) + w_global * mixer(x).
struct HybridBlock {
  DepthwiseConv dw3;
  DepthwiseConv dw5;
  Pointwise pw3;
  Pointwise pw5;
  MambaMixer global;
  Tensor w_local;   // [1]
  Tensor w_global;  // [1]

  static HybridBlock init(Index channels, Index state_size, Rng& rng);

  Tensor local(const Tensor& x) const;
  Tensor operator()(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
};

/// SE-style channel attention followed by a depthwise 3x3 refinement.
struct ContrastEnhancement {
  Pointwise squeeze;  // C -> C / r
  Pointwise excite;   // C / r -> C
  DepthwiseConv refine;

  static constexpr Index kReduction = 4;
  static ContrastEnhancement init(Index channels, Rng& rng);

  /// sigmoid(MLP(global average pool)), shape [C,1,1].
  Tensor channel_weights(const Tensor& x) const;
  Tensor operator()(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
};

/// Two stacked depthwise 3x3 layers measure edge energy; the map
/// sigmoid(pointwise(sum_c |e|)) reweights spatial positions.
struct EdgeAttention {
  DepthwiseConv first;
  DepthwiseConv second;
  Pointwise score;  // 1 -> 1

  static EdgeAttention init(Index channels, Rng& rng);

  /// Spatial weights [1,H,W].
  Tensor edge_map(const Tensor& x) const;
  Tensor operator()(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
};

/// Parallel depthwise 3x3 at dilations {1,2,3} plus a pointwise branch,
/// concatenated and projected back to C channels.
struct MultiScaleEnhancer {
  std::array<DepthwiseConv, 3> dilated;
  Pointwise pointwise;
  Pointwise project;  // 4C -> C

  static MultiScaleEnhancer init(Index channels, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
};

/// Lateral projection and contrast -> edge -> multi-scale cascade for one level.
struct EFPNLevel {
  Pointwise lateral;
  ContrastEnhancement contrast;
  EdgeAttention edge;
  MultiScaleEnhancer enhancer;

  Tensor operator()(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
};

/// Enhanced bidirectional pyramid: per-level enhancement, a top-down
/// upsample-add pass, then a bottom-up stride-2 depthwise downsample-add pass.
struct EFPN {
  std::array<EFPNLevel, 3> levels;
  std::array<DepthwiseConv, 2> down;  // 3->4, 4->5

  static EFPN init(const std::array<Index, 3>& in_channels, Index channels, Rng& rng);

  Index channels() const { return levels[0].lateral.out_channels(); }
  /// backbone = {F3, F4, F5}; throws ConfigError when sizes do not halve.
  PyramidSet operator()(const std::array<Tensor, 3>& backbone) const;
  std::vector<Tensor> parameters() const;
};

}  // namespace mdsf
