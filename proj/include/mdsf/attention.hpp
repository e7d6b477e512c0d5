#pragma once

#include "mdsf/layers.hpp"
#include "mdsf/tensor.hpp"

#include <vector>

namespace mdsf {

struct MSDAConfig {
  std::vector<Index> dilations{1, 2, 3};

  Index branches() const { return static_cast<Index>(dilations.size()); }
  /// Throws ConfigError unless dilations are strictly increasing, >= 1, and
  /// `channels` splits evenly across branches.
  void validate(Index channels) const;
};

/// Softmax weights [9,H,W] of q[c,H,W] against the dilated 3x3 neighbourhood of k.
Tensor dilated_attention_weights(const Tensor& q, const Tensor& k, Index dilation);

/// out(p) = sum_j softmax_j(q(p) . k(p + o_j d) / sqrt(c)) v(p + o_j d) over the
/// nine offsets o_j in {-1,0,1}^2. Out-of-bounds keys and values are zero.
Tensor dilated_attention_branch(const Tensor& q, const Tensor& k, const Tensor& v, Index dilation);

/// Multi-scale dilated attention: 1x1 Q/K/V projections, channel split into
/// one group per dilation, one attention branch per group.
struct MSDA {
  MSDAConfig config;
  Pointwise q_proj;
  Pointwise k_proj;
  Pointwise v_proj;

  static MSDA init(Index channels, MSDAConfig config, Rng& rng);

  Index channels() const { return q_proj.in_channels(); }
  Index branch_channels() const { return channels() / config.branches(); }

  /// Returns the n_d branch outputs, each [C/n_d,H,W], in dilation order.
  std::vector<Tensor> operator()(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
};

}  // namespace mdsf
