#pragma once

#include "mdsf/ops.hpp"
#include "mdsf/tensor.hpp"

#include <random>
#include <vector>

namespace mdsf {

using Rng = std::mt19937_64;

/// Trainable tensor with i.i.d. N(0, stddev^2) entries.
Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = true);
Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = true);

/// Appends every tensor in `from` to `to`.
void append(std::vector<Tensor>& to, const std::vector<Tensor>& from);

/// 1x1 convolution: x[C_in,H,W] -> W[C_out,C_in] x + b. Also used on [L,C]
/// token matrices through `apply_tokens`.
struct Pointwise {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  static Pointwise init(Index in, Index out, Rng& rng, double gain = 1.0);
  static Pointwise zeros(Index in, Index out);

  Index in_channels() const { return weight.shape()[1]; }
  Index out_channels() const { return weight.shape()[0]; }

  Tensor operator()(const Tensor& x) const;
  /// tokens[L, in] -> [L, out]
  Tensor apply_tokens(const Tensor& tokens) const;
  std::vector<Tensor> parameters() const { return {weight, bias}; }
};

struct DepthwiseConv {
  Tensor kernel;  // [C, k, k]
  Index dilation = 1;
  Index stride = 1;

  static DepthwiseConv init(Index channels, Index size, Rng& rng, Index dilation = 1, Index stride = 1);
  /// Kernel with a single 1 at the centre tap.
  static DepthwiseConv delta(Index channels, Index size, Index dilation = 1);

  Tensor operator()(const Tensor& x) const { return depthwise_conv2d(x, kernel, dilation, stride); }
  std::vector<Tensor> parameters() const { return {kernel}; }
};

/// Layer norm over the channel axis of x[C,H,W] followed by a per-channel affine map.
struct ChannelNorm {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]

  static ChannelNorm init(Index channels);
  Tensor operator()(const Tensor& x) const;
  std::vector<Tensor> parameters() const { return {gamma, beta}; }
};

/// [C,H,W] -> [H*W, C] with tokens in row-major raster order.
Tensor to_tokens(const Tensor& x);
/// [H*W, C] -> [C,H,W]
Tensor from_tokens(const Tensor& tokens, Index h, Index w);

}  // namespace mdsf
