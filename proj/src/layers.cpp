#include "mdsf/layers.hpp"

#include "mdsf/errors.hpp"

#include <cmath>

namespace mdsf {

Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::VectorXd v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::VectorXd v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

void append(std::vector<Tensor>& to, const std::vector<Tensor>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

Pointwise Pointwise::init(Index in, Index out, Rng& rng, double gain) {
  return {randn({out, in}, gain / std::sqrt(static_cast<double>(in)), rng), randn({out}, 0.1, rng)};
}

Pointwise Pointwise::zeros(Index in, Index out) {
  return {Tensor({out, in}, true), Tensor({out}, true)};
}

Tensor Pointwise::operator()(const Tensor& x) const {
  if (x.rank() != 3 || x.shape()[0] != in_channels()) {
    throw DimensionError("pointwise expects [" + std::to_string(in_channels()) + ",H,W], got " +
                         to_string(x.shape()));
  }
  const Index h = x.shape()[1], w = x.shape()[2];
  const Tensor flat = reshape(x, {in_channels(), h * w});
  const Tensor y = matmul(weight, flat) + reshape(bias, {out_channels(), 1});
  return reshape(y, {out_channels(), h, w});
}

Tensor Pointwise::apply_tokens(const Tensor& tokens) const {
  if (tokens.rank() != 2 || tokens.shape()[1] != in_channels()) {
    throw DimensionError("pointwise tokens expect [L," + std::to_string(in_channels()) + "], got " +
                         to_string(tokens.shape()));
  }
  return matmul(tokens, transpose(weight)) + reshape(bias, {1, out_channels()});
}

DepthwiseConv DepthwiseConv::init(Index channels, Index size, Rng& rng, Index dilation, Index stride) {
  return {randn({channels, size, size}, 1.0 / static_cast<double>(size), rng), dilation, stride};
}

DepthwiseConv DepthwiseConv::delta(Index channels, Index size, Index dilation) {
  Tensor k({channels, size, size}, true);
  const Index c = size / 2;
  for (Index ch = 0; ch < channels; ++ch) k.mutable_value()[(ch * size + c) * size + c] = 1.0;
  return {k, dilation, 1};
}

ChannelNorm ChannelNorm::init(Index channels) {
  return {Tensor::full({channels}, 1.0, true), Tensor({channels}, true)};
}

Tensor ChannelNorm::operator()(const Tensor& x) const {
  const Index c = gamma.numel();
  return layer_norm(x, 0) * reshape(gamma, {c, 1, 1}) + reshape(beta, {c, 1, 1});
}

Tensor to_tokens(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("to_tokens expects [C,H,W], got " + to_string(x.shape()));
  const Index c = x.shape()[0];
  return transpose(reshape(x, {c, x.shape()[1] * x.shape()[2]}));
}

Tensor from_tokens(const Tensor& tokens, Index h, Index w) {
  if (tokens.rank() != 2 || tokens.shape()[0] != h * w) {
    throw DimensionError("from_tokens: " + to_string(tokens.shape()) + " is not [" + std::to_string(h * w) + ",C]");
  }
  return reshape(transpose(tokens), {tokens.shape()[1], h, w});
}

}  // namespace mdsf
