#include "mdsf/attention.hpp"

#include "mdsf/errors.hpp"
#include "mdsf/ops.hpp"

#include <cmath>

namespace mdsf {

void MSDAConfig::validate(Index channels) const {
  if (dilations.empty()) throw ConfigError("MSDA needs at least one dilation");
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    if (dilations[i] < 1) throw ConfigError("MSDA dilations must be >= 1");
    if (i > 0 && dilations[i] <= dilations[i - 1]) throw ConfigError("MSDA dilations must be strictly increasing");
  }
  if (channels % branches() != 0) {
    throw ConfigError("channel count " + std::to_string(channels) + " is not divisible by " +
                      std::to_string(branches()) + " branches");
  }
}

Tensor dilated_attention_weights(const Tensor& q, const Tensor& k, Index dilation) {
  if (q.rank() != 3 || q.shape() != k.shape()) {
    throw DimensionError("attention q/k shapes differ: " + to_string(q.shape()) + " vs " + to_string(k.shape()));
  }
  const Index c = q.shape()[0], h = q.shape()[1], w = q.shape()[2];
  const Tensor keys = unfold_neighborhood(k, dilation);  // [c,9,h,w]
  const Tensor scores = sum(mul(reshape(q, {c, 1, h, w}), keys), 0);
  return softmax(scores * (1.0 / std::sqrt(static_cast<double>(c))), 0);
}

Tensor dilated_attention_branch(const Tensor& q, const Tensor& k, const Tensor& v, Index dilation) {
  if (v.shape() != q.shape()) {
    throw DimensionError("attention value shape " + to_string(v.shape()) + " != " + to_string(q.shape()));
  }
  const Index h = q.shape()[1], w = q.shape()[2];
  const Tensor weights = dilated_attention_weights(q, k, dilation);  // [9,h,w]
  const Tensor values = unfold_neighborhood(v, dilation);          // [c,9,h,w]
  return sum(mul(values, reshape(weights, {1, 9, h, w})), 1);
}

MSDA MSDA::init(Index channels, MSDAConfig config, Rng& rng) {
  config.validate(channels);
  return {std::move(config), Pointwise::init(channels, channels, rng), Pointwise::init(channels, channels, rng),
          Pointwise::init(channels, channels, rng)};
}

std::vector<Tensor> MSDA::operator()(const Tensor& x) const {
  config.validate(channels());
  const Tensor q = q_proj(x), k = k_proj(x), v = v_proj(x);
  const Index bc = branch_channels();
  std::vector<Tensor> out;
  out.reserve(config.dilations.size());
  for (Index i = 0; i < config.branches(); ++i) {
    out.push_back(dilated_attention_branch(narrow(q, 0, i * bc, bc), narrow(k, 0, i * bc, bc),
                                           narrow(v, 0, i * bc, bc), config.dilations[static_cast<std::size_t>(i)]));
  }
  return out;
}

std::vector<Tensor> MSDA::parameters() const {
  std::vector<Tensor> p;
  append(p, q_proj.parameters());
  append(p, k_proj.parameters());
  append(p, v_proj.parameters());
  return p;
}

}  // namespace mdsf
