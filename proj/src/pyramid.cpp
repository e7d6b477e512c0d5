#include "mdsf/pyramid.hpp"

#include "mdsf/errors.hpp"
#include "mdsf/ops.hpp"

#include <algorithm>

namespace mdsf {

HybridBlock HybridBlock::init(Index channels, Index state_size, Rng& rng) {
  return {DepthwiseConv::init(channels, 3, rng),
          DepthwiseConv::init(channels, 5, rng),
          Pointwise::init(channels, channels, rng),
          Pointwise::init(channels, channels, rng),
          MambaMixer::init(channels, state_size, rng),
          Tensor::full({1}, 0.5, true),
          Tensor::full({1}, 0.5, true)};
}

Tensor HybridBlock::local(const Tensor& x) const { return pw3(dw3(x)) + pw5(dw5(x)); }

Tensor HybridBlock::operator()(const Tensor& x) const {
  return x + w_local * local(x) + w_global * global(x);
}

std::vector<Tensor> HybridBlock::parameters() const {
  std::vector<Tensor> p;
  append(p, dw3.parameters());
  append(p, dw5.parameters());
  append(p, pw3.parameters());
  append(p, pw5.parameters());
  append(p, global.parameters());
  p.push_back(w_local);
  p.push_back(w_global);
  return p;
}

ContrastEnhancement ContrastEnhancement::init(Index channels, Rng& rng) {
  const Index hidden = std::max<Index>(1, channels / kReduction);
  return {Pointwise::init(channels, hidden, rng), Pointwise::init(hidden, channels, rng),
          DepthwiseConv::init(channels, 3, rng)};
}

Tensor ContrastEnhancement::channel_weights(const Tensor& x) const {
  if (x.rank() != 3) throw DimensionError("contrast enhancement expects [C,H,W], got " + to_string(x.shape()));
  const Index c = x.shape()[0];
  const Tensor pooled = reshape(mean(reshape(x, {c, x.shape()[1] * x.shape()[2]}), 1), {c, 1, 1});
  return sigmoid(excite(silu(squeeze(pooled))));
}

Tensor ContrastEnhancement::operator()(const Tensor& x) const { return refine(x * channel_weights(x)); }

std::vector<Tensor> ContrastEnhancement::parameters() const {
  std::vector<Tensor> p;
  append(p, squeeze.parameters());
  append(p, excite.parameters());
  append(p, refine.parameters());
  return p;
}

EdgeAttention EdgeAttention::init(Index channels, Rng& rng) {
  return {DepthwiseConv::init(channels, 3, rng), DepthwiseConv::init(channels, 3, rng), Pointwise::init(1, 1, rng)};
}

Tensor EdgeAttention::edge_map(const Tensor& x) const {
  const Tensor e = second(silu(first(x)));
  return sigmoid(score(sum(abs(e), 0, true)));
}

Tensor EdgeAttention::operator()(const Tensor& x) const { return x * edge_map(x); }

std::vector<Tensor> EdgeAttention::parameters() const {
  std::vector<Tensor> p;
  append(p, first.parameters());
  append(p, second.parameters());
  append(p, score.parameters());
  return p;
}

MultiScaleEnhancer MultiScaleEnhancer::init(Index channels, Rng& rng) {
  MultiScaleEnhancer m;
  for (Index i = 0; i < 3; ++i) m.dilated[static_cast<std::size_t>(i)] = DepthwiseConv::init(channels, 3, rng, i + 1);
  m.pointwise = Pointwise::init(channels, channels, rng);
  m.project = Pointwise::init(4 * channels, channels, rng);
  return m;
}

Tensor MultiScaleEnhancer::operator()(const Tensor& x) const {
  return project(concat({dilated[0](x), dilated[1](x), dilated[2](x), pointwise(x)}, 0));
}

std::vector<Tensor> MultiScaleEnhancer::parameters() const {
  std::vector<Tensor> p;
  for (const auto& d : dilated) append(p, d.parameters());
  append(p, pointwise.parameters());
  append(p, project.parameters());
  return p;
}

Tensor EFPNLevel::operator()(const Tensor& x) const { return enhancer(edge(contrast(lateral(x)))); }

std::vector<Tensor> EFPNLevel::parameters() const {
  std::vector<Tensor> p;
  append(p, lateral.parameters());
  append(p, contrast.parameters());
  append(p, edge.parameters());
  append(p, enhancer.parameters());
  return p;
}

EFPN EFPN::init(const std::array<Index, 3>& in_channels, Index channels, Rng& rng) {
  EFPN f;
  for (std::size_t i = 0; i < 3; ++i) {
    f.levels[i] = {Pointwise::init(in_channels[i], channels, rng), ContrastEnhancement::init(channels, rng),
                   EdgeAttention::init(channels, rng), MultiScaleEnhancer::init(channels, rng)};
  }
  for (auto& d : f.down) d = DepthwiseConv::init(channels, 3, rng, 1, 2);
  return f;
}

PyramidSet EFPN::operator()(const std::array<Tensor, 3>& backbone) const {
  for (std::size_t i = 0; i < 3; ++i) {
    if (backbone[i].rank() != 3) throw DimensionError("backbone maps must be [C,H,W]");
    if (i > 0) {
      const Shape& a = backbone[i - 1].shape();
      const Shape& b = backbone[i].shape();
      if (b[1] != (a[1] + 1) / 2 || b[2] != (a[2] + 1) / 2) {
        throw ConfigError("backbone spatial sizes must halve level to level: " + to_string(a) + " -> " +
                          to_string(b));
      }
    }
  }
  std::array<Tensor, 3> lat;
  for (std::size_t i = 0; i < 3; ++i) lat[i] = levels[i](backbone[i]);

  std::array<Tensor, 3> top;
  top[2] = lat[2];
  for (std::size_t i = 2; i-- > 0;) {
    top[i] = lat[i] + resize_bilinear(top[i + 1], lat[i].shape()[1], lat[i].shape()[2]);
  }

  PyramidSet out;
  out.maps[0] = top[0];
  out.maps[1] = top[1] + down[0](out.maps[0]);
  out.maps[2] = top[2] + down[1](out.maps[1]);
  return out;
}

std::vector<Tensor> EFPN::parameters() const {
  std::vector<Tensor> p;
  for (const auto& l : levels) append(p, l.parameters());
  for (const auto& d : down) append(p, d.parameters());
  return p;
}

}  // namespace mdsf
