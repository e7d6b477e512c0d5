#include "mdsf/model.hpp"

#include "mdsf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <unordered_set>

namespace mdsf {

namespace {

constexpr std::array<Index, 3> kStrides{8, 16, 32};

Index cells(Index size, Index stride) { return size / stride; }

}  // namespace

ToyMambaDSF ToyMambaDSF::init(const ToyConfig& config, Rng& rng) {
  const Index c = config.channels;
  if (config.classes < 1) throw ConfigError("at least one class is required");
  config.msda.validate(c);

  ToyMambaDSF m;
  m.config = config;
  m.stem_in = Pointwise::init(1, c, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    m.stem_down[i] = DepthwiseConv::init(c, 3, rng, 1, 2);
    m.stem_mix[i] = Pointwise::init(c, c, rng);
  }
  m.stage1 = MambaMixer::init(c, config.state_size, rng);
  m.down1 = DepthwiseConv::init(c, 3, rng, 1, 2);
  m.down1_mix = Pointwise::init(c, c, rng);
  m.stage2 = MambaMixer::init(c, config.state_size, rng);
  m.hybrid = HybridBlock::init(c, config.state_size, rng);
  if (!config.hybrid) {
    m.hybrid.w_local.mutable_value().setZero();
    m.hybrid.w_global.mutable_value().setZero();
  }
  m.down2 = DepthwiseConv::init(c, 3, rng, 1, 2);
  m.down2_mix = Pointwise::init(c, c, rng);
  m.efpn = EFPN::init({c, c, c}, c, rng);
  m.encoder = DFMambaEncoder::init({c, config.msda, config.state_size}, rng);
  if (!config.fusion) m.encoder.set_alpha(0.0);
  m.head = Pointwise::init(c, config.classes + 4, rng, 0.5);
  return m;
}

DetectionOutput ToyMambaDSF::operator()(const Tensor& image) const {
  if (image.rank() != 3 || image.shape()[0] != 1) {
    throw DimensionError("image must be [1,H,W], got " + to_string(image.shape()));
  }
  const Index h = image.shape()[1], w = image.shape()[2];
  if (h < 32 || w < 32 || h % 32 != 0 || w % 32 != 0) {
    throw ConfigError("image size " + std::to_string(h) + "x" + std::to_string(w) + " is not a multiple of 32");
  }

  Tensor x = silu(stem_in(image));
  for (std::size_t i = 0; i < 3; ++i) x = silu(stem_mix[i](stem_down[i](x)));
  const Tensor f3 = stage1(x);
  const Tensor f4 = hybrid(stage2(silu(down1_mix(down1(f3)))));
  const Tensor f5 = silu(down2_mix(down2(f4)));

  DetectionOutput out;
  out.encoded = encoder(efpn({f3, f4, f5}));
  out.anchors = make_anchors(h, w);

  const Index k = config.classes;
  std::vector<Tensor> rows;
  for (int level = 3; level <= 5; ++level) rows.push_back(head.apply_tokens(to_tokens(out.encoded.level(level))));
  const Tensor raw = concat(rows, 0);
  const Index n = raw.shape()[0];

  Eigen::VectorXd ax(n), ay(n), sx(n), sy(n);
  for (Index i = 0; i < n; ++i) {
    const Anchor& a = out.anchors[static_cast<std::size_t>(i)];
    ax[i] = a.cx;
    ay[i] = a.cy;
    sx[i] = static_cast<double>(a.stride) / static_cast<double>(w);
    sy[i] = static_cast<double>(a.stride) / static_cast<double>(h);
  }
  const Tensor anchor_x({n, 1}, ax), anchor_y({n, 1}, ay), scale_x({n, 1}, sx), scale_y({n, 1}, sy);

  out.logits = narrow(raw, 1, 0, k);
  const Tensor cx = anchor_x + tanh(narrow(raw, 1, k, 1)) * scale_x;
  const Tensor cy = anchor_y + tanh(narrow(raw, 1, k + 1, 1)) * scale_y;
  const Tensor bw = exp(narrow(raw, 1, k + 2, 1)) * scale_x;
  const Tensor bh = exp(narrow(raw, 1, k + 3, 1)) * scale_y;
  out.boxes = concat({cx, cy, bw, bh}, 1);
  return out;
}

std::vector<Tensor> ToyMambaDSF::parameters() const {
  std::vector<Tensor> all = stem_in.parameters();
  for (std::size_t i = 0; i < 3; ++i) {
    append(all, stem_down[i].parameters());
    append(all, stem_mix[i].parameters());
  }
  append(all, stage1.parameters());
  append(all, down1.parameters());
  append(all, down1_mix.parameters());
  append(all, stage2.parameters());
  append(all, hybrid.parameters());
  append(all, down2.parameters());
  append(all, down2_mix.parameters());
  append(all, efpn.parameters());
  append(all, encoder.parameters());
  append(all, head.parameters());

  std::unordered_set<const void*> frozen;
  if (!config.hybrid) {
    frozen.insert(hybrid.w_local.node().get());
    frozen.insert(hybrid.w_global.node().get());
  }
  if (!config.fusion) {
    for (const auto& blocks : encoder.scm)
      for (const auto& b : blocks) frozen.insert(b.alpha.node().get());
  }
  std::vector<Tensor> p;
  for (const Tensor& t : all)
    if (!frozen.contains(t.node().get())) p.push_back(t);
  return p;
}

Index ToyMambaDSF::parameter_count() const {
  Index n = 0;
  for (const Tensor& t : parameters()) n += t.numel();
  return n;
}

std::vector<Anchor> make_anchors(Index height, Index width) {
  std::vector<Anchor> anchors;
  for (std::size_t l = 0; l < 3; ++l) {
    const Index s = kStrides[l];
    const Index gh = cells(height, s), gw = cells(width, s);
    for (Index r = 0; r < gh; ++r) {
      for (Index c = 0; c < gw; ++c) {
        anchors.push_back({static_cast<int>(l) + 3, s, r, c, (static_cast<double>(c) + 0.5) / static_cast<double>(gw),
                           (static_cast<double>(r) + 0.5) / static_cast<double>(gh)});
      }
    }
  }
  return anchors;
}

MatchedTargets greedy_match(const std::vector<Anchor>& anchors, const std::vector<Box>& boxes,
                            const std::vector<Index>& classes) {
  if (boxes.size() != classes.size()) throw DimensionError("boxes and classes differ in length");
  if (boxes.size() > anchors.size()) throw ConfigError("more ground truths than prediction cells");
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  pairs.reserve(boxes.size() * anchors.size());
  for (std::size_t g = 0; g < boxes.size(); ++g) {
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const double dx = anchors[a].cx - boxes[g].cx, dy = anchors[a].cy - boxes[g].cy;
      pairs.emplace_back(dx * dx + dy * dy, g, a);
    }
  }
  std::sort(pairs.begin(), pairs.end());

  std::vector<Index> assigned(boxes.size(), -1);
  std::vector<bool> taken(anchors.size(), false);
  std::size_t left = boxes.size();
  for (const auto& [d, g, a] : pairs) {
    if (left == 0) break;
    if (assigned[g] >= 0 || taken[a]) continue;
    assigned[g] = static_cast<Index>(a);
    taken[a] = true;
    --left;
  }
  return {assigned, boxes, classes};
}

CenterEmbeddingTensors sample_center_embeddings(const PyramidSet& encoded, const std::vector<Box>& boxes) {
  if (boxes.empty()) return {};
  CenterEmbeddingTensors out;
  std::array<Tensor*, 3> dst{&out.e3, &out.e4, &out.e5};
  for (int level = 3; level <= 5; ++level) {
    const Tensor& map = encoded.level(level);
    const Index h = map.shape()[1], w = map.shape()[2];
    std::vector<Index> idx;
    for (const Box& b : boxes) {
      const Index r = std::clamp<Index>(static_cast<Index>(std::floor(b.cy * static_cast<double>(h))), 0, h - 1);
      const Index c = std::clamp<Index>(static_cast<Index>(std::floor(b.cx * static_cast<double>(w))), 0, w - 1);
      idx.push_back(r * w + c);
    }
    *dst[static_cast<std::size_t>(level - 3)] = index_select(to_tokens(map), 0, idx);
  }
  return out;
}

}  // namespace mdsf
