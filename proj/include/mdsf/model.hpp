#pragma once

#include "mdsf/fusion.hpp"
#include "mdsf/layers.hpp"
#include "mdsf/losses.hpp"
#include "mdsf/pyramid.hpp"
#include "mdsf/pyramid_set.hpp"
#include "mdsf/ssm.hpp"

#include <array>
#include <vector>

namespace mdsf {

struct ToyConfig {
  Index channels = 12;
  Index state_size = 4;
  Index classes = 2;
  MSDAConfig msda{};
  // Ablation switches. A disabled component is held at its neutral value and
  // excluded from the trainable set.
  bool hybrid = true;  // false: hybrid residual weights fixed at 0
  bool fusion = true;  // false: every SCM alpha fixed at 0
};

/// Prediction cell: centre of grid cell (row, col) at a pyramid level.
struct Anchor {
  int level = 3;
  Index stride = 8;
  Index row = 0;
  Index col = 0;
  double cx = 0.0;  // normalized
  double cy = 0.0;
};

struct DetectionOutput {
  Tensor logits;  // [N, K]
  Tensor boxes;   // [N, 4] as (cx, cy, w, h), normalized
  PyramidSet encoded;
  std::vector<Anchor> anchors;
};

/// Single-channel detector: stride-8 stem, two Mamba stages (the second
/// followed by a hybrid block), E-FPN, DFMamba encoder and a shared per-cell
/// head over E3..E5. Cells are ordered level 3, 4, 5, each row-major.
///
/// Box decoding per cell: cx = (col + 0.5 + tanh(t_x)) s / W,
/// w = exp(t_w) s / W (same for y, h), s the level stride.
struct ToyMambaDSF {
  ToyConfig config;

  Pointwise stem_in;                   // 1 -> C
  std::array<DepthwiseConv, 3> stem_down;
  std::array<Pointwise, 3> stem_mix;
  MambaMixer stage1;                   // stride 8
  DepthwiseConv down1;
  Pointwise down1_mix;
  MambaMixer stage2;                   // stride 16
  HybridBlock hybrid;
  DepthwiseConv down2;
  Pointwise down2_mix;                 // stride 32
  EFPN efpn;
  DFMambaEncoder encoder;
  Pointwise head;                      // C -> K + 4

  static ToyMambaDSF init(const ToyConfig& config, Rng& rng);

  /// image: [1, H, W] with H, W multiples of 32; throws ConfigError otherwise.
  DetectionOutput operator()(const Tensor& image) const;

  /// All trainable tensors (ablated components excluded).
  std::vector<Tensor> parameters() const;
  Index parameter_count() const;
};

/// Cells for an H x W image in head order.
std::vector<Anchor> make_anchors(Index height, Index width);

/// Greedy one-to-one assignment: (ground truth, cell) pairs are taken in
/// increasing centre distance while both are free. Depends only on geometry.
MatchedTargets greedy_match(const std::vector<Anchor>& anchors, const std::vector<Box>& boxes,
                            const std::vector<Index>& classes);

/// Feature vector of the cell containing each box centre on E3, E4 and E5.
CenterEmbeddingTensors sample_center_embeddings(const PyramidSet& encoded, const std::vector<Box>& boxes);

}  // namespace mdsf
