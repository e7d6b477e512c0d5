#pragma once

#include "mdsf/layers.hpp"
#include "mdsf/tensor.hpp"

#include <string_view>
#include <vector>

namespace mdsf {

/// Input-independent parameters of a diagonal selective SSM.
struct SSMParams {
  Tensor A;  // [C, S], every entry < 0
  Tensor D;  // [C]

  /// A[c, s] = -(s + 1), D = 1.
  static SSMParams init(Index channels, Index state_size, bool requires_grad = true);

  Index channels() const { return A.shape()[0]; }
  Index state_size() const { return A.shape()[1]; }
  /// Throws DimensionError on inconsistent shapes, DomainError when some A >= 0.
  void validate() const;
};

/// Token-dependent SSM parameters. Rows are tokens in scan order.
struct SelectiveInputs {
  Tensor delta;  // [L, C], > 0
  Tensor B;      // [L, S]
  Tensor C;      // [L, S]

  Index length() const { return delta.shape()[0]; }
};

/// A_bar[t, c, s] = exp(delta[t, c] * A[c, s]). The matching B_bar = delta * B
/// is never materialized; the scan forms it on the fly.
Tensor discretize(const SSMParams& params, const Tensor& delta);

/// Sequential scan with h_0 = 0:
///   h_t = exp(delta_t A) h_{t-1} + delta_t B_t x_t
///   y_t = C_t . h_t + D x_t
/// x is [L, C]; the result is [L, C]. Cost is O(L C S) time and, when a graph
/// is recorded, O(L C S) memory for the saved states.
Tensor selective_scan(const Tensor& x, const SSMParams& params, const SelectiveInputs& inputs);

enum class ScanDirection { LeftRight, RightLeft, TopBottom, BottomTop };

inline constexpr ScanDirection kAllDirections[] = {ScanDirection::LeftRight, ScanDirection::RightLeft,
                                                   ScanDirection::TopBottom, ScanDirection::BottomTop};

std::string_view to_string(ScanDirection d);

/// order[k] is the row-major position visited at step k.
std::vector<Index> scan_order(Index h, Index w, ScanDirection direction);

/// Scans row-major tokens [H*W, C] in `direction`. `inputs` rows are indexed
/// by row-major position and get reordered together with the tokens; the
/// output is returned in row-major order.
Tensor directional_scan_tokens(const Tensor& tokens, Index h, Index w, const SSMParams& params,
                               const SelectiveInputs& inputs, ScanDirection direction);

/// Feature-map form of `directional_scan_tokens`: x is [C,H,W].
Tensor directional_scan_2d(const Tensor& x, const SSMParams& params, const SelectiveInputs& inputs,
                           ScanDirection direction);

/// Softplus plus the positivity floor used wherever step sizes are produced.
Tensor positive_step(const Tensor& raw);
inline constexpr double kDeltaFloor = 1e-4;

/// Simplified Mamba mixer over a feature map:
/// LN -> in-projection (x, z) -> per-token (delta, B, C) heads -> LR scan
/// -> gate by sigmoid(z) -> out-projection -> residual.
struct MambaMixer {
  ChannelNorm norm;
  Pointwise in_proj;     // C -> 2 * inner
  Pointwise delta_proj;  // inner -> inner
  Pointwise b_proj;      // inner -> S
  Pointwise c_proj;      // inner -> S
  Tensor a_log;          // [inner, S], A = -exp(a_log)
  Tensor d;              // [inner]
  Pointwise out_proj;    // inner -> C

  static MambaMixer init(Index channels, Index state_size, Rng& rng, bool zero_out_proj = false);

  Index channels() const { return out_proj.out_channels(); }
  Index inner() const { return d.numel(); }
  SSMParams ssm() const;

  Tensor operator()(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
};

}  // namespace mdsf
