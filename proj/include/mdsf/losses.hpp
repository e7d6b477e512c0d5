#pragma once

#include "mdsf/ops.hpp"
#include "mdsf/tensor.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mdsf {

/// Axis-aligned box (centre, width, height) in normalized image coordinates.
/// Read as a 2-D Gaussian with mean (cx, cy) and covariance diag(w^2/4, h^2/4).
///
/// `Scalar` is `double` for closed-form evaluation or `Tensor` (elementwise,
/// any common shape) when the loss has to be differentiated.
template <class Scalar>
struct BBox {
  Scalar cx;
  Scalar cy;
  Scalar w;
  Scalar h;
};

using Box = BBox<double>;

/// Throws DomainError unless w > 0 and h > 0.
void validate_box(const Box& b);

struct LossConfig {
  double tau_w = 1.0;    // NWD temperature
  double tau_s = 0.01;   // area temperature of the scale-adaptive weight
  double lambda_c = 1.0; // cross-scale coherence weight
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  /// Replaces the area-adaptive weight when set (ablation hook).
  std::optional<double> omega_override;
  /// Differentiate through the CIoU alpha (exact gradient of the loss value).
  bool ciou_alpha_gradient = false;

  void validate() const;
};

/// Squared 2-Wasserstein distance between the Gaussian readings of two boxes:
/// |mu_p - mu_g|^2 + ((w_p - w_g)^2 + (h_p - h_g)^2) / 4.
template <class Scalar>
Scalar wasserstein_sq(const BBox<Scalar>& p, const BBox<Scalar>& g) {
  const Scalar dx = p.cx - g.cx;
  const Scalar dy = p.cy - g.cy;
  const Scalar dw = p.w - g.w;
  const Scalar dh = p.h - g.h;
  return dx * dx + dy * dy + 0.25 * (dw * dw + dh * dh);
}

/// 1 - exp(-W2 / tau_w), W2 the (unsquared) Wasserstein distance.
template <class Scalar>
Scalar nwd_loss(const BBox<Scalar>& p, const BBox<Scalar>& g, double tau_w) {
  using std::exp;
  using std::sqrt;
  return 1.0 - exp(-sqrt(wasserstein_sq(p, g)) / tau_w);
}

template <class Scalar>
Scalar iou(const BBox<Scalar>& p, const BBox<Scalar>& g) {
  const Scalar ix = maximum(minimum(p.cx + 0.5 * p.w, g.cx + 0.5 * g.w) - maximum(p.cx - 0.5 * p.w, g.cx - 0.5 * g.w), 0.0);
  const Scalar iy = maximum(minimum(p.cy + 0.5 * p.h, g.cy + 0.5 * g.h) - maximum(p.cy - 0.5 * p.h, g.cy - 0.5 * g.h), 0.0);
  const Scalar inter = ix * iy;
  return inter / (p.w * p.h + g.w * g.h - inter);
}

/// CIoU aspect term v = 4/pi^2 (atan(w_g/h_g) - atan(w_p/h_p))^2.
template <class Scalar>
Scalar ciou_aspect(const BBox<Scalar>& p, const BBox<Scalar>& g) {
  using std::atan;
  const Scalar da = atan(g.w / g.h) - atan(p.w / p.h);
  return (4.0 / (std::numbers::pi * std::numbers::pi)) * (da * da);
}

/// Trade-off weight alpha = v / ((1 - IoU) + v). The 1e-12 keeps it finite for
/// identical boxes, where both v and 1 - IoU vanish.
template <class Scalar>
Scalar ciou_trade_off(const BBox<Scalar>& p, const BBox<Scalar>& g) {
  const Scalar v = ciou_aspect(p, g);
  return v / ((1.0 - iou(p, g)) + v + 1e-12);
}

/// 1 - IoU + rho^2 / c^2 + alpha v with a caller-supplied alpha.
template <class Scalar>
Scalar ciou_loss_with(const BBox<Scalar>& p, const BBox<Scalar>& g, const Scalar& alpha) {
  const Scalar dx = p.cx - g.cx;
  const Scalar dy = p.cy - g.cy;
  const Scalar ex = maximum(p.cx + 0.5 * p.w, g.cx + 0.5 * g.w) - minimum(p.cx - 0.5 * p.w, g.cx - 0.5 * g.w);
  const Scalar ey = maximum(p.cy + 0.5 * p.h, g.cy + 0.5 * g.h) - minimum(p.cy - 0.5 * p.h, g.cy - 0.5 * g.h);
  return 1.0 - iou(p, g) + (dx * dx + dy * dy) / (ex * ex + ey * ey) + alpha * ciou_aspect(p, g);
}

/// Complete-IoU loss. By convention alpha is held constant under
/// differentiation; `differentiate_alpha` lets gradients flow through it.
template <class Scalar>
Scalar ciou_loss(const BBox<Scalar>& p, const BBox<Scalar>& g, bool differentiate_alpha = false) {
  const Scalar alpha = ciou_trade_off(p, g);
  return ciou_loss_with(p, g, differentiate_alpha ? alpha : detach(alpha));
}

/// omega = exp(-a_g / tau_s), a_g = w_g h_g.
template <class Scalar>
Scalar area_weight(const BBox<Scalar>& g, double tau_s) {
  using std::exp;
  return exp(-(g.w * g.h) / tau_s);
}

/// omega * NWD + (1 - omega) * CIoU.
template <class Scalar>
Scalar sa_wiou(const BBox<Scalar>& p, const BBox<Scalar>& g, const LossConfig& cfg) {
  const Scalar omega = cfg.omega_override ? constant_like(*cfg.omega_override, g.w) : area_weight(g, cfg.tau_s);
  return omega * nwd_loss(p, g, cfg.tau_w) + (1.0 - omega) * ciou_loss(p, g, cfg.ciou_alpha_gradient);
}

/// Centre-sampled features of one ground-truth box on E3, E4, E5.
struct CenterEmbedding {
  Eigen::VectorXd e3;
  Eigen::VectorXd e4;
  Eigen::VectorXd e5;
};

inline constexpr double kCosineEps = 1e-8;

/// 1 - mean over boxes and level pairs {(3,4),(4,5),(3,5)} of the cosine
/// similarity; 0 for an empty set.
double csc_loss(std::span<const CenterEmbedding> embeddings);

/// Differentiable form over [G, C] embedding matrices, one row per box.
Tensor csc_loss(const Tensor& e3, const Tensor& e4, const Tensor& e5);

/// Sigmoid focal loss summed over all logits and divided by `normalizer`.
/// `targets` holds 0/1 labels with the shape of `logits`.
Tensor focal_loss(const Tensor& logits, const Tensor& targets, double gamma, double alpha, double normalizer);

/// Sum of absolute coordinate errors divided by the number of rows.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

struct LossReport {
  double focal = 0.0;
  double sa_wiou = 0.0;
  double l1 = 0.0;
  double csc = 0.0;
  double total = 0.0;

  /// Flat "name=value" lines in the order focal, sa_wiou, l1, csc, total.
  std::string to_text() const;
  static LossReport parse(const std::string& text);
  bool finite() const;
  /// Name of the first non-finite term, empty when all are finite.
  std::string first_non_finite() const;
};

/// Ground truths with their pre-matched prediction rows.
struct MatchedTargets {
  std::vector<Index> prediction;
  std::vector<Box> boxes;
  std::vector<Index> classes;

  std::size_t size() const { return boxes.size(); }
};

/// Centre embeddings for every ground truth, each [G, C]; unset when G = 0.
struct CenterEmbeddingTensors {
  Tensor e3;
  Tensor e4;
  Tensor e5;
};

struct LossTerms {
  Tensor focal;
  Tensor sa_wiou;
  Tensor l1;
  Tensor csc;
  Tensor total;

  LossReport report() const;
};

/// focal + SA-WIoU + l1 + lambda_c * CSC over pre-matched pairs.
/// logits: [N, K]; boxes: [N, 4] as (cx, cy, w, h).
LossTerms total_loss(const Tensor& logits, const Tensor& boxes, const MatchedTargets& targets,
                     const CenterEmbeddingTensors& embeddings, const LossConfig& cfg);

/// Splits an [M, 4] box tensor into four [M] coordinate tensors.
BBox<Tensor> unpack_boxes(const Tensor& boxes);
BBox<Tensor> pack_constant_boxes(std::span<const Box> boxes);

}  // namespace mdsf
