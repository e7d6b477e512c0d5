#include "mdsf/losses.hpp"

#include "mdsf/errors.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace mdsf {

void validate_box(const Box& b) {
  if (!(b.w > 0.0) || !(b.h > 0.0)) throw DomainError("box width and height must be positive");
}

void LossConfig::validate() const {
  if (!(tau_w > 0.0) || !(tau_s > 0.0)) throw ConfigError("tau_w and tau_s must be positive");
  if (!(lambda_c >= 0.0)) throw ConfigError("lambda_c must be non-negative");
  if (omega_override && (*omega_override < 0.0 || *omega_override > 1.0)) {
    throw ConfigError("omega override must lie in [0, 1]");
  }
}

namespace {

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionError("embedding sizes differ");
  return a.dot(b) / std::max(a.norm() * b.norm(), kCosineEps);
}

Tensor row_norm(const Tensor& e) { return sqrt(sum(e * e, 1)); }

Tensor row_cosine(const Tensor& a, const Tensor& b) {
  return sum(a * b, 1) / maximum(row_norm(a) * row_norm(b), kCosineEps);
}

}  // namespace

double csc_loss(std::span<const CenterEmbedding> embeddings) {
  if (embeddings.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : embeddings) total += cosine(e.e3, e.e4) + cosine(e.e4, e.e5) + cosine(e.e3, e.e5);
  return 1.0 - total / (3.0 * static_cast<double>(embeddings.size()));
}

Tensor csc_loss(const Tensor& e3, const Tensor& e4, const Tensor& e5) {
  if (e3.rank() != 2 || e3.shape() != e4.shape() || e3.shape() != e5.shape()) {
    throw DimensionError("csc embeddings must share one [G,C] shape");
  }
  const Tensor cos = concat({row_cosine(e3, e4), row_cosine(e4, e5), row_cosine(e3, e5)}, 0);
  return 1.0 - mean(cos);
}

Tensor focal_loss(const Tensor& logits, const Tensor& targets, double gamma, double alpha, double normalizer) {
  if (logits.shape() != targets.shape()) {
    throw DimensionError("focal targets " + to_string(targets.shape()) + " != logits " + to_string(logits.shape()));
  }
  // With z = (1 - 2t) x: 1 - p_t = sigmoid(z) and -log p_t = softplus(z).
  const Tensor sign = 1.0 - 2.0 * targets;
  const Tensor z = sign * logits;
  const Tensor alpha_t = alpha * targets + (1.0 - alpha) * (1.0 - targets);
  const Tensor per = alpha_t * pow(sigmoid(z), gamma) * softplus(z);
  return sum(per) / normalizer;
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape() || pred.rank() != 2) {
    throw DimensionError("l1 shapes " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  return sum(abs(pred - target)) / static_cast<double>(pred.shape()[0]);
}

std::string LossReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "focal=" << focal << '\n'
     << "sa_wiou=" << sa_wiou << '\n'
     << "l1=" << l1 << '\n'
     << "csc=" << csc << '\n'
     << "total=" << total << '\n';
  return os.str();
}

LossReport LossReport::parse(const std::string& text) {
  LossReport r;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("loss report line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string field = line.substr(eq + 1);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || end != field.data() + field.size()) throw FormatError("bad loss report value: " + line);
    if (key == "focal") r.focal = v;
    else if (key == "sa_wiou") r.sa_wiou = v;
    else if (key == "l1") r.l1 = v;
    else if (key == "csc") r.csc = v;
    else if (key == "total") r.total = v;
    else throw FormatError("unknown loss report key: " + key);
  }
  return r;
}

bool LossReport::finite() const { return first_non_finite().empty(); }

std::string LossReport::first_non_finite() const {
  if (!std::isfinite(focal)) return "focal";
  if (!std::isfinite(sa_wiou)) return "sa_wiou";
  if (!std::isfinite(l1)) return "l1";
  if (!std::isfinite(csc)) return "csc";
  if (!std::isfinite(total)) return "total";
  return {};
}

LossReport LossTerms::report() const {
  return {focal.item(), sa_wiou.item(), l1.item(), csc.item(), total.item()};
}

BBox<Tensor> unpack_boxes(const Tensor& boxes) {
  if (boxes.rank() != 2 || boxes.shape()[1] != 4) throw DimensionError("boxes must be [M,4], got " + to_string(boxes.shape()));
  const Index m = boxes.shape()[0];
  auto col = [&](Index j) { return reshape(narrow(boxes, 1, j, 1), {m}); };
  return {col(0), col(1), col(2), col(3)};
}

BBox<Tensor> pack_constant_boxes(std::span<const Box> boxes) {
  const auto m = static_cast<Index>(boxes.size());
  Eigen::VectorXd cx(m), cy(m), w(m), h(m);
  for (Index i = 0; i < m; ++i) {
    const Box& b = boxes[static_cast<std::size_t>(i)];
    cx[i] = b.cx;
    cy[i] = b.cy;
    w[i] = b.w;
    h[i] = b.h;
  }
  return {Tensor({m}, cx), Tensor({m}, cy), Tensor({m}, w), Tensor({m}, h)};
}

LossTerms total_loss(const Tensor& logits, const Tensor& boxes, const MatchedTargets& targets,
                     const CenterEmbeddingTensors& embeddings, const LossConfig& cfg) {
  cfg.validate();
  if (logits.rank() != 2 || boxes.rank() != 2 || boxes.shape()[1] != 4 || boxes.shape()[0] != logits.shape()[0]) {
    throw DimensionError("predictions must be logits [N,K] and boxes [N,4], got " + to_string(logits.shape()) +
                         " and " + to_string(boxes.shape()));
  }
  const Index n = logits.shape()[0], k = logits.shape()[1];
  const std::size_t g = targets.size();
  if (targets.prediction.size() != g || targets.classes.size() != g) {
    throw DimensionError("matched targets have inconsistent lengths");
  }

  Tensor onehot({n, k});
  for (std::size_t i = 0; i < g; ++i) {
    const Index row = targets.prediction[i];
    const Index cls = targets.classes[i];
    if (row < 0 || row >= n || cls < 0 || cls >= k) throw DimensionError("matched target index out of range");
    onehot.mutable_value()[row * k + cls] = 1.0;
  }

  LossTerms t;
  t.focal = focal_loss(logits, onehot, cfg.focal_gamma, cfg.focal_alpha, std::max<double>(1.0, static_cast<double>(g)));
  if (g == 0) {
    t.sa_wiou = Tensor::scalar(0.0);
    t.l1 = Tensor::scalar(0.0);
    t.csc = Tensor::scalar(0.0);
    t.total = t.focal;
    return t;
  }

  for (const Box& b : targets.boxes) validate_box(b);
  const Tensor matched = index_select(boxes, 0, targets.prediction);
  const BBox<Tensor> pred = unpack_boxes(matched);
  const BBox<Tensor> gt = pack_constant_boxes(targets.boxes);
  t.sa_wiou = mean(sa_wiou(pred, gt, cfg));

  Eigen::VectorXd gt_flat(static_cast<Index>(g) * 4);
  for (std::size_t i = 0; i < g; ++i) {
    const Box& b = targets.boxes[i];
    gt_flat.segment(static_cast<Index>(i) * 4, 4) << b.cx, b.cy, b.w, b.h;
  }
  t.l1 = l1_loss(matched, Tensor({static_cast<Index>(g), 4}, std::move(gt_flat)));

  if (!embeddings.e3.defined()) throw DimensionError("centre embeddings missing for non-empty ground truth");
  t.csc = csc_loss(embeddings.e3, embeddings.e4, embeddings.e5);

  t.total = t.focal + t.sa_wiou + t.l1;
  if (cfg.lambda_c > 0.0) t.total = t.total + cfg.lambda_c * t.csc;
  return t;
}

}  // namespace mdsf
