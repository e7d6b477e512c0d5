#include "mdsf/train.hpp"

#include "mdsf/errors.hpp"

namespace mdsf {

void disable_component(SmokeConfig& cfg, const std::string& name) {
  if (name == "hybrid") cfg.model.hybrid = false;
  else if (name == "alpha") cfg.model.fusion = false;
  else if (name == "csc") cfg.loss.lambda_c = 0.0;
  else if (name == "omega") cfg.loss.omega_override = 0.0;
  else throw ConfigError("unknown component '" + name + "' (expected hybrid, alpha, csc or omega)");
}

std::vector<std::uint64_t> scene_seeds(std::uint64_t seed, int count) {
  // splitmix64 stream
  std::vector<std::uint64_t> out;
  std::uint64_t s = seed;
  for (int i = 0; i < count; ++i) {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    out.push_back(z ^ (z >> 31));
  }
  return out;
}

LossTerms scene_loss(const ToyMambaDSF& model, const SyntheticScene& scene, const LossConfig& cfg) {
  const DetectionOutput out = model(scene.image);
  const MatchedTargets targets = greedy_match(out.anchors, scene.boxes, scene.classes);
  const CenterEmbeddingTensors emb = sample_center_embeddings(out.encoded, scene.boxes);
  return total_loss(out.logits, out.boxes, targets, emb, cfg);
}

std::vector<LossReport> smoke_train(const SmokeConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("steps must be at least 1");
  if (cfg.scene_pool < 1) throw ConfigError("scene pool must hold at least one scene");
  if (!(cfg.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  cfg.loss.validate();

  SceneConfig sc = cfg.scene;
  sc.height = sc.width = cfg.image_size;
  sc.classes = cfg.model.classes;
  const std::vector<SyntheticScene> scenes = generate_scenes(sc, scene_seeds(cfg.seed, cfg.scene_pool));

  Rng rng(cfg.seed);
  const ToyMambaDSF model = ToyMambaDSF::init(cfg.model, rng);
  const std::vector<Tensor> params = model.parameters();

  std::vector<LossReport> curve;
  curve.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    const SyntheticScene& scene = scenes[static_cast<std::size_t>(step % cfg.scene_pool)];
    LossTerms terms;
    try {
      terms = scene_loss(model, scene, cfg.loss);
    } catch (const DomainError& e) {
      // Updated parameters can leave the valid domain (A underflowing to 0).
      if (step == 0) throw;
      throw NonFiniteError("non-finite forward pass at step " + std::to_string(step) + ": " + e.what());
    }
    const LossReport report = terms.report();
    if (!report.finite()) {
      throw NonFiniteError("non-finite " + report.first_non_finite() + " loss at step " + std::to_string(step));
    }
    curve.push_back(report);
    if (cfg.lr == 0.0) continue;

    for (Tensor p : params) p.zero_grad();
    terms.total.backward();
    for (Tensor p : params) {
      const Eigen::VectorXd g = p.grad();
      if (!g.allFinite()) throw NonFiniteError("non-finite gradient at step " + std::to_string(step));
      p.mutable_value() -= cfg.lr * g;
      if (!p.value().allFinite()) throw NonFiniteError("non-finite parameters after the update at step " + std::to_string(step));
    }
  }
  return curve;
}

double window_mean(const std::vector<LossReport>& curve, std::size_t first, std::size_t count, bool csc) {
  if (count == 0 || first + count > curve.size()) throw ConfigError("window outside the loss curve");
  double s = 0.0;
  for (std::size_t i = first; i < first + count; ++i) s += csc ? curve[i].csc : curve[i].total;
  return s / static_cast<double>(count);
}

}  // namespace mdsf
