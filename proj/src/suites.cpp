#include "mdsf/suites.hpp"

#include "mdsf/attention.hpp"
#include "mdsf/errors.hpp"
#include "mdsf/fusion.hpp"
#include "mdsf/layers.hpp"
#include "mdsf/losses.hpp"
#include "mdsf/model.hpp"
#include "mdsf/pyramid.hpp"
#include "mdsf/ssm.hpp"
#include "mdsf/synthetic.hpp"
#include "mdsf/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

namespace mdsf {

namespace {

struct Case {
  std::string module;
  std::string name;
  double tolerance;
  std::function<GradcheckReport()> run;
};

// Contracts an output with a fixed random tensor so every element feeds the scalar.
Tensor probe(const Tensor& y, Rng& rng) { return sum(y * randn(y.shape(), 1.0, rng, false)); }

std::vector<Tensor> with(std::vector<Tensor> a, const std::vector<Tensor>& b) {
  append(a, b);
  return a;
}

Tensor positive(Shape shape, double lo, double hi, Rng& rng) { return uniform(std::move(shape), lo, hi, rng); }

BBox<Tensor> random_boxes(Index m, Rng& rng) {
  return {uniform({m}, 0.3, 0.7, rng), uniform({m}, 0.3, 0.7, rng), uniform({m}, 0.05, 0.3, rng),
          uniform({m}, 0.05, 0.3, rng)};
}

std::vector<Tensor> leaves(const BBox<Tensor>& b) { return {b.cx, b.cy, b.w, b.h}; }

void add_ssm(std::vector<Case>& cases, std::uint64_t seed) {
  cases.push_back({"ssm", "selective_scan", kModuleTolerance, [seed] {
                     Rng rng(seed);
                     const Index L = 12, C = 3, S = 4;
                     SSMParams p{uniform({C, S}, -2.0, -0.2, rng), randn({C}, 1.0, rng)};
                     SelectiveInputs in{positive({L, C}, 0.05, 0.6, rng), randn({L, S}, 1.0, rng), randn({L, S}, 1.0, rng)};
                     const Tensor x = randn({L, C}, 1.0, rng);
                     Rng prng(seed + 1);
                     const Tensor r = randn({L, C}, 1.0, prng, false);
                     return gradcheck([&] { return sum(selective_scan(x, p, in) * r); }, {x, p.A, p.D, in.delta, in.B, in.C});
                   }});
  cases.push_back({"ssm", "directional_scans", kModuleTolerance, [seed] {
                     Rng rng(seed + 2);
                     const Index C = 2, S = 3, H = 3, W = 4;
                     SSMParams p{uniform({C, S}, -2.0, -0.2, rng), randn({C}, 1.0, rng)};
                     SelectiveInputs in{positive({H * W, C}, 0.05, 0.6, rng), randn({H * W, S}, 1.0, rng),
                                        randn({H * W, S}, 1.0, rng)};
                     const Tensor x = randn({C, H, W}, 1.0, rng);
                     std::vector<Tensor> r;
                     for (int i = 0; i < 4; ++i) r.push_back(randn({C, H, W}, 1.0, rng, false));
                     return gradcheck(
                         [&] {
                           Tensor acc = Tensor::scalar(0.0);
                           for (int i = 0; i < 4; ++i) acc = acc + sum(directional_scan_2d(x, p, in, kAllDirections[i]) * r[static_cast<std::size_t>(i)]);
                           return acc;
                         },
                         {x, p.A, p.D, in.delta, in.B, in.C});
                   }});
  cases.push_back({"ssm", "mamba_mixer", kModuleTolerance, [seed] {
                     Rng rng(seed + 3);
                     const MambaMixer m = MambaMixer::init(4, 3, rng);
                     const Tensor x = randn({4, 3, 3}, 1.0, rng);
                     Rng prng(seed + 4);
                     const Tensor r = randn({4, 3, 3}, 1.0, prng, false);
                     return gradcheck([&] { return sum(m(x) * r); }, with({x}, m.parameters()));
                   }});
}

void add_msda(std::vector<Case>& cases, std::uint64_t seed) {
  for (Index d = 1; d <= 3; ++d) {
    cases.push_back({"msda", "dilated_branch_d" + std::to_string(d), kModuleTolerance, [seed, d] {
                       Rng rng(seed + 10 + static_cast<std::uint64_t>(d));
                       const Tensor q = randn({2, 6, 6}, 1.0, rng), k = randn({2, 6, 6}, 1.0, rng),
                                    v = randn({2, 6, 6}, 1.0, rng);
                       const Tensor r = randn({2, 6, 6}, 1.0, rng, false);
                       return gradcheck([&] { return sum(dilated_attention_branch(q, k, v, d) * r); }, {q, k, v});
                     }});
  }
  cases.push_back({"msda", "msda_module", kModuleTolerance, [seed] {
                     Rng rng(seed + 14);
                     const MSDA m = MSDA::init(6, {}, rng);
                     const Tensor x = randn({6, 5, 5}, 1.0, rng);
                     Rng prng(seed + 15);
                     return gradcheck(
                         [&] {
                           Rng local = prng;
                           Tensor acc = Tensor::scalar(0.0);
                           for (const Tensor& b : m(x)) acc = acc + probe(b, local);
                           return acc;
                         },
                         with({x}, m.parameters()));
                   }});
}

PyramidSet random_pyramid(Index c, Index h, Rng& rng) {
  return {{randn({c, h, h}, 1.0, rng), randn({c, (h + 1) / 2, (h + 1) / 2}, 1.0, rng),
           randn({c, (h + 3) / 4, (h + 3) / 4}, 1.0, rng)}};
}

void add_fusion(std::vector<Case>& cases, std::uint64_t seed) {
  cases.push_back({"fusion", "fus_gate", kModuleTolerance, [seed] {
                     Rng rng(seed + 20);
                     const Index C = 2, S = 3, H = 3, W = 3;
                     SSMParams p{uniform({C, S}, -2.0, -0.2, rng), randn({C}, 1.0, rng)};
                     SelectiveInputs in{positive({H * W, C}, 0.05, 0.6, rng), randn({H * W, S}, 1.0, rng),
                                        randn({H * W, S}, 1.0, rng)};
                     const Tensor x = randn({C, H, W}, 1.0, rng);
                     const Tensor r = randn({C, H, W}, 1.0, rng, false);
                     return gradcheck([&] { return sum(fus_gate(x, in, p) * r); }, {x, p.A, p.D, in.delta, in.B, in.C});
                   }});
  cases.push_back({"fusion", "scm_block", kModuleTolerance, [seed] {
                     Rng rng(seed + 21);
                     const PyramidSet levels = random_pyramid(4, 6, rng);
                     const SCMBlock b = SCMBlock::init(4, 2, 4, 3, rng);
                     const Tensor branch = randn({2, 3, 3}, 1.0, rng);
                     const Tensor r = randn({2, 3, 3}, 1.0, rng, false);
                     return gradcheck([&] { return sum(b(branch, levels, 4) * r); },
                                      with({branch, levels.maps[0], levels.maps[1], levels.maps[2]}, b.parameters()));
                   }});
  cases.push_back({"fusion", "afr", kModuleTolerance, [seed] {
                     Rng rng(seed + 22);
                     const std::vector<Tensor> br{randn({2, 3, 3}, 1.0, rng), randn({2, 3, 3}, 1.0, rng)};
                     const Tensor skip = randn({4, 3, 3}, 1.0, rng);
                     const Tensor r = randn({4, 3, 3}, 1.0, rng, false);
                     return gradcheck([&] { return sum(afr(br, skip) * r); }, {br[0], br[1], skip});
                   }});
  cases.push_back({"fusion", "dfmamba_encoder", kModuleTolerance, [seed] {
                     // C = 8 with two dilation branches so channels split evenly.
                     Rng rng(seed + 23);
                     EncoderConfig cfg{8, MSDAConfig{{1, 2}}, 3};
                     const DFMambaEncoder enc = DFMambaEncoder::init(cfg, rng);
                     const PyramidSet levels = random_pyramid(8, 8, rng);
                     Rng prng(seed + 24);
                     return gradcheck(
                         [&] {
                           Rng local = prng;
                           const PyramidSet e = enc(levels);
                           return probe(e.maps[0], local) + probe(e.maps[1], local) + probe(e.maps[2], local);
                         },
                         with({levels.maps[0], levels.maps[1], levels.maps[2]}, enc.parameters()));
                   }});
}

template <class Module>
Case map_case(const std::string& name, std::uint64_t seed, std::function<Module(Rng&)> make) {
  return {"pyramid", name, kModuleTolerance, [seed, make] {
            Rng rng(seed);
            const Module m = make(rng);
            const Tensor x = randn({4, 5, 5}, 1.0, rng);
            Rng prng(seed + 100);
            return gradcheck(
                [&] {
                  Rng local = prng;
                  return probe(m(x), local);
                },
                with({x}, m.parameters()));
          }};
}

void add_pyramid(std::vector<Case>& cases, std::uint64_t seed) {
  cases.push_back(map_case<HybridBlock>("hybrid_block", seed + 30, [](Rng& r) { return HybridBlock::init(4, 3, r); }));
  cases.push_back(map_case<ContrastEnhancement>("contrast_enhancement", seed + 31,
                                                [](Rng& r) { return ContrastEnhancement::init(4, r); }));
  cases.push_back(map_case<EdgeAttention>("edge_attention", seed + 32, [](Rng& r) { return EdgeAttention::init(4, r); }));
  cases.push_back(map_case<MultiScaleEnhancer>("multi_scale_enhancer", seed + 33,
                                               [](Rng& r) { return MultiScaleEnhancer::init(4, r); }));
  cases.push_back({"pyramid", "efpn", kModuleTolerance, [seed] {
                     Rng rng(seed + 34);
                     const EFPN f = EFPN::init({3, 4, 5}, 4, rng);
                     const std::array<Tensor, 3> in{randn({3, 8, 8}, 1.0, rng), randn({4, 4, 4}, 1.0, rng),
                                                    randn({5, 2, 2}, 1.0, rng)};
                     Rng prng(seed + 35);
                     return gradcheck(
                         [&] {
                           Rng local = prng;
                           const PyramidSet p = f(in);
                           return probe(p.maps[0], local) + probe(p.maps[1], local) + probe(p.maps[2], local);
                         },
                         with({in[0], in[1], in[2]}, f.parameters()));
                   }});
}

void add_losses(std::vector<Case>& cases, std::uint64_t seed) {
  cases.push_back({"losses", "nwd", kLossTolerance, [seed] {
                     Rng rng(seed + 40);
                     const BBox<Tensor> p = random_boxes(6, rng), g = random_boxes(6, rng);
                     return gradcheck([&] { return sum(nwd_loss(p, g, 1.0)); }, with(leaves(p), leaves(g)));
                   }});
  cases.push_back({"losses", "ciou_alpha_held", kLossTolerance, [seed] {
                     // Reference: the loss with alpha frozen at its base value, which is the
                     // function the convention differentiates.
                     Rng rng(seed + 41);
                     const BBox<Tensor> p = random_boxes(6, rng), g = random_boxes(6, rng);
                     const Tensor alpha0 = detach(ciou_trade_off(p, g));
                     return gradcheck([&] { return sum(ciou_loss_with(p, g, alpha0)); }, with(leaves(p), leaves(g)));
                   }});
  cases.push_back({"losses", "ciou_alpha_differentiated", kLossTolerance, [seed] {
                     Rng rng(seed + 42);
                     const BBox<Tensor> p = random_boxes(6, rng), g = random_boxes(6, rng);
                     return gradcheck([&] { return sum(ciou_loss(p, g, true)); }, with(leaves(p), leaves(g)));
                   }});
  cases.push_back({"losses", "sa_wiou", kLossTolerance, [seed] {
                     Rng rng(seed + 43);
                     const BBox<Tensor> p = random_boxes(6, rng), g = random_boxes(6, rng);
                     LossConfig cfg;
                     cfg.ciou_alpha_gradient = true;
                     return gradcheck([&] { return sum(sa_wiou(p, g, cfg)); }, with(leaves(p), leaves(g)));
                   }});
  cases.push_back({"losses", "csc", kLossTolerance, [seed] {
                     Rng rng(seed + 44);
                     const Tensor e3 = randn({3, 6}, 1.0, rng), e4 = randn({3, 6}, 1.0, rng), e5 = randn({3, 6}, 1.0, rng);
                     return gradcheck([&] { return csc_loss(e3, e4, e5); }, {e3, e4, e5});
                   }});
  cases.push_back({"losses", "focal", kLossTolerance, [seed] {
                     Rng rng(seed + 45);
                     const Tensor logits = randn({8, 3}, 1.5, rng);
                     Eigen::VectorXd t(24);
                     std::bernoulli_distribution coin(0.3);
                     for (Index i = 0; i < t.size(); ++i) t[i] = coin(rng) ? 1.0 : 0.0;
                     const Tensor targets({8, 3}, t);
                     return gradcheck([&] { return focal_loss(logits, targets, 2.0, 0.25, 3.0); }, {logits});
                   }});
  cases.push_back({"losses", "l1", kLossTolerance, [seed] {
                     Rng rng(seed + 46);
                     const Tensor p = randn({5, 4}, 1.0, rng);
                     const Tensor g = randn({5, 4}, 1.0, rng, false);
                     return gradcheck([&] { return l1_loss(p, g); }, {p});
                   }});
  cases.push_back({"losses", "total_loss", kLossTolerance, [seed] {
                     Rng rng(seed + 47);
                     const Index n = 10;
                     const Tensor logits = randn({n, 2}, 1.0, rng);
                     const Tensor raw = uniform({n, 4}, 0.1, 0.6, rng);
                     MatchedTargets t{{1, 4, 7}, {{0.3, 0.4, 0.05, 0.08}, {0.6, 0.5, 0.2, 0.15}, {0.5, 0.7, 0.4, 0.3}}, {0, 1, 1}};
                     CenterEmbeddingTensors e{randn({3, 5}, 1.0, rng), randn({3, 5}, 1.0, rng), randn({3, 5}, 1.0, rng)};
                     LossConfig cfg;
                     cfg.ciou_alpha_gradient = true;
                     return gradcheck([&] { return total_loss(logits, raw, t, e, cfg).total; }, {logits, raw, e.e3, e.e4, e.e5});
                   }});
}

void add_model(std::vector<Case>& cases, std::uint64_t seed) {
  cases.push_back({"model", "toy_mamba_dsf_32x32", kModuleTolerance, [seed] {
                     Rng rng(seed + 50);
                     const ToyMambaDSF model = ToyMambaDSF::init({}, rng);
                     SceneConfig sc;
                     sc.height = sc.width = 32;
                     sc.max_extent = 8.0;
                     sc.seed = seed;
                     const SyntheticScene scene = generate_scene(sc);
                     LossConfig cfg;
                     cfg.ciou_alpha_gradient = true;
                     return gradcheck([&] { return scene_loss(model, scene, cfg).total; }, model.parameters());
                   }});
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names{"ssm", "msda", "fusion", "pyramid", "losses", "model"};
  return names;
}

std::vector<GradcheckEntry> run_gradcheck_suite(const std::string& module, std::uint64_t seed) {
  const auto& names = gradcheck_modules();
  if (module != "all" && std::find(names.begin(), names.end(), module) == names.end()) {
    throw ConfigError("unknown gradcheck module '" + module + "'");
  }
  std::vector<Case> cases;
  auto want = [&](const char* m) { return module == "all" || module == m; };
  if (want("ssm")) add_ssm(cases, seed);
  if (want("msda")) add_msda(cases, seed);
  if (want("fusion")) add_fusion(cases, seed);
  if (want("pyramid")) add_pyramid(cases, seed);
  if (want("losses")) add_losses(cases, seed);
  if (want("model")) add_model(cases, seed);

  std::vector<GradcheckEntry> out(cases.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cases.size(); i = next++) {
      try {
        out[i] = {cases[i].module, cases[i].name, cases[i].run(), cases[i].tolerance};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::min<unsigned>(worker_count(), static_cast<unsigned>(std::max<std::size_t>(1, cases.size())));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

SensitivityProbe cross_scale_sensitivity(const DFMambaEncoder& encoder, const PyramidSet& levels, int target,
                                         int source, std::uint64_t seed) {
  PyramidSet in;
  for (std::size_t i = 0; i < 3; ++i) in.maps[i] = levels.maps[i].detach();
  Tensor& x = in.level(source);
  x.set_requires_grad();
  Rng rng(seed);
  const Tensor r = randn(encoder(in).level(target).shape(), 1.0, rng, false);
  auto objective = [&] { return sum(encoder(in).level(target) * r); };

  objective().backward();
  const Eigen::VectorXd g = x.grad();
  Index at = 0;
  SensitivityProbe out;
  out.gradient = g.cwiseAbs().maxCoeff(&at);

  const double x0 = x.value()[at];
  const double h = 1e-5 * std::max(1.0, std::abs(x0));
  NoGradGuard guard;
  x.mutable_value()[at] = x0 + h;
  const double up = objective().item();
  x.mutable_value()[at] = x0 - h;
  const double down = objective().item();
  x.mutable_value()[at] = x0;
  out.finite_difference = std::abs(up - down) / (2.0 * h);
  return out;
}

}  // namespace mdsf
