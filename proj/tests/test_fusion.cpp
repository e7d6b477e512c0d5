#include "mdsf/errors.hpp"
#include "mdsf/fusion.hpp"
#include "mdsf/gradcheck.hpp"
#include "mdsf/ops.hpp"
#include "mdsf/suites.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mdsf;
using mdsf::testing::max_abs_diff;

namespace {

PyramidSet random_levels(Index c, Index h, Rng& rng) {
  return {{randn({c, h, h}, 1.0, rng, false), randn({c, (h + 1) / 2, (h + 1) / 2}, 1.0, rng, false),
           randn({c, (h + 3) / 4, (h + 3) / 4}, 1.0, rng, false)}};
}

}  // namespace

TEST(Modulator, AdjacentLevels) {
  EXPECT_EQ(adjacent_levels(3), (std::vector<int>{4}));
  EXPECT_EQ(adjacent_levels(4), (std::vector<int>{3, 5}));
  EXPECT_EQ(adjacent_levels(5), (std::vector<int>{4}));
  EXPECT_THROW(adjacent_levels(2), ConfigError);
  EXPECT_THROW(adjacent_levels(6), ConfigError);
}

TEST(Modulator, AlignedToTargetLevel) {
  Rng rng(1);
  const PyramidSet levels = random_levels(4, 8, rng);
  const Pointwise two = Pointwise::init(8, 2, rng), one = Pointwise::init(4, 2, rng);
  EXPECT_EQ(build_modulator(levels, 4, two).features.shape(), (Shape{2, 4, 4}));
  EXPECT_EQ(build_modulator(levels, 3, one).features.shape(), (Shape{2, 8, 8}));
  EXPECT_EQ(build_modulator(levels, 5, one).features.shape(), (Shape{2, 2, 2}));
  EXPECT_THROW(build_modulator(levels, 6, one), ConfigError);
  EXPECT_THROW(build_modulator(levels, 4, one), DimensionError);
}

TEST(Modulator, ConstantMapsStayConstant) {
  PyramidSet levels{{Tensor::full({1, 8, 8}, 0.0), Tensor::full({1, 4, 4}, 2.5), Tensor::full({1, 2, 2}, -1.0)}};
  Pointwise id = Pointwise::zeros(1, 1);
  id.weight.mutable_value()[0] = 1.0;
  const Tensor up = build_modulator(levels, 3, id).features;
  EXPECT_LT((up.value().array() - 2.5).abs().maxCoeff(), 1e-15);
  const Tensor up2 = resize_bilinear(Tensor::full({2, 3, 5}, 0.3), 11, 7);
  EXPECT_LT((up2.value().array() - 0.3).abs().maxCoeff(), 1e-15);
}

TEST(Modulator, RampSurvivesDownThenUpsampling) {
  const Index n = 16;
  Eigen::VectorXd v(n * n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) v[r * n + c] = 0.25 * static_cast<double>(r) - 0.75 * static_cast<double>(c) + 3.0;
  const Tensor ramp({1, n, n}, v);
  const Tensor back = resize_bilinear(resize_bilinear(ramp, n / 2, n / 2), n, n);
  for (Index r = 1; r < n - 1; ++r)
    for (Index c = 1; c < n - 1; ++c) EXPECT_NEAR(back.at({0, r, c}), ramp.at({0, r, c}), 1e-12);
}

TEST(FusGate, VanishingStepGivesSkipGate) {
  Rng rng(2);
  const Index c = 3, s = 4, h = 4, w = 5;
  const SSMParams p{uniform({c, s}, -2.0, -0.5, rng, false), randn({c}, 1.0, rng, false)};
  const SelectiveInputs in{Tensor::full({h * w, c}, 1e-15), randn({h * w, s}, 1.0, rng, false),
                           randn({h * w, s}, 1.0, rng, false)};
  const Tensor x = randn({c, h, w}, 1.0, rng, false);
  const Tensor g = fus_gate(x, in, p);
  for (Index ch = 0; ch < c; ++ch)
    for (Index i = 0; i < h * w; ++i) {
      const double z = 4.0 * p.D.value()[ch] * x.value()[ch * h * w + i];
      EXPECT_NEAR(g.value()[ch * h * w + i], 1.0 / (1.0 + std::exp(-z)), 1e-12);
    }
}

TEST(FusGate, StrictlyInsideUnitInterval) {
  Rng rng(3);
  const FusSSM f = FusSSM::init(4, 4, 3, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor g = f(randn({4, 5, 5}, 0.5, rng, false), {randn({4, 5, 5}, 1.0, rng, false)});
    EXPECT_GT(g.value().minCoeff(), 0.0);
    EXPECT_LT(g.value().maxCoeff(), 1.0);
  }
}

TEST(FusGate, ZeroProjectionIgnoresModulator) {
  Rng rng(4);
  FusSSM f = FusSSM::init(3, 4, 2, rng);
  f.w_p.weight.mutable_value().setZero();
  f.w_p.bias.mutable_value().setZero();
  const Tensor branch = randn({3, 4, 4}, 1.0, rng, false);
  const Tensor g1 = f(branch, {randn({4, 4, 4}, 1.0, rng, false)});
  const Tensor g2 = f(branch, {randn({4, 4, 4}, 5.0, rng, false)});
  EXPECT_EQ(max_abs_diff(g1, g2), 0.0);
  const SelectiveInputs in = f.derive({randn({4, 4, 4}, 1.0, rng, false)});
  EXPECT_LT((in.delta.value().array() - (std::log(2.0) + kDeltaFloor)).abs().maxCoeff(), 1e-15);
}

TEST(FusGate, DerivedStepsArePositive) {
  Rng rng(5);
  const FusSSM f = FusSSM::init(3, 4, 2, rng);
  const SelectiveInputs in = f.derive({randn({4, 3, 6}, 30.0, rng, false)});
  EXPECT_EQ(in.delta.shape(), (Shape{18, 3}));
  EXPECT_EQ(in.B.shape(), (Shape{18, 2}));
  EXPECT_GE(in.delta.value().minCoeff(), kDeltaFloor);
  EXPECT_THROW(f(randn({3, 3, 5}, 1.0, rng, false), {randn({4, 3, 6}, 1.0, rng, false)}), DimensionError);
}

TEST(ScmBlend, IdentityCases) {
  Rng rng(6);
  const Tensor b = randn({2, 3, 3}, 1.0, rng, false), g = uniform({2, 3, 3}, 0.01, 0.99, rng, false);
  EXPECT_EQ(max_abs_diff(scm_blend(b, g, Tensor({1}, {0.0})), b), 0.0);
  EXPECT_EQ(max_abs_diff(scm_blend(b, g, Tensor({1}, {1.0})), b * g), 0.0);
  for (double a : {-0.7, 0.3, 2.0})
    EXPECT_LT(max_abs_diff(scm_blend(b, Tensor::full({2, 3, 3}, 1.0), Tensor({1}, {a})), b), 1e-15);
}

TEST(ScmBlock, ZeroAlphaIsExactIdentityOnBranch) {
  Rng rng(7);
  const PyramidSet levels = random_levels(6, 8, rng);
  for (int level = 3; level <= 5; ++level) {
    SCMBlock b = SCMBlock::init(6, 2, level, 3, rng);
    EXPECT_EQ(b.alpha.item(), 0.5);
    b.alpha.mutable_value()[0] = 0.0;
    const Shape& s = levels.level(level).shape();
    const Tensor branch = randn({2, s[1], s[2]}, 1.0, rng, false);
    EXPECT_EQ(max_abs_diff(b(branch, levels, level), branch), 0.0);
  }
}

TEST(Afr, ZeroBranchesNormaliseSkip) {
  Rng rng(8);
  const Tensor skip = randn({4, 3, 5}, 1.0, rng, false);
  const Tensor out = afr({Tensor({2, 3, 5}), Tensor({2, 3, 5})}, skip);
  EXPECT_EQ(max_abs_diff(out, layer_norm(skip, 0)), 0.0);
}

TEST(Afr, ChannelMeanVanishes) {
  Rng rng(9);
  const Tensor out = afr({randn({3, 4, 4}, 2.0, rng, false), randn({3, 4, 4}, 2.0, rng, false)},
                         randn({6, 4, 4}, 2.0, rng, false));
  const Tensor m = mean(out, 0);
  EXPECT_LT(m.value().cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Afr, ChannelMismatch) {
  EXPECT_THROW(afr({Tensor({2, 3, 3}), Tensor({2, 3, 3})}, Tensor({5, 3, 3})), DimensionError);
  EXPECT_THROW(afr({Tensor({2, 3, 3}), Tensor({2, 3, 4})}, Tensor({4, 3, 3})), DimensionError);
}

TEST(Encoder, ShapesPreserved) {
  Rng rng(10);
  const DFMambaEncoder enc = DFMambaEncoder::init({12, MSDAConfig{}, 4}, rng);
  const PyramidSet levels = random_levels(12, 8, rng);
  const PyramidSet out = enc(levels);
  for (int l = 3; l <= 5; ++l) EXPECT_EQ(out.level(l).shape(), levels.level(l).shape());
}

TEST(Encoder, ZeroAlphaReducesToAttentionAndRefinement) {
  Rng rng(11);
  DFMambaEncoder enc = DFMambaEncoder::init({12, MSDAConfig{}, 4}, rng);
  enc.set_alpha(0.0);
  const PyramidSet levels = random_levels(12, 8, rng);
  const PyramidSet out = enc(levels);
  for (int l = 3; l <= 5; ++l) {
    const Tensor& n = levels.level(l);
    const Tensor ref = afr(enc.msda[static_cast<std::size_t>(l - 3)](n), n);
    EXPECT_EQ(max_abs_diff(out.level(l), ref), 0.0) << "level " << l;
  }
}

TEST(Encoder, CrossScaleSensitivity) {
  Rng rng(12);
  DFMambaEncoder enc = DFMambaEncoder::init({12, MSDAConfig{}, 4}, rng);
  const PyramidSet levels = random_levels(12, 8, rng);
  const std::vector<std::pair<int, int>> adjacent{{3, 4}, {4, 3}, {4, 5}, {5, 4}};
  for (const auto& [target, source] : adjacent) {
    const SensitivityProbe p = cross_scale_sensitivity(enc, levels, target, source, 3);
    EXPECT_GE(p.gradient, 1e-8) << target << "<-" << source;
    EXPECT_GE(p.finite_difference, 1e-8) << target << "<-" << source;
    EXPECT_NEAR(p.finite_difference, p.gradient, 1e-6 * p.gradient + 1e-9);
  }
  // The encoder alone only links neighbouring levels.
  EXPECT_EQ(cross_scale_sensitivity(enc, levels, 3, 5, 3).gradient, 0.0);

  enc.zero_modulator_projection();
  for (const auto& [target, source] : adjacent) {
    const SensitivityProbe p = cross_scale_sensitivity(enc, levels, target, source, 3);
    EXPECT_LE(p.gradient, 1e-12) << target << "<-" << source;
    EXPECT_LE(p.finite_difference, 1e-12) << target << "<-" << source;
  }
}

TEST(Encoder, GradcheckSuite) {
  for (const GradcheckEntry& e : run_gradcheck_suite("fusion", 7)) {
    EXPECT_TRUE(e.passed()) << e.name << " max_rel_err=" << e.report.max_rel_error;
    EXPECT_GT(e.report.coordinates, 0) << e.name;
  }
}
