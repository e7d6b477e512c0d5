#include "mdsf/fusion.hpp"

#include "mdsf/errors.hpp"
#include "mdsf/ops.hpp"

#include <cmath>

namespace mdsf {

std::vector<int> adjacent_levels(int target) {
  switch (target) {
    case 3: return {4};
    case 4: return {3, 5};
    case 5: return {4};
    default: throw ConfigError("modulator target level must be 3, 4 or 5, got " + std::to_string(target));
  }
}

ModulatorFeatures build_modulator(const PyramidSet& levels, int target, const Pointwise& projection) {
  const std::vector<int> neighbours = adjacent_levels(target);
  const Tensor& t = levels.level(target);
  const Index h = t.shape()[1], w = t.shape()[2];
  std::vector<Tensor> aligned;
  for (int n : neighbours) aligned.push_back(resize_bilinear(levels.level(n), h, w));
  const Tensor stacked = aligned.size() == 1 ? aligned.front() : concat(aligned, 0);
  return {projection(stacked)};
}

Tensor fus_gate(const Tensor& branch, const SelectiveInputs& inputs, const SSMParams& params) {
  if (branch.rank() != 3) throw DimensionError("fus_gate expects a [C,H,W] branch, got " + to_string(branch.shape()));
  const Index h = branch.shape()[1], w = branch.shape()[2];
  if (inputs.length() != h * w) {
    throw DimensionError("selective inputs cover " + std::to_string(inputs.length()) + " positions, branch has " +
                         std::to_string(h * w));
  }
  const Tensor tokens = to_tokens(branch);
  Tensor total;
  for (ScanDirection dir : kAllDirections) {
    const Tensor y = directional_scan_tokens(tokens, h, w, params, inputs, dir);
    total = total.defined() ? total + y : y;
  }
  return sigmoid(from_tokens(total, h, w));
}

Tensor scm_blend(const Tensor& branch, const Tensor& gate, const Tensor& alpha) {
  if (branch.shape() != gate.shape()) {
    throw DimensionError("blend shapes differ: " + to_string(branch.shape()) + " vs " + to_string(gate.shape()));
  }
  if (alpha.numel() != 1) throw DimensionError("alpha must be a scalar");
  return (1.0 - alpha) * branch + alpha * (branch * gate);
}

Tensor afr(const std::vector<Tensor>& branches, const Tensor& skip) {
  if (branches.empty()) throw DimensionError("afr needs at least one branch");
  const Tensor merged = branches.size() == 1 ? branches.front() : concat(branches, 0);
  if (merged.shape() != skip.shape()) {
    throw DimensionError("afr: concatenated branches " + to_string(merged.shape()) + " do not match skip " +
                         to_string(skip.shape()));
  }
  return layer_norm(merged + skip, 0);
}

FusSSM FusSSM::init(Index branch_channels, Index modulator_channels, Index state_size, Rng& rng) {
  FusSSM f;
  f.w_p = Pointwise::init(modulator_channels, branch_channels + 2 * state_size, rng);
  Eigen::VectorXd alog(branch_channels * state_size);
  for (Index c = 0; c < branch_channels; ++c)
    for (Index s = 0; s < state_size; ++s) alog[c * state_size + s] = std::log(static_cast<double>(s + 1));
  f.a_log = Tensor({branch_channels, state_size}, std::move(alog), true);
  f.d = Tensor::full({branch_channels}, 1.0, true);
  return f;
}

SSMParams FusSSM::ssm() const { return {-exp(a_log), d}; }

SelectiveInputs FusSSM::derive(const ModulatorFeatures& mod) const {
  const Tensor tokens = w_p.apply_tokens(to_tokens(mod.features));  // [L, C_b + 2S]
  const Index cb = branch_channels(), s = state_size();
  auto parts = split(tokens, 1, {cb, s, s});
  return {positive_step(parts[0]), parts[1], parts[2]};
}

Tensor FusSSM::operator()(const Tensor& branch, const ModulatorFeatures& mod) const {
  const Tensor& f = mod.features;
  if (f.rank() != 3 || branch.rank() != 3 || f.shape()[1] != branch.shape()[1] || f.shape()[2] != branch.shape()[2]) {
    throw DimensionError("modulator " + to_string(f.shape()) + " is not aligned with branch " +
                         to_string(branch.shape()));
  }
  return fus_gate(branch, derive(mod), ssm());
}

std::vector<Tensor> FusSSM::parameters() const {
  std::vector<Tensor> p = w_p.parameters();
  p.push_back(a_log);
  p.push_back(d);
  return p;
}

SCMBlock SCMBlock::init(Index channels, Index branch_channels, int level, Index state_size, Rng& rng) {
  const Index neighbours = static_cast<Index>(adjacent_levels(level).size());
  SCMBlock b;
  b.modulator_proj = Pointwise::init(channels * neighbours, branch_channels, rng);
  b.fus = FusSSM::init(branch_channels, branch_channels, state_size, rng);
  b.alpha = Tensor::full({1}, 0.5, true);
  return b;
}

Tensor SCMBlock::operator()(const Tensor& branch, const PyramidSet& levels, int level) const {
  const ModulatorFeatures mod = build_modulator(levels, level, modulator_proj);
  return scm_blend(branch, fus(branch, mod), alpha);
}

std::vector<Tensor> SCMBlock::parameters() const {
  std::vector<Tensor> p = modulator_proj.parameters();
  append(p, fus.parameters());
  p.push_back(alpha);
  return p;
}

DFMambaEncoder DFMambaEncoder::init(const EncoderConfig& config, Rng& rng) {
  config.msda.validate(config.channels);
  DFMambaEncoder e;
  e.config = config;
  const Index bc = config.channels / config.msda.branches();
  for (int i = 0; i < 3; ++i) {
    e.msda[static_cast<std::size_t>(i)] = MSDA::init(config.channels, config.msda, rng);
    for (Index b = 0; b < config.msda.branches(); ++b) {
      e.scm[static_cast<std::size_t>(i)].push_back(
          SCMBlock::init(config.channels, bc, PyramidSet::kFirstLevel + i, config.state_size, rng));
    }
  }
  return e;
}

PyramidSet DFMambaEncoder::operator()(const PyramidSet& levels) const {
  levels.validate();
  if (levels.channels() != config.channels) {
    throw DimensionError("encoder expects " + std::to_string(config.channels) + " channels, got " +
                         std::to_string(levels.channels()));
  }
  PyramidSet out;
  for (int i = 0; i < 3; ++i) {
    const int level = PyramidSet::kFirstLevel + i;
    const auto idx = static_cast<std::size_t>(i);
    const Tensor& n = levels.level(level);
    std::vector<Tensor> branches = msda[idx](n);
    for (std::size_t b = 0; b < branches.size(); ++b) branches[b] = scm[idx][b](branches[b], levels, level);
    out.level(level) = afr(branches, n);
  }
  return out;
}

void DFMambaEncoder::set_alpha(double value) {
  for (auto& blocks : scm)
    for (auto& b : blocks) b.alpha.mutable_value().setConstant(value);
}

void DFMambaEncoder::zero_modulator_projection() {
  for (auto& blocks : scm)
    for (auto& b : blocks) {
      b.fus.w_p.weight.mutable_value().setZero();
      b.fus.w_p.bias.mutable_value().setZero();
    }
}

std::vector<Tensor> DFMambaEncoder::parameters() const {
  std::vector<Tensor> p;
  for (std::size_t i = 0; i < 3; ++i) {
    append(p, msda[i].parameters());
    for (const auto& b : scm[i]) append(p, b.parameters());
  }
  return p;
}

}  // namespace mdsf
