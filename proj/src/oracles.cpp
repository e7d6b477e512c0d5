#include "mdsf/oracles.hpp"

#include "mdsf/attention.hpp"
#include "mdsf/layers.hpp"
#include "mdsf/ssm.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace mdsf::oracle {

RowMatrix unrolled_scan(const RowMatrix& x, const RowMatrix& A, const Eigen::VectorXd& D, const RowMatrix& delta,
                        const RowMatrix& B, const RowMatrix& C) {
  const Index L = x.rows(), ch = x.cols(), S = A.cols();
  RowMatrix y(L, ch);
  for (Index c = 0; c < ch; ++c) {
    for (Index t = 0; t < L; ++t) {
      double acc = D[c] * x(t, c);
      for (Index k = 0; k <= t; ++k) {
        for (Index s = 0; s < S; ++s) {
          double decay = 1.0;
          for (Index j = k + 1; j <= t; ++j) decay *= std::exp(delta(j, c) * A(c, s));
          acc += C(t, s) * decay * delta(k, c) * B(k, s) * x(k, c);
        }
      }
      y(t, c) = acc;
    }
  }
  return y;
}

Eigen::VectorXd dense_masked_attention(const Eigen::VectorXd& q, const Eigen::VectorXd& k, const Eigen::VectorXd& v,
                                       Index channels, Index h, Index w, Index dilation) {
  const Index n = h * w;
  const Index slots = n + 9;  // all positions, then one pad slot per offset
  const double scale = 1.0 / std::sqrt(static_cast<double>(channels));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(channels * n);
  for (Index p = 0; p < n; ++p) {
    const Index py = p / w, px = p % w;
    std::vector<bool> mask(static_cast<std::size_t>(slots), false);
    for (Index j = 0; j < 9; ++j) {
      const Index y = py + (j / 3 - 1) * dilation, x = px + (j % 3 - 1) * dilation;
      if (y >= 0 && y < h && x >= 0 && x < w) mask[static_cast<std::size_t>(y * w + x)] = true;
      else mask[static_cast<std::size_t>(n + j)] = true;
    }
    Eigen::VectorXd score = Eigen::VectorXd::Constant(slots, -std::numeric_limits<double>::infinity());
    for (Index s = 0; s < slots; ++s) {
      if (!mask[static_cast<std::size_t>(s)]) continue;
      double dot = 0.0;
      if (s < n)
        for (Index c = 0; c < channels; ++c) dot += q[c * n + p] * k[c * n + s];
      score[s] = dot * scale;
    }
    const double m = score.maxCoeff();
    Eigen::VectorXd prob(slots);
    for (Index s = 0; s < slots; ++s) prob[s] = mask[static_cast<std::size_t>(s)] ? std::exp(score[s] - m) : 0.0;
    prob /= prob.sum();
    for (Index c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (Index s = 0; s < n; ++s) acc += prob[s] * v[c * n + s];
      out[c * n + p] = acc;
    }
  }
  return out;
}

Eigen::VectorXd depthwise_conv(const Eigen::VectorXd& x, const Eigen::VectorXd& kernel, Index channels, Index h,
                               Index w, Index ksize, Index dilation, Index stride) {
  const Index pad = dilation * (ksize - 1) / 2;
  const Index oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(channels * oh * ow);
  for (Index c = 0; c < channels; ++c)
    for (Index oy = 0; oy < oh; ++oy)
      for (Index ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (Index i = 0; i < ksize; ++i)
          for (Index j = 0; j < ksize; ++j) {
            const Index y = oy * stride + i * dilation - pad, xx = ox * stride + j * dilation - pad;
            if (y < 0 || y >= h || xx < 0 || xx >= w) continue;
            acc += kernel[(c * ksize + i) * ksize + j] * x[(c * h + y) * w + xx];
          }
        out[(c * oh + oy) * ow + ox] = acc;
      }
  return out;
}

namespace {

RowMatrix gaussian(Index r, Index c, double sd, Rng& rng) {
  std::normal_distribution<double> n(0.0, sd);
  RowMatrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Tensor as_tensor(const RowMatrix& m) {
  return Tensor({m.rows(), m.cols()}, Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()));
}

}  // namespace

OracleResult check_scan(int trials, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<Index> len(1, 64), chans(1, 4), states(1, 8);
  std::uniform_real_distribution<double> step(0.01, 0.5), rate(0.1, 2.0);
  OracleResult r;
  for (int t = 0; t < trials; ++t) {
    const Index L = len(rng), C = chans(rng), S = states(rng);
    RowMatrix A(C, S), delta(L, C);
    for (Index i = 0; i < A.size(); ++i) A.data()[i] = -rate(rng);
    for (Index i = 0; i < delta.size(); ++i) delta.data()[i] = step(rng);
    const RowMatrix x = gaussian(L, C, 1.0, rng), B = gaussian(L, S, 1.0, rng), Cm = gaussian(L, S, 1.0, rng);
    const Eigen::VectorXd D = gaussian(C, 1, 1.0, rng);

    SSMParams params{as_tensor(A), Tensor({C}, D)};
    const Tensor y = selective_scan(as_tensor(x), params, {as_tensor(delta), as_tensor(B), as_tensor(Cm)});
    const RowMatrix ref = unrolled_scan(x, A, D, delta, B, Cm);
    const Eigen::Map<const Eigen::VectorXd> flat(ref.data(), ref.size());
    r.max_abs_error = std::max(r.max_abs_error, (y.value() - flat).cwiseAbs().maxCoeff());
    ++r.trials;
  }
  return r;
}

OracleResult check_msda(int trials, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<Index> chans(1, 4);
  OracleResult r;
  for (int t = 0; t < trials; ++t) {
    const Index c = chans(rng), h = 8, w = 8, d = 1 + t % 3;
    const Tensor q = randn({c, h, w}, 1.0, rng, false), k = randn({c, h, w}, 1.0, rng, false),
                 v = randn({c, h, w}, 1.0, rng, false);
    const Tensor out = dilated_attention_branch(q, k, v, d);
    const Eigen::VectorXd ref = dense_masked_attention(q.value(), k.value(), v.value(), c, h, w, d);
    r.max_abs_error = std::max(r.max_abs_error, (out.value() - ref).cwiseAbs().maxCoeff());
    ++r.trials;
  }
  return r;
}

}  // namespace mdsf::oracle
