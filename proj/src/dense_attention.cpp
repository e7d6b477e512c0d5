#include "dense_attention_kernel.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

// Only mapped buffers and coefficient-based products here: with host flags
// Eigen's heap alignment and blocked product kernels differ from the rest of
// the build, so neither may cross this file's boundary.

namespace mdsf::detail {

namespace {

using Rows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::Map<const Rows, 0, Eigen::OuterStride<>>;

// acc[i, :] += sum_j s[i, j] v[j, :] for `rows` consecutive query rows.
template <int rows>
void accumulate(const double* s, std::ptrdiff_t nk, const double* v, std::ptrdiff_t c, double* acc) {
  for (std::ptrdiff_t j = 0; j < nk; ++j) {
    const double* vr = v + j * c;
    double w[rows];
    for (int r = 0; r < rows; ++r) w[r] = s[r * nk + j];
    for (std::ptrdiff_t y = 0; y < c; ++y) {
      for (int r = 0; r < rows; ++r) acc[r * c + y] += w[r] * vr[y];
    }
  }
}

}  // namespace

void attention_kernel(const double* q, const double* k, const double* v, double* out, std::ptrdiff_t L,
                      std::ptrdiff_t d, std::ptrdiff_t c, std::ptrdiff_t query_block, std::ptrdiff_t key_block) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const std::ptrdiff_t qb = std::min(query_block, L), kb = std::min(key_block, L);

  std::vector<double> kt(static_cast<std::size_t>(d * L));  // keys transposed: [d, L]
  for (std::ptrdiff_t j = 0; j < L; ++j) {
    for (std::ptrdiff_t x = 0; x < d; ++x) kt[x * L + j] = k[j * d + x];
  }
  std::vector<double> qs(static_cast<std::size_t>(qb * d)), s(static_cast<std::size_t>(qb * kb));
  std::vector<double> acc(static_cast<std::size_t>(qb * c)), m(qb), l(qb);

  for (std::ptrdiff_t q0 = 0; q0 < L; q0 += qb) {
    const std::ptrdiff_t nq = std::min(qb, L - q0);
    for (std::ptrdiff_t t = 0; t < nq * d; ++t) qs[t] = q[q0 * d + t] * scale;
    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(m.begin(), m.end(), -std::numeric_limits<double>::infinity());
    std::fill(l.begin(), l.end(), 0.0);
    const Eigen::Map<const Rows> Q(qs.data(), nq, d);
    for (std::ptrdiff_t k0 = 0; k0 < L; k0 += kb) {
      const std::ptrdiff_t nk = std::min(kb, L - k0);
      Eigen::Map<Rows> S(s.data(), nq, nk);
      S.noalias() = Q.lazyProduct(Strided(kt.data() + k0, d, nk, Eigen::OuterStride<>(L)));
      for (std::ptrdiff_t i = 0; i < nq; ++i) {
        Eigen::Map<Eigen::ArrayXd> r(s.data() + i * nk, nk);
        const double mx = std::max(m[i], r.maxCoeff());
        r = (r - mx).exp();
        const double corr = std::exp(m[i] - mx);
        m[i] = mx;
        l[i] = l[i] * corr + r.sum();
        for (std::ptrdiff_t y = 0; y < c; ++y) acc[i * c + y] *= corr;
      }
      std::ptrdiff_t i = 0;
      for (; i + 4 <= nq; i += 4) accumulate<4>(s.data() + i * nk, nk, v + k0 * c, c, acc.data() + i * c);
      for (; i < nq; ++i) accumulate<1>(s.data() + i * nk, nk, v + k0 * c, c, acc.data() + i * c);
    }
    for (std::ptrdiff_t i = 0; i < nq; ++i) {
      for (std::ptrdiff_t y = 0; y < c; ++y) out[(q0 + i) * c + y] = acc[i * c + y] / l[i];
    }
  }
}

}  // namespace mdsf::detail
