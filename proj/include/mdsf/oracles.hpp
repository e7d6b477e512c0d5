#pragma once

#include "mdsf/tensor.hpp"

#include <cstdint>

namespace mdsf::oracle {

/// Closed-form expansion of the selective recurrence with h_0 = 0:
///   y_t = sum_{k<=t} C_t . (prod_{j=k+1..t} exp(delta_j A)) delta_k B_k x_k + D x_t
/// Evaluated term by term, O(L^2 C S). Shapes: x, delta [L,C]; A [C,S]; D [C]; B, C [L,S].
RowMatrix unrolled_scan(const RowMatrix& x, const RowMatrix& A, const Eigen::VectorXd& D, const RowMatrix& delta,
                        const RowMatrix& B, const RowMatrix& C);

/// Attention of every pixel against all H*W keys plus nine zero pad slots under
/// an explicit mask: a pixel may attend to in-bounds positions p + o d and, for
/// each out-of-bounds offset o, to one pad slot holding a zero key and value.
/// q, k, v are [c,H,W] flattened row-major per channel; returns [c*H*W].
Eigen::VectorXd dense_masked_attention(const Eigen::VectorXd& q, const Eigen::VectorXd& k, const Eigen::VectorXd& v,
                                       Index channels, Index h, Index w, Index dilation);

/// Nested-loop depthwise cross-correlation with zero padding d*(k-1)/2.
Eigen::VectorXd depthwise_conv(const Eigen::VectorXd& x, const Eigen::VectorXd& kernel, Index channels, Index h,
                               Index w, Index ksize, Index dilation, Index stride);

struct OracleResult {
  double max_abs_error = 0.0;
  int trials = 0;
};

/// Random instances with L <= 64, C <= 4, S <= 8 against `unrolled_scan`.
OracleResult check_scan(int trials, std::uint64_t seed);
/// Random 8x8 instances, d in {1,2,3}, against `dense_masked_attention`.
OracleResult check_msda(int trials, std::uint64_t seed);

}  // namespace mdsf::oracle
