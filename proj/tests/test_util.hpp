#pragma once

#include "mdsf/layers.hpp"
#include "mdsf/tensor.hpp"

#include <Eigen/Core>

#include <cmath>

namespace mdsf::testing {

inline double max_abs_diff(const Tensor& a, const Tensor& b) { return (a.value() - b.value()).cwiseAbs().maxCoeff(); }
inline double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline Tensor constant(Shape shape, double sd, Rng& rng) { return randn(std::move(shape), sd, rng, false); }

/// Copy of x with one element changed.
inline Tensor bumped(const Tensor& x, Index flat, double delta) {
  Eigen::VectorXd v = x.value();
  v[flat] += delta;
  return Tensor(x.shape(), v);
}

}  // namespace mdsf::testing
