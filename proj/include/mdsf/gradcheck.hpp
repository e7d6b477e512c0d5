#pragma once

#include "mdsf/tensor.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace mdsf {

/// |fd - ad| / max(1e-8, |fd| + |ad|); NaN inputs yield +inf.
double gradcheck_relative_error(double fd, double ad);

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  Index worst_index = 0;
  double worst_fd = 0.0;
  double worst_ad = 0.0;
  Index coordinates = 0;
  bool finite = true;
  // Every checked coordinate, parameters concatenated in order.
  Eigen::VectorXd fd;
  Eigen::VectorXd ad;

  bool passed(double tol) const { return finite && max_rel_error <= tol; }
  /// Coordinates whose relative error exceeds `tol`.
  std::vector<Index> failures(double tol) const;
};

/// Compares reverse-mode gradients of the scalar `f()` with central differences
/// over every coordinate of `params`. The step for coordinate i is
/// 1e-5 * max(1, |x_i|). Parameters are restored on return; their grads hold
/// the analytic gradient.
GradcheckReport gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& params);

/// Single-input form: max relative error of d f(x) / dx.
double gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& x);

/// Central-difference gradient of `f` with respect to `x` (no tape involved).
Eigen::VectorXd finite_difference_gradient(const std::function<Tensor()>& f, Tensor x);

}  // namespace mdsf
