#include "mdsf/gradcheck.hpp"

#include "mdsf/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mdsf {

namespace {

double step_for(double x) { return 1e-5 * std::max(1.0, std::abs(x)); }

double eval_scalar(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  const Tensor y = f();
  if (y.numel() != 1) throw UsageError("gradcheck function must return a scalar, got " + to_string(y.shape()));
  return y.item();
}

// Central difference at coordinate i; the denominator is the step actually taken.
double central_difference(const std::function<Tensor()>& f, Tensor& x, Index i) {
  Eigen::VectorXd& v = x.mutable_value();
  const double x0 = v[i];
  const double h = step_for(x0);
  const double hi = x0 + h, lo = x0 - h;
  v[i] = hi;
  const double fp = eval_scalar(f);
  v[i] = lo;
  const double fm = eval_scalar(f);
  v[i] = x0;
  return (fp - fm) / (hi - lo);
}

}  // namespace

double gradcheck_relative_error(double fd, double ad) {
  if (!std::isfinite(fd) || !std::isfinite(ad)) return std::numeric_limits<double>::infinity();
  return std::abs(fd - ad) / std::max(1e-8, std::abs(fd) + std::abs(ad));
}

Eigen::VectorXd finite_difference_gradient(const std::function<Tensor()>& f, Tensor x) {
  Eigen::VectorXd g(x.numel());
  for (Index i = 0; i < x.numel(); ++i) g[i] = central_difference(f, x, i);
  return g;
}

GradcheckReport gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& params) {
  std::vector<Tensor> ps = params;
  for (auto& p : ps) {
    if (!p.is_leaf()) throw UsageError("gradcheck parameters must be leaf tensors");
    p.set_requires_grad(true);
    p.zero_grad();
  }
  GradcheckReport report;
  const Tensor loss = f();
  if (!std::isfinite(loss.item())) {
    report.finite = false;
    report.max_rel_error = std::numeric_limits<double>::infinity();
    return report;
  }
  backward(loss);
  Index total = 0;
  for (const auto& p : ps) total += p.numel();
  report.fd.resize(total);
  report.ad.resize(total);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const Eigen::VectorXd ad = ps[k].grad();
    for (Index i = 0; i < ps[k].numel(); ++i) {
      const double fd = central_difference(f, ps[k], i);
      const double err = gradcheck_relative_error(fd, ad[i]);
      report.fd[report.coordinates] = fd;
      report.ad[report.coordinates] = ad[i];
      ++report.coordinates;
      if (!std::isfinite(fd)) report.finite = false;
      if (err > report.max_rel_error || !std::isfinite(err)) {
        report.max_rel_error = err;
        report.worst_param = k;
        report.worst_index = i;
        report.worst_fd = fd;
        report.worst_ad = ad[i];
      }
    }
  }
  return report;
}

std::vector<Index> GradcheckReport::failures(double tol) const {
  std::vector<Index> out;
  for (Index i = 0; i < fd.size(); ++i) {
    if (!(gradcheck_relative_error(fd[i], ad[i]) <= tol)) out.push_back(i);
  }
  return out;
}

double gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  Tensor leaf(x.shape(), x.value(), true);
  return gradcheck([&] { return f(leaf); }, {leaf}).max_rel_error;
}

}  // namespace mdsf
