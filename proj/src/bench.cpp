#include "mdsf/bench.hpp"

#include "dense_attention_kernel.hpp"

#include "mdsf/errors.hpp"
#include "mdsf/layers.hpp"
#include "mdsf/ssm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

namespace mdsf {

RowMatrix dense_attention(const RowMatrix& q, const RowMatrix& k, const RowMatrix& v, Index query_block,
                          Index key_block) {
  if (k.rows() != q.rows() || v.rows() != q.rows() || k.cols() != q.cols()) {
    throw DimensionError("attention q, k, v disagree in shape");
  }
  if (query_block < 1 || key_block < 1) throw ConfigError("attention blocks must be positive");
  RowMatrix out(q.rows(), v.cols());
  if (q.rows() > 0) {
    detail::attention_kernel(q.data(), k.data(), v.data(), out.data(), q.rows(), q.cols(), v.cols(), query_block,
                             key_block);
  }
  return out;
}

namespace {

RowMatrix gaussian(Index r, Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

template <class F>
double median_ns(int reps, F&& f) {
  f();  // untimed warm-up: first-touch page faults and allocator growth
  std::vector<double> t;
  for (int i = 0; i < reps; ++i) {
    const auto a = std::chrono::steady_clock::now();
    f();
    const auto b = std::chrono::steady_clock::now();
    t.push_back(std::chrono::duration<double, std::nano>(b - a).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace

std::vector<ScanBenchRow> run_scan_bench(const std::vector<Index>& lengths, int reps, std::uint64_t seed,
                                         Index channels, Index state_size) {
  if (reps < 1) throw ConfigError("reps must be at least 1");
  Rng rng(seed);
  std::vector<ScanBenchRow> rows;
  volatile double sink = 0.0;
  for (Index L : lengths) {
    if (L < 1) throw ConfigError("lengths must be positive");
    NoGradGuard guard;
    SSMParams p = SSMParams::init(channels, state_size, false);
    Eigen::VectorXd dv(L * channels);
    std::uniform_real_distribution<double> step(0.01, 0.5);
    for (Index i = 0; i < dv.size(); ++i) dv[i] = step(rng);
    const RowMatrix bx = gaussian(L, state_size, rng), cx = gaussian(L, state_size, rng), xx = gaussian(L, channels, rng);
    auto tensor = [](const RowMatrix& m) {
      return Tensor({m.rows(), m.cols()}, Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()));
    };
    const SelectiveInputs in{Tensor({L, channels}, dv), tensor(bx), tensor(cx)};
    const Tensor x = tensor(xx);

    ScanBenchRow row;
    row.length = L;
    row.scan_ns = median_ns(reps, [&] { sink = sink + selective_scan(x, p, in).value()[0]; });
    const RowMatrix q = gaussian(L, channels, rng), k = gaussian(L, channels, rng), v = gaussian(L, channels, rng);
    row.attn_ns = median_ns(reps, [&] { sink = sink + dense_attention(q, k, v)(0, 0); });
    rows.push_back(row);
  }
  return rows;
}

std::string scan_bench_csv(const std::vector<ScanBenchRow>& rows) {
  std::ostringstream os;
  os << "length,scan_ns,attn_ns\n" << std::fixed << std::setprecision(0);
  for (const auto& r : rows) os << r.length << ',' << r.scan_ns << ',' << r.attn_ns << '\n';
  return os.str();
}

SurfaceLoss parse_surface_loss(const std::string& name) {
  if (name == "sawiou") return SurfaceLoss::SAWIoU;
  if (name == "nwd") return SurfaceLoss::NWD;
  if (name == "ciou") return SurfaceLoss::CIoU;
  throw ConfigError("unknown loss '" + name + "' (expected sawiou, nwd or ciou)");
}

double central_difference(const std::function<double(double)>& f, double x) {
  const double h = 1e-5 * std::max(1.0, std::abs(x));
  const double hi = x + h, lo = x - h;
  return (f(hi) - f(lo)) / (hi - lo);
}

std::vector<SurfaceRow> loss_surface(SurfaceLoss kind, int steps, double range, const LossConfig& cfg) {
  if (steps < 1 || !(range > 0.0)) throw ConfigError("sweep needs steps >= 1 and a positive range");
  const Box g{0.5, 0.5, 0.03, 0.03};
  auto loss = [&](double cx) {
    const Box p{cx, g.cy, g.w, g.h};
    switch (kind) {
      case SurfaceLoss::NWD: return nwd_loss(p, g, cfg.tau_w);
      case SurfaceLoss::CIoU: return ciou_loss(p, g);
      case SurfaceLoss::SAWIoU: break;
    }
    return sa_wiou(p, g, cfg);
  };
  auto one_minus_iou = [&](double cx) { return 1.0 - iou(Box{cx, g.cy, g.w, g.h}, g); };
  std::vector<SurfaceRow> rows;
  for (int i = 0; i <= steps; ++i) {
    const double off = range * static_cast<double>(steps - i) / static_cast<double>(steps);
    const double cx = g.cx + off;
    rows.push_back({off, loss(cx), central_difference(loss, cx), central_difference(one_minus_iou, cx)});
  }
  return rows;
}

std::string surface_csv(const std::vector<SurfaceRow>& rows) {
  std::ostringstream os;
  os << "offset,loss,dloss_dcx,d_one_minus_iou_dcx\n" << std::setprecision(17);
  for (const auto& r : rows) os << r.offset << ',' << r.loss << ',' << r.grad_cx << ',' << r.iou_grad_cx << '\n';
  return os.str();
}

}  // namespace mdsf
