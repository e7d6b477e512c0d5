// One PASS/FAIL line per acceptance criterion. Exit status is 0 when every
// outcome matches expectation (all PASS, except criteria named in --expect-fail).

#include "mdsf/attention.hpp"
#include "mdsf/bench.hpp"
#include "mdsf/fusion.hpp"
#include "mdsf/losses.hpp"
#include "mdsf/ops.hpp"
#include "mdsf/oracles.hpp"
#include "mdsf/suites.hpp"
#include "mdsf/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace mdsf;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

Verdict scan_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const oracle::OracleResult r = oracle::check_scan(20, 1);
  const double t = seconds_since(t0);
  return {r.trials == 20 && r.max_abs_error <= 1e-10 && t < 5.0,
          "max abs err " + sci(r.max_abs_error) + " over " + std::to_string(r.trials) + " instances, " + fixed(t) +
              " s"};
}

Verdict linear_cost() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_scan_bench({8192, 16384, 32768}, 9, 1);
  const double t = seconds_since(t0);
  bool ok = t < 120.0;
  std::string detail;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double scan = rows[i].scan_ns / rows[i - 1].scan_ns, attn = rows[i].attn_ns / rows[i - 1].attn_ns;
    ok = ok && scan >= 1.6 && scan <= 2.6 && attn >= 3.2;
    detail += "L" + std::to_string(rows[i - 1].length) + "->" + std::to_string(rows[i].length) + " scan x" +
              fixed(scan, 3) + " attention x" + fixed(attn, 3) + "; ";
  }
  detail += "medians (ms) scan";
  for (const auto& r : rows) detail += " " + fixed(r.scan_ns * 1e-6, 2);
  detail += ", attention";
  for (const auto& r : rows) detail += " " + fixed(r.attn_ns * 1e-6, 0);
  return {ok, detail + "; " + fixed(t, 1) + " s"};
}

Verdict receptive_field() {
  Rng rng(21);
  const Index channels = 6, h = 12, w = 12;
  const MSDA m = MSDA::init(channels, MSDAConfig{}, rng);
  const Tensor x = randn({channels, h, w}, 1.0, rng, false);
  const std::vector<Tensor> base = m(x);
  std::uniform_int_distribution<Index> coord(0, channels * h * w - 1);
  std::normal_distribution<double> bump(0.0, 1.0);
  const Index bc = m.branch_channels();
  int probes = 0, leaks = 0, silent = 0;
  for (int probe = 0; probe < 50; ++probe) {
    const Index flat = coord(rng);
    const Index q = flat % (h * w);
    Eigen::VectorXd xv = x.value();
    xv[flat] += 1.0 + std::abs(bump(rng));
    const std::vector<Tensor> out = m(Tensor(x.shape(), xv));
    for (std::size_t b = 0; b < base.size(); ++b) {
      const Index d = m.config.dilations[b];
      bool inside_changed = false;
      for (Index p = 0; p < h * w; ++p) {
        const Index cheb = std::max(std::abs(p / w - q / w), std::abs(p % w - q % w));
        for (Index c = 0; c < bc; ++c) {
          const double before = base[b].value()[c * h * w + p], after = out[b].value()[c * h * w + p];
          if (cheb > d && after != before) ++leaks;
          if (cheb <= d && after != before) inside_changed = true;
        }
      }
      if (!inside_changed) ++silent;
      ++probes;
    }
  }
  return {leaks == 0 && silent == 0,
          std::to_string(probes) + " probes over d = 1,2,3: " + std::to_string(leaks) +
              " changed outputs outside radius d, " + std::to_string(silent) + " probes with no change inside"};
}

Verdict msda_oracle() {
  const oracle::OracleResult r = oracle::check_msda(20, 2);
  return {r.trials == 20 && r.max_abs_error <= 1e-10,
          "max abs err " + sci(r.max_abs_error) + " over " + std::to_string(r.trials) + " trials"};
}

Verdict closed_forms() {
  const double w1 = wasserstein_sq(Box{0, 0, 2, 2}, Box{3, 4, 2, 2});
  const double w2 = wasserstein_sq(Box{0, 0, 2, 2}, Box{0, 0, 4, 6});
  const LossConfig cfg;
  const double omega = area_weight(Box{0.5, 0.5, 1.0, cfg.tau_s}, cfg.tau_s);  // a_g = tau_s
  const Eigen::Vector3d ex(1, 0, 0), ey(0, 1, 0);
  const double csc = csc_loss(std::vector<CenterEmbedding>{{ex, ex, ey}});
  const bool ok = w1 == 25.0 && w2 == 5.0 && std::abs(omega - std::exp(-1.0)) <= 1e-12 &&
                  std::abs(csc - 2.0 / 3.0) <= 1e-12;
  return {ok, "W2^2 = " + fixed(w1, 17) + " and " + fixed(w2, 17) + "; omega - 1/e = " +
                  sci(omega - std::exp(-1.0)) + "; csc - 2/3 = " + sci(csc - 2.0 / 3.0)};
}

Verdict zero_iou_gradient() {
  const LossConfig cfg;
  Rng rng(6);
  std::uniform_real_distribution<double> size(0.005, std::sqrt(0.1 * cfg.tau_s));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int pairs = 0, bad = 0;
  double min_grad = 1e300;
  while (pairs < 40) {
    const Box g{0.5, 0.5, size(rng), size(rng)};
    if (g.w * g.h > 0.1 * cfg.tau_s) continue;
    const Box p0{0.5, 0.5 + (unit(rng) - 0.5) * g.h, size(rng), size(rng)};
    const double gap = 0.002 + 0.2 * unit(rng);
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    const double cx = g.cx + sign * ((g.w + p0.w) / 2 + gap);
    const auto at = [&](double x) { return Box{x, p0.cy, p0.w, p0.h}; };
    if (iou(at(cx), g) != 0.0) continue;
    const double d = central_difference([&](double x) { return sa_wiou(at(x), g, cfg); }, cx);
    const double di = central_difference([&](double x) { return 1.0 - iou(at(x), g); }, cx);
    min_grad = std::min(min_grad, std::abs(d));
    if (!(std::abs(d) > 1e-6) || di != 0.0) ++bad;
    ++pairs;
  }
  const auto rows = loss_surface(SurfaceLoss::SAWIoU);
  int increases = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) increases += rows[i].loss < rows[i - 1].loss ? 0 : 1;
  return {bad == 0 && increases == 0 && rows.size() > 1,
          std::to_string(pairs) + " disjoint pairs, min |dSA-WIoU/dcx| " + sci(min_grad) + ", " +
              std::to_string(bad) + " violations; surface " + std::to_string(rows.size()) + " points, " +
              std::to_string(increases) + " non-decreasing steps"};
}

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = run_gradcheck_suite("all", 7);
  const double t = seconds_since(t0);
  std::map<std::string, double> worst;
  bool ok = t < 600.0;
  std::string notes;
  for (const GradcheckEntry& e : entries) {
    worst[e.module] = std::max(worst[e.module], e.report.max_rel_error);
    if (e.passed()) continue;
    ok = false;
    const auto fails = e.report.failures(e.tolerance);
    double max_ad = 0.0;
    std::vector<double> gaps;
    for (Index i : fails) {
      max_ad = std::max(max_ad, std::abs(e.report.ad[i]));
      gaps.push_back(std::abs(e.report.fd[i] - e.report.ad[i]));
    }
    std::sort(gaps.begin(), gaps.end());
    notes += " [" + e.name + ": " + std::to_string(fails.size()) + " of " + std::to_string(e.report.coordinates) +
             " coordinates over " + sci(e.tolerance) + ", largest |grad| among them " + sci(max_ad) +
             ", median |fd-ad| " + sci(gaps.empty() ? 0.0 : gaps[gaps.size() / 2]) + "]";
  }
  std::string detail;
  for (const auto& name : gradcheck_modules()) detail += name + " " + sci(worst[name]) + "; ";
  return {ok, detail + fixed(t, 1) + " s" + notes};
}

PyramidSet random_levels(Index c, Index h, Rng& rng) {
  return {{randn({c, h, h}, 1.0, rng, false), randn({c, (h + 1) / 2, (h + 1) / 2}, 1.0, rng, false),
           randn({c, (h + 3) / 4, (h + 3) / 4}, 1.0, rng, false)}};
}

Verdict scm_identity() {
  Rng rng(8);
  const PyramidSet levels = random_levels(12, 8, rng);
  double identity_gap = 0.0;
  for (int level = 3; level <= 5; ++level) {
    SCMBlock b = SCMBlock::init(12, 4, level, 4, rng);
    b.alpha.mutable_value()[0] = 0.0;
    const Shape& s = levels.level(level).shape();
    const Tensor branch = randn({4, s[1], s[2]}, 1.0, rng, false);
    identity_gap = std::max(identity_gap, (b(branch, levels, level).value() - branch.value()).cwiseAbs().maxCoeff());
  }
  DFMambaEncoder enc = DFMambaEncoder::init({12, MSDAConfig{}, 4}, rng);
  const std::vector<std::pair<int, int>> adjacent{{3, 4}, {4, 3}, {4, 5}, {5, 4}};
  double active = 1e300;
  for (const auto& [target, source] : adjacent) {
    const SensitivityProbe p = cross_scale_sensitivity(enc, levels, target, source, 3);
    active = std::min({active, p.gradient, p.finite_difference});
  }
  enc.zero_modulator_projection();
  double zeroed = 0.0;
  for (const auto& [target, source] : adjacent) {
    const SensitivityProbe p = cross_scale_sensitivity(enc, levels, target, source, 3);
    zeroed = std::max({zeroed, p.gradient, p.finite_difference});
  }
  return {identity_gap == 0.0 && active >= 1e-8 && zeroed <= 1e-12,
          "alpha=0 max deviation " + sci(identity_gap) + "; adjacent-level sensitivity min " + sci(active) +
              " active, max " + sci(zeroed) + " with W_p zeroed"};
}

Verdict smoke_training() {
  setenv("MDSF_THREADS", "1", 1);
  const SmokeConfig cfg;
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = smoke_train(cfg);
  const double t = seconds_since(t0);
  const auto b = smoke_train(cfg);
  bool same = a.size() == b.size();
  bool finite = true;
  for (std::size_t i = 0; i < a.size() && same; ++i) same = a[i].to_text() == b[i].to_text();
  for (const LossReport& r : a) finite = finite && std::isfinite(r.total);
  const double first = window_mean(a, 0, 8), last = window_mean(a, a.size() - 8, 8);
  return {same && finite && a.size() == 300 && last <= 0.5 * first && t < 600.0,
          "mean total over the first 8 steps " + fixed(first, 4) + ", last 8 steps " + fixed(last, 4) +
              " (ratio " + fixed(last / first, 3) + "); step 0 " + fixed(a.front().total, 4) + ", step " +
              std::to_string(a.size() - 1) + " " + fixed(a.back().total, 4) + "; deterministic " +
              (same ? "yes" : "no") + "; " + fixed(t, 1) + " s per run"};
}

Verdict csc_invariance() {
  Rng rng(10);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  double gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor e3 = randn({5, 8}, 1.0, rng, false), e4 = randn({5, 8}, 1.0, rng, false),
                 e5 = randn({5, 8}, 1.0, rng, false);
    const double base = csc_loss(e3, e4, e5).item();
    const double scaled = csc_loss(e3 * scale(rng), e4 * scale(rng), e5 * scale(rng)).item();
    gap = std::max(gap, std::abs(base - scaled));
  }
  return {gap <= 1e-12, "max |difference| over 50 rescalings " + sci(gap)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> expect_fail;
  std::vector<int> only;
  app.add_option("--expect-fail", expect_fail, "criteria whose FAIL is known and documented")->check(CLI::Range(1, 10));
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Verdict()>> criteria{scan_oracle,  linear_cost,    receptive_field, msda_oracle,
                                                       closed_forms, zero_iou_gradient, gradient_suite, scm_identity,
                                                       smoke_training, csc_invariance};
  const std::set<int> expected(expect_fail.begin(), expect_fail.end());
  bool as_expected = true;
  for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) {
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[static_cast<std::size_t>(n - 1)]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL") << ": " << v.detail << std::endl;
    if (v.pass == (expected.count(n) > 0)) as_expected = false;
  }
  return as_expected ? 0 : 1;
}
