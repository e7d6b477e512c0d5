#include "mdsf/cli.hpp"

#include "mdsf/bench.hpp"
#include "mdsf/errors.hpp"
#include "mdsf/oracles.hpp"
#include "mdsf/suites.hpp"
#include "mdsf/synthetic.hpp"
#include "mdsf/train.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace mdsf {

namespace {

constexpr double kOracleTolerance = 1e-10;

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f << text;
}

struct Options {
  std::uint64_t seed = 7;
  std::string output;

  // scan-bench
  std::vector<Index> lengths{8192, 16384, 32768};
  int reps = 9;
  bool check = false;

  // gradcheck
  std::string module = "all";

  // oracle
  std::string which = "scan";
  int trials = 20;

  // loss-surface
  std::string loss = "sawiou";
  std::string sweep = "cx";
  int sweep_steps = 60;
  double range = 0.3;

  // smoke
  int steps = 300;
  double lr = SmokeConfig{}.lr;
  std::vector<std::string> disable;

  // scene
  Index size = 64;
  int targets = 2;
  double contrast = SceneConfig{}.contrast;
  double speckle = SceneConfig{}.speckle;
};

int scan_bench(const Options& o, std::ostream& out, std::ostream& err) {
  const auto rows = run_scan_bench(o.lengths, o.reps, o.seed);
  emit(scan_bench_csv(rows), o.output, out);
  if (!o.check) return 0;
  bool ok = true;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double rs = rows[i].scan_ns / rows[i - 1].scan_ns;
    const double ra = rows[i].attn_ns / rows[i - 1].attn_ns;
    const double growth = static_cast<double>(rows[i].length) / static_cast<double>(rows[i - 1].length);
    err << std::setprecision(4) << "L " << rows[i - 1].length << " -> " << rows[i].length << ": scan x" << rs
        << ", attention x" << ra << '\n';
    if (growth == 2.0 && (rs < 1.6 || rs > 2.6 || ra < 3.2)) ok = false;
  }
  return ok ? 0 : 1;
}

int gradcheck_cmd(const Options& o, std::ostream& out) {
  const auto entries = run_gradcheck_suite(o.module, o.seed);
  std::map<std::string, double> worst;
  bool ok = true;
  out << std::setprecision(3) << std::scientific;
  for (const auto& e : entries) {
    out << e.module << '/' << e.name << " max_rel_err=" << e.report.max_rel_error << " tol=" << e.tolerance
        << " coords=" << e.report.coordinates << " worst(fd=" << e.report.worst_fd << ", ad=" << e.report.worst_ad
        << ")" << (e.passed() ? " ok" : " FAIL") << '\n';
    worst[e.module] = std::max(worst[e.module], e.report.finite ? e.report.max_rel_error : HUGE_VAL);
    ok = ok && e.passed();
  }
  for (const auto& [m, v] : worst) out << "module " << m << " max_rel_err=" << v << '\n';
  return ok ? 0 : 1;
}

int oracle_cmd(const Options& o, std::ostream& out) {
  const oracle::OracleResult r =
      o.which == "scan" ? oracle::check_scan(o.trials, o.seed) : oracle::check_msda(o.trials, o.seed);
  out << std::setprecision(3) << std::scientific << o.which << " trials=" << r.trials
      << " max_abs_err=" << r.max_abs_error << '\n';
  return r.max_abs_error <= kOracleTolerance ? 0 : 1;
}

int surface_cmd(const Options& o, std::ostream& out) {
  emit(surface_csv(loss_surface(parse_surface_loss(o.loss), o.sweep_steps, o.range)), o.output, out);
  return 0;
}

int smoke_cmd(const Options& o, std::ostream& out, std::ostream& err) {
  SmokeConfig cfg;
  cfg.steps = o.steps;
  cfg.seed = o.seed;
  cfg.lr = o.lr;
  for (const auto& d : o.disable) disable_component(cfg, d);
  std::vector<LossReport> curve;
  try {
    curve = smoke_train(cfg);
  } catch (const NonFiniteError& e) {
    err << "smoke: " << e.what() << '\n';
    return 1;
  }
  std::ostringstream os;
  os << "step,focal,sa_wiou,l1,csc,total\n" << std::setprecision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto& r = curve[i];
    os << i << ',' << r.focal << ',' << r.sa_wiou << ',' << r.l1 << ',' << r.csc << ',' << r.total << '\n';
  }
  emit(os.str(), o.output, out);
  return 0;
}

int scene_cmd(const Options& o, std::ostream& out) {
  SceneConfig cfg;
  cfg.height = cfg.width = o.size;
  cfg.targets = o.targets;
  cfg.contrast = o.contrast;
  cfg.speckle = o.speckle;
  cfg.seed = o.seed;
  const SyntheticScene scene = generate_scene(cfg);
  if (o.output.empty()) {
    out << annotation_text(scene);
  } else {
    export_scene(scene, o.output);
    out << o.output << ".tnsr " << o.output << ".txt\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"mdsf_bench: benchmarks, oracle checks, loss surfaces and smoke training"};
  app.name("mdsf_bench");
  app.require_subcommand(1, 1);
  Options o;

  auto* bench = app.add_subcommand("scan-bench", "time selective_scan against dense attention; CSV length,scan_ns,attn_ns");
  bench->add_option("--lengths", o.lengths, "sequence lengths")->delimiter(',')->check(CLI::PositiveNumber);
  bench->add_option("--reps", o.reps, "repetitions per length (median reported)")->check(CLI::PositiveNumber);
  bench->add_flag("--check", o.check, "exit 1 unless doubling ratios are linear for the scan and >= 3.2 for attention");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  std::vector<std::string> modules{"all"};
  for (const auto& m : gradcheck_modules()) modules.push_back(m);
  grad->add_option("--module", o.module, "module to check")->check(CLI::IsMember(modules));

  auto* orc = app.add_subcommand("oracle", "compare against independent reference implementations");
  orc->add_option("--which", o.which, "scan or msda")->check(CLI::IsMember({"scan", "msda"}));
  orc->add_option("--trials", o.trials, "random instances")->check(CLI::PositiveNumber);

  auto* surf = app.add_subcommand("loss-surface", "loss and central-difference gradient along a centre sweep; CSV");
  surf->add_option("--loss", o.loss, "sawiou, nwd or ciou")->check(CLI::IsMember({"sawiou", "nwd", "ciou"}));
  surf->add_option("--sweep", o.sweep, "swept coordinate")->check(CLI::IsMember({"cx"}));
  surf->add_option("--steps", o.sweep_steps, "sweep intervals")->check(CLI::PositiveNumber);
  surf->add_option("--range", o.range, "largest centre offset")->check(CLI::PositiveNumber);

  auto* smoke = app.add_subcommand("smoke", "gradient-descent smoke run on synthetic scenes; per-step loss CSV");
  smoke->add_option("--steps", o.steps, "training steps")->check(CLI::PositiveNumber);
  smoke->add_option("--lr", o.lr, "learning rate")->check(CLI::NonNegativeNumber);
  smoke->add_option("--disable", o.disable, "ablate a component (repeatable)")
      ->check(CLI::IsMember({"hybrid", "alpha", "csc", "omega"}));

  auto* scene = app.add_subcommand("scene", "generate one synthetic scene; writes <output>.tnsr and <output>.txt");
  scene->add_option("--size", o.size, "image side in pixels")->check(CLI::PositiveNumber);
  scene->add_option("--targets", o.targets, "target count")->check(CLI::NonNegativeNumber);
  scene->add_option("--contrast", o.contrast, "target amplitude relative to the background");
  scene->add_option("--speckle", o.speckle, "speckle strength in [0,1]");

  for (auto* sub : {bench, grad, orc, surf, smoke, scene}) {
    sub->add_option("--seed", o.seed, "random seed");
    if (sub != grad && sub != orc) sub->add_option("--output,-o", o.output, "output path (default stdout)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (bench->parsed()) return scan_bench(o, out, err);
    if (grad->parsed()) return gradcheck_cmd(o, out);
    if (orc->parsed()) return oracle_cmd(o, out);
    if (surf->parsed()) return surface_cmd(o, out);
    if (smoke->parsed()) return smoke_cmd(o, out, err);
    if (scene->parsed()) return scene_cmd(o, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace mdsf
