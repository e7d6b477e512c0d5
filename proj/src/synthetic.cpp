#include "mdsf/synthetic.hpp"

#include "mdsf/errors.hpp"
#include "mdsf/layers.hpp"
#include "mdsf/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>
#include <cstdlib>
#include <exception>
#include <mutex>

namespace mdsf {

namespace {

struct Blob {
  double cx, cy;  // pixel coordinates
  double sx, sy;  // sigma in pixels
  double x0, y0, x1, y1;
};

bool overlaps(const Blob& a, const Blob& b) {
  return !(a.x1 + 1.0 <= b.x0 || b.x1 + 1.0 <= a.x0 || a.y1 + 1.0 <= b.y0 || b.y1 + 1.0 <= a.y0);
}

}  // namespace

SyntheticScene generate_scene(const SceneConfig& cfg) {
  if (cfg.height < 1 || cfg.width < 1) throw ConfigError("scene size must be positive");
  if (!(cfg.contrast > 0.0)) throw ConfigError("target contrast must be positive");
  if (!(cfg.background > 0.0) || cfg.background >= 1.0) throw ConfigError("background level must lie in (0, 1)");
  if (cfg.speckle < 0.0 || cfg.speckle > 1.0) throw ConfigError("speckle strength must lie in [0, 1]");
  if (!(cfg.min_extent > 0.0) || cfg.max_extent < cfg.min_extent) throw ConfigError("invalid target extent range");
  if (cfg.targets < 0 || cfg.classes < 1) throw ConfigError("invalid target or class count");

  const Index h = cfg.height, w = cfg.width;
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> extent(cfg.min_extent, cfg.max_extent);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<Index> cls(0, cfg.classes - 1);
  std::exponential_distribution<double> speckle(1.0);

  // Low-frequency background with integer frequencies so its image mean is exactly `background`.
  const double fx = 1.0 + std::floor(unit(rng) * 2.0), fy = 1.0 + std::floor(unit(rng) * 2.0);
  const double px = phase(rng), py = phase(rng);

  SyntheticScene scene;
  scene.seed = cfg.seed;
  std::vector<Blob> blobs;
  for (int t = 0; t < cfg.targets; ++t) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const double ew = extent(rng), eh = extent(rng);
      const double hx = 0.5 * ew, hy = 0.5 * eh;
      const Index lo_x = static_cast<Index>(std::ceil(hx - 0.5)), hi_x = static_cast<Index>(std::floor(w - 0.5 - hx));
      const Index lo_y = static_cast<Index>(std::ceil(hy - 0.5)), hi_y = static_cast<Index>(std::floor(h - 0.5 - hy));
      if (lo_x > hi_x || lo_y > hi_y) continue;
      const Index ix = lo_x + static_cast<Index>(unit(rng) * static_cast<double>(hi_x - lo_x + 1));
      const Index iy = lo_y + static_cast<Index>(unit(rng) * static_cast<double>(hi_y - lo_y + 1));
      const double cx = static_cast<double>(std::min(ix, hi_x)) + 0.5;
      const double cy = static_cast<double>(std::min(iy, hi_y)) + 0.5;
      const Blob b{cx, cy, ew / 4.0, eh / 4.0, cx - hx, cy - hy, cx + hx, cy + hy};
      if (std::any_of(blobs.begin(), blobs.end(), [&](const Blob& o) { return overlaps(b, o); })) continue;
      blobs.push_back(b);
      scene.boxes.push_back({cx / static_cast<double>(w), cy / static_cast<double>(h), ew / static_cast<double>(w),
                             eh / static_cast<double>(h)});
      scene.classes.push_back(cls(rng));
      placed = true;
    }
    if (!placed) {
      throw GenerationError("could not place target " + std::to_string(t + 1) + " of " + std::to_string(cfg.targets) +
                            " in a " + std::to_string(h) + "x" + std::to_string(w) + " scene");
    }
  }

  const double amplitude = cfg.contrast * cfg.background;
  Eigen::VectorXd img(h * w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double bg = cfg.background *
                        (1.0 + 0.3 * std::cos(2.0 * std::numbers::pi * fx * static_cast<double>(x) / static_cast<double>(w) + px) *
                                   std::cos(2.0 * std::numbers::pi * fy * static_cast<double>(y) / static_cast<double>(h) + py));
      const double gain = 1.0 + cfg.speckle * (speckle(rng) - 1.0);
      double v = bg * gain;
      const double pxc = static_cast<double>(x) + 0.5, pyc = static_cast<double>(y) + 0.5;
      for (const Blob& b : blobs) {
        const double dx = (pxc - b.cx) / b.sx, dy = (pyc - b.cy) / b.sy;
        v += amplitude * std::exp(-0.5 * (dx * dx + dy * dy));
      }
      img[y * w + x] = std::clamp(v, 0.0, 1.0);
    }
  }
  scene.image = Tensor({1, h, w}, std::move(img));
  return scene;
}

unsigned worker_count() {
  if (const char* env = std::getenv("MDSF_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<SyntheticScene> generate_scenes(const SceneConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                            unsigned threads) {
  std::vector<SyntheticScene> out(seeds.size());
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(threads == 0 ? worker_count() : threads, std::max<std::size_t>(1, seeds.size())));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&](unsigned id) {
    for (std::size_t i = id; i < seeds.size(); i += workers) {
      try {
        SceneConfig c = cfg;
        c.seed = seeds[i];
        out[i] = generate_scene(c);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned id = 1; id < workers; ++id) pool.emplace_back(run, id);
  run(0);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::string annotation_text(const SyntheticScene& scene) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    const Box& b = scene.boxes[i];
    os << scene.classes[i] << ' ' << b.cx << ' ' << b.cy << ' ' << b.w << ' ' << b.h << '\n';
  }
  return os.str();
}

std::vector<std::pair<Index, Box>> parse_annotations(const std::string& text) {
  std::vector<std::pair<Index, Box>> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Index c;
    Box b;
    if (!(ls >> c >> b.cx >> b.cy >> b.w >> b.h)) throw FormatError("bad annotation line: " + line);
    out.emplace_back(c, b);
  }
  return out;
}

void export_scene(const SyntheticScene& scene, const std::filesystem::path& stem) {
  std::filesystem::path image = stem;
  image += ".tnsr";
  std::filesystem::path notes = stem;
  notes += ".txt";
  save_tnsr(image, scene.image);
  std::ofstream out(notes);
  if (!out) throw FormatError("cannot open " + notes.string() + " for writing");
  out << annotation_text(scene);
}

}  // namespace mdsf
