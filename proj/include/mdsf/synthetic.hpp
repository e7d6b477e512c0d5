#pragma once

#include "mdsf/losses.hpp"
#include "mdsf/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mdsf {

struct SceneConfig {
  Index height = 64;
  Index width = 64;
  int targets = 2;
  double background = 0.05;  // mean background intensity
  double contrast = 8.0;     // target peak amplitude relative to the background level
  double speckle = 1.0;      // 0: no speckle, 1: fully developed exponential speckle
  double min_extent = 3.0;   // target extent (4 sigma) in pixels
  double max_extent = 12.0;
  Index classes = 2;
  std::uint64_t seed = 0;
};

/// Single-channel sonar-like image with its ground truth.
struct SyntheticScene {
  Tensor image;  // [1, H, W], values in [0, 1]
  std::vector<Box> boxes;
  std::vector<Index> classes;
  std::uint64_t seed = 0;
};

/// Smooth background times multiplicative speckle gain 1 + s (E - 1),
/// E ~ Exp(1), plus non-overlapping Gaussian blobs centred on pixel centres.
/// Boxes span +-2 sigma. Throws ConfigError on bad parameters and
/// GenerationError when the targets cannot be placed.
SyntheticScene generate_scene(const SceneConfig& cfg);

/// One scene per seed (cfg.seed is ignored), generated on up to
/// `threads` workers; 0 means worker_count().
std::vector<SyntheticScene> generate_scenes(const SceneConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                            unsigned threads = 0);

/// MDSF_THREADS when set to a positive integer, else the hardware concurrency.
unsigned worker_count();

/// One "class c_x c_y w h" line per box.
std::string annotation_text(const SyntheticScene& scene);
std::vector<std::pair<Index, Box>> parse_annotations(const std::string& text);

/// Writes <stem>.tnsr (TNSR1 image) and <stem>.txt (annotations).
void export_scene(const SyntheticScene& scene, const std::filesystem::path& stem);

}  // namespace mdsf
