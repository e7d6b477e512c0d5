#pragma once

#include "mdsf/tensor.hpp"

#include <array>

namespace mdsf {

/// Three feature maps at strides {8,16,32} (levels 3, 4, 5), each [C,H,W].
struct PyramidSet {
  static constexpr int kFirstLevel = 3;
  static constexpr int kLastLevel = 5;

  std::array<Tensor, 3> maps;

  /// `index` is the pyramid level, 3..5. Throws ConfigError otherwise.
  const Tensor& level(int index) const;
  Tensor& level(int index);

  Index channels() const { return maps[0].shape()[0]; }

  /// Throws DimensionError unless all levels share a channel count and each
  /// level is ceil(H/2) x ceil(W/2) of the previous one.
  void validate() const;
};

bool is_valid_level(int index);

}  // namespace mdsf
