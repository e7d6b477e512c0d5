#include "mdsf/pyramid_set.hpp"

#include "mdsf/errors.hpp"

namespace mdsf {

bool is_valid_level(int index) { return index >= PyramidSet::kFirstLevel && index <= PyramidSet::kLastLevel; }

const Tensor& PyramidSet::level(int index) const {
  if (!is_valid_level(index)) throw ConfigError("pyramid level must be 3, 4 or 5, got " + std::to_string(index));
  return maps[static_cast<std::size_t>(index - kFirstLevel)];
}

Tensor& PyramidSet::level(int index) {
  if (!is_valid_level(index)) throw ConfigError("pyramid level must be 3, 4 or 5, got " + std::to_string(index));
  return maps[static_cast<std::size_t>(index - kFirstLevel)];
}

void PyramidSet::validate() const {
  for (const auto& m : maps) {
    if (!m.defined() || m.rank() != 3) throw DimensionError("pyramid levels must be [C,H,W] maps");
  }
  for (std::size_t i = 1; i < maps.size(); ++i) {
    const Shape& a = maps[i - 1].shape();
    const Shape& b = maps[i].shape();
    if (a[0] != b[0]) throw DimensionError("pyramid channel counts differ: " + to_string(a) + " vs " + to_string(b));
    if (b[1] != (a[1] + 1) / 2 || b[2] != (a[2] + 1) / 2) {
      throw DimensionError("pyramid spatial sizes do not halve: " + to_string(a) + " -> " + to_string(b));
    }
  }
}

}  // namespace mdsf
