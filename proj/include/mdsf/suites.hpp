#pragma once

#include "mdsf/fusion.hpp"
#include "mdsf/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mdsf {

inline constexpr double kModuleTolerance = 1e-4;
inline constexpr double kLossTolerance = 1e-5;

struct GradcheckEntry {
  std::string module;
  std::string name;
  GradcheckReport report;
  double tolerance = kModuleTolerance;

  bool passed() const { return report.passed(tolerance); }
};

/// Module names accepted by `run_gradcheck_suite`, in run order.
const std::vector<std::string>& gradcheck_modules();

/// Runs the gradient checks of one module ("all" runs every module). Entries
/// run on up to worker_count() threads; results are in a fixed order.
/// Throws ConfigError for an unknown module.
std::vector<GradcheckEntry> run_gradcheck_suite(const std::string& module, std::uint64_t seed);

struct SensitivityProbe {
  double gradient = 0.0;           // max |d<E_target, R> / d N_source| by reverse mode
  double finite_difference = 0.0;  // |central difference| at that coordinate
};

/// Sensitivity of encoder level `target` to input level `source` along a
/// random output direction R drawn from `seed`.
SensitivityProbe cross_scale_sensitivity(const DFMambaEncoder& encoder, const PyramidSet& levels, int target,
                                         int source, std::uint64_t seed);

}  // namespace mdsf
