#pragma once

#include <iosfwd>

namespace mdsf {

/// Command-line entry point. Returns 0 on success, 1 when a check or run
/// fails, 2 on bad usage (message and usage text go to `err`).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mdsf
