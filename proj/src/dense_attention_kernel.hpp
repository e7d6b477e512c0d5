#pragma once

#include <cstddef>

namespace mdsf::detail {

// Row-major q [L, d], k [L, d], v [L, c] -> out [L, c]. Built apart from the
// rest so it can use host SIMD; it never allocates Eigen objects.
void attention_kernel(const double* q, const double* k, const double* v, double* out, std::ptrdiff_t L,
                      std::ptrdiff_t d, std::ptrdiff_t c, std::ptrdiff_t query_block, std::ptrdiff_t key_block);

}  // namespace mdsf::detail
