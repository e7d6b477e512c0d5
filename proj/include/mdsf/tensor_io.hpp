#pragma once

#include "mdsf/tensor.hpp"

#include <filesystem>
#include <iosfwd>

namespace mdsf {

// TNSR1 layout: "TNSR1", u8 rank, rank x u32 LE dims, row-major f64 LE values.
void write_tnsr(std::ostream& out, const Tensor& t);
Tensor read_tnsr(std::istream& in);

void save_tnsr(const std::filesystem::path& path, const Tensor& t);
Tensor load_tnsr(const std::filesystem::path& path);

}  // namespace mdsf
