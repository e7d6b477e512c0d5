#include "mdsf/tensor_io.hpp"

#include "mdsf/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace mdsf {

namespace {

constexpr std::array<char, 5> kMagic{'T', 'N', 'S', 'R', '1'};

template <class T>
void put_le(std::ostream& out, T v) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw FormatError("TNSR1: truncated stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

void write_tnsr(std::ostream& out, const Tensor& t) {
  const Shape& s = t.shape();
  if (s.size() > 255) throw FormatError("TNSR1: rank exceeds 255");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.size()));
  for (Index d : s) {
    if (d > static_cast<Index>(std::numeric_limits<std::uint32_t>::max())) throw FormatError("TNSR1: dimension exceeds u32");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  for (Index i = 0; i < t.numel(); ++i) put_le<double>(out, t.value()[i]);
  if (!out) throw FormatError("TNSR1: write failed");
}

Tensor read_tnsr(std::istream& in) {
  std::array<char, 5> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("TNSR1: bad magic");
  const auto rank = get_le<std::uint8_t>(in);
  Shape shape;
  for (unsigned i = 0; i < rank; ++i) {
    const auto d = get_le<std::uint32_t>(in);
    if (d == 0) throw FormatError("TNSR1: zero dimension");
    shape.push_back(static_cast<Index>(d));
  }
  if (shape.empty()) shape.push_back(1);
  Eigen::VectorXd values(numel(shape));
  for (Index i = 0; i < values.size(); ++i) values[i] = get_le<double>(in);
  return Tensor(std::move(shape), std::move(values));
}

void save_tnsr(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tnsr(out, t);
}

Tensor load_tnsr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tnsr(in);
}

}  // namespace mdsf
