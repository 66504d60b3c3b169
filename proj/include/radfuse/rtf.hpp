// SPDX-License-Identifier: Apache-2.0
#pragma once

// RTF tensor container:
//   "RTF1" | u8 dtype (0 = f32) | u8 ndim | ndim x u32 LE dims | f32 LE payload

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "radfuse/tensor.hpp"

namespace radfuse {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF),
                              static_cast<char>((v >> 24) & 0xFF)};
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError(std::string("rtf: truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void write_rtf(std::ostream& os, const Tensor& t) {
  if (t.rank() > 255) throw FormatError("rtf: rank exceeds 255");
  os.write("RTF1", 4);
  os.put(0);
  os.put(static_cast<char>(t.rank()));
  for (const std::size_t d : t.dims()) {
    if (d > 0xFFFFFFFFull) throw FormatError("rtf: dimension exceeds u32");
    detail::put_u32(os, static_cast<std::uint32_t>(d));
  }
  for (const float f : t.values()) detail::put_u32(os, std::bit_cast<std::uint32_t>(f));
  if (!os) throw FormatError("rtf: write failed");
}

inline Tensor read_rtf(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || std::string(magic.data(), 4) != "RTF1") {
    throw FormatError("rtf: bad magic (expected RTF1)");
  }
  const int dtype = is.get();
  const int ndim = is.get();
  if (dtype == std::char_traits<char>::eof() || ndim == std::char_traits<char>::eof()) {
    throw FormatError("rtf: truncated header");
  }
  if (dtype != 0) throw FormatError("rtf: unsupported dtype " + std::to_string(dtype));
  std::vector<std::size_t> dims;
  for (int i = 0; i < ndim; ++i) dims.push_back(detail::get_u32(is, "dims"));
  std::vector<float> data(product(dims));
  for (float& f : data) f = std::bit_cast<float>(detail::get_u32(is, "payload"));
  return Tensor(std::move(dims), std::move(data));
}

inline void save_rtf(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("rtf: cannot open " + path.string() + " for writing");
  write_rtf(os, t);
}

inline Tensor load_rtf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("rtf: cannot open " + path.string());
  return read_rtf(is);
}

}  // namespace radfuse
