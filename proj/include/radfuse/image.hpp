// SPDX-License-Identifier: Apache-2.0
#pragma once

// Netpbm readers/writers: binary RGB PPM (P6) for images, PGM (P2/P5) for
// instance-id label maps.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "radfuse/rtf.hpp"  // FormatError

namespace radfuse {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

  std::uint8_t* at(int col, int row) {
    return rgb.data() + (static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)) * 3;
  }
  const std::uint8_t* at(int col, int row) const {
    return rgb.data() + (static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)) * 3;
  }
  void set(int col, int row, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (col < 0 || row < 0 || col >= width || row >= height) return;
    std::uint8_t* p = at(col, row);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

namespace detail {

/// Next whitespace-delimited header token, skipping '#' comments.
inline std::string pnm_token(std::istream& is) {
  std::string tok;
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    c = is.get();
  }
  if (tok.empty()) throw FormatError("pnm: truncated header");
  return tok;
}

inline long pnm_int(std::istream& is) {
  const std::string tok = pnm_token(is);
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size() || v < 0) throw FormatError("pnm: bad header value '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("pnm: bad header value '" + tok + "'");
  }
}

}  // namespace detail

inline void write_ppm(std::ostream& os, const RgbImage& img) {
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!os) throw FormatError("ppm: write failed");
}

inline RgbImage read_ppm(std::istream& is) {
  if (detail::pnm_token(is) != "P6") throw FormatError("ppm: expected binary P6 image");
  const long w = detail::pnm_int(is), h = detail::pnm_int(is), maxval = detail::pnm_int(is);
  if (w <= 0 || h <= 0 || maxval != 255) throw FormatError("ppm: only 8-bit images with positive size are supported");
  RgbImage img(static_cast<int>(w), static_cast<int>(h));
  if (!is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()))) {
    throw FormatError("ppm: truncated pixel data");
  }
  return img;
}

inline void save_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("ppm: cannot write " + path.string());
  write_ppm(os, img);
}

inline RgbImage load_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("ppm: cannot open " + path.string());
  return read_ppm(is);
}

/// Label map as read from a PGM file.
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;
};

/// Reads P2 (ASCII) or P5 (binary, 8-bit or 16-bit big-endian).
inline LabelImage read_pgm(std::istream& is) {
  const std::string magic = detail::pnm_token(is);
  if (magic != "P2" && magic != "P5") throw FormatError("pgm: expected P2 or P5, got '" + magic + "'");
  const long w = detail::pnm_int(is), h = detail::pnm_int(is), maxval = detail::pnm_int(is);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw FormatError("pgm: bad header");
  LabelImage img{static_cast<int>(w), static_cast<int>(h), {}};
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  img.labels.resize(n);
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      long v = 0;
      if (!(is >> v) || v < 0 || v > maxval) throw FormatError("pgm: bad or truncated P2 pixel data");
      img.labels[i] = static_cast<std::int32_t>(v);
    }
  } else {
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * bpp);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw FormatError("pgm: truncated P5 pixel data");
    }
    for (std::size_t i = 0; i < n; ++i) {
      img.labels[i] = bpp == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    }
  }
  return img;
}

/// Writes P5, 16-bit when any label exceeds 255.
inline void write_pgm(std::ostream& os, const LabelImage& img) {
  std::int32_t maxv = 0;
  for (const auto l : img.labels) {
    if (l < 0 || l > 65535) throw FormatError("pgm: label outside [0, 65535]");
    maxv = std::max(maxv, l);
  }
  const bool wide = maxv > 255;
  os << "P5\n" << img.width << ' ' << img.height << '\n' << (wide ? 65535 : 255) << '\n';
  for (const auto l : img.labels) {
    if (wide) os.put(static_cast<char>((l >> 8) & 0xFF));
    os.put(static_cast<char>(l & 0xFF));
  }
  if (!os) throw FormatError("pgm: write failed");
}

}  // namespace radfuse
