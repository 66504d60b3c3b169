// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "radfuse/image.hpp"
#include "radfuse/rng.hpp"
#include "radfuse/rtf.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {

struct PyramidLevel {
  Tensor map;     // [H_j, W_j, C]
  double stride;  // image pixels per feature cell
};

/// Multi-scale image features. Sampling level j at image pixel (u, v) reads
/// feature coordinate (u / stride_j, v / stride_j).
struct FeaturePyramid {
  std::vector<PyramidLevel> levels;

  std::size_t size() const { return levels.size(); }
  std::size_t channels() const { return levels.empty() ? 0 : levels.front().map.dim(2); }

  void validate() const {
    if (levels.empty()) throw ShapeError("pyramid: no levels");
    for (std::size_t j = 0; j < levels.size(); ++j) {
      const auto& lv = levels[j];
      if (lv.map.rank() != 3) {
        throw ShapeError("pyramid: level " + std::to_string(j) + " must be [H,W,C], got " + format_dims(lv.map.dims()));
      }
      if (lv.map.dim(0) == 0 || lv.map.dim(1) == 0) throw ShapeError("pyramid: level " + std::to_string(j) + " is empty");
      if (lv.map.dim(2) != channels()) {
        throw ShapeError("pyramid: level " + std::to_string(j) + " has " + std::to_string(lv.map.dim(2)) +
                         " channels, level 0 has " + std::to_string(channels()));
      }
      if (!(lv.stride > 0) || (j > 0 && !(lv.stride > levels[j - 1].stride))) {
        throw ShapeError("pyramid: strides must be positive and strictly increasing");
      }
    }
  }
};

/// Deterministic stand-in for a learned image encoder: level j average-pools
/// the image over stride x stride blocks (stride = base_stride * 2^j) and
/// maps the pooled RGB through a fixed random 3 -> C projection keyed by
/// (seed, level).
inline FeaturePyramid synthesize_pyramid(const RgbImage& img, std::size_t n_levels, std::size_t channels,
                                         std::uint64_t seed, int base_stride = 4) {
  if (img.width <= 0 || img.height <= 0) throw ShapeError("pyramid: empty image");
  FeaturePyramid pyr;
  for (std::size_t j = 0; j < n_levels; ++j) {
    const int s = base_stride << j;
    const std::size_t w = static_cast<std::size_t>((img.width + s - 1) / s);
    const std::size_t h = static_cast<std::size_t>((img.height + s - 1) / s);
    SplitMix64 rng(stream_key(seed, std::uint64_t{0x70797231}, j));
    std::vector<float> proj(channels * 4);
    for (float& p : proj) p = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor map({h, w, channels});
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double acc[3] = {0, 0, 0};
        int n = 0;
        for (int dy = 0; dy < s; ++dy) {
          const int y = static_cast<int>(r) * s + dy;
          if (y >= img.height) break;
          for (int dx = 0; dx < s; ++dx) {
            const int x = static_cast<int>(c) * s + dx;
            if (x >= img.width) break;
            const std::uint8_t* px = img.at(x, y);
            for (int k = 0; k < 3; ++k) acc[k] += px[k];
            ++n;
          }
        }
        for (double& a : acc) a /= 255.0 * n;
        for (std::size_t k = 0; k < channels; ++k) {
          const float* p = proj.data() + k * 4;
          map(r, c, k) = static_cast<float>(p[0] * acc[0] + p[1] * acc[1] + p[2] * acc[2] + 0.1 * p[3]);
        }
      }
    }
    pyr.levels.push_back({std::move(map), static_cast<double>(s)});
  }
  pyr.validate();
  return pyr;
}

inline FeaturePyramid load_pyramid(const std::vector<std::filesystem::path>& files, const std::vector<double>& strides) {
  if (files.size() != strides.size()) throw FormatError("pyramid: need one stride per RTF file");
  FeaturePyramid pyr;
  for (std::size_t j = 0; j < files.size(); ++j) pyr.levels.push_back({load_rtf(files[j]), strides[j]});
  pyr.validate();
  return pyr;
}

}  // namespace radfuse
