// SPDX-License-Identifier: Apache-2.0
#pragma once

// Query-guided multi-scale deformable attention into the image pyramid.
// Shared by the scene-level (voxel queries, centroid references) and
// proposal-level (grid-cell queries, cell-center references) fusion blocks.
//
// For each query q with reference point r projected to pixel c:
//   offsets  dp[m,j,l] = W_offset q          (pixels, full resolution)
//   logits    a[m,j,l] = W_attn q,  softmax over (j,l) for each head m
//   sample    f[m,j,l] = bilinear(F_j, (c + dp[m,j,l]) / stride_j)
//   image   F^ = sum_m W_m sum_{j,l} a~[m,j,l] (W'_m f[m,j,l])
//   output     = FFN([q, F^])
// Queries whose reference is behind the camera get F^ = 0.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "radfuse/geometry.hpp"
#include "radfuse/ops.hpp"
#include "radfuse/parallel.hpp"
#include "radfuse/params.hpp"
#include "radfuse/pyramid.hpp"

namespace radfuse {

struct DeformableConfig {
  std::size_t heads = 4;
  std::size_t points = 4;
  std::size_t levels = 5;
  std::size_t query_dim = 32;
  std::size_t value_dim = 32;  // pyramid channels
  std::size_t head_dim = 8;
  std::size_t ffn_hidden = 64;
  std::size_t out_dim = 32;

  std::size_t slots() const { return heads * levels * points; }
  std::size_t slot(std::size_t m, std::size_t j, std::size_t l) const { return (m * levels + j) * points + l; }
};

inline void declare_deformable(ParamStore& store, const std::string& path, const DeformableConfig& cfg) {
  store.declare_linear(path + ".offset", cfg.query_dim, cfg.slots() * 2);
  store.declare_linear(path + ".attn", cfg.query_dim, cfg.slots());
  for (std::size_t m = 0; m < cfg.heads; ++m) {
    store.declare_linear(path + ".value.m" + std::to_string(m), cfg.value_dim, cfg.head_dim);
    store.declare_linear(path + ".output.m" + std::to_string(m), cfg.head_dim, cfg.query_dim);
  }
  store.declare_ffn(path + ".ffn", 2 * cfg.query_dim, cfg.ffn_hidden, cfg.out_dim);
}

template <typename T>
struct DeformableTrace {
  std::vector<T> weights;         // [N, slots], normalized per head
  BasicTensor<T> image_features;  // F^, [N, query_dim]
  std::vector<std::uint8_t> dropped;  // reference behind the camera
  std::vector<PixelPoint> references;
};

template <typename T>
BasicTensor<T> deformable_fuse(const BasicTensor<T>& queries, std::span<const Vec3> references,
                               const FeaturePyramid& pyr, const Calibration& cal, const ParamStore& store,
                               const std::string& path, const DeformableConfig& cfg, unsigned workers = 1,
                               DeformableTrace<T>* trace = nullptr) {
  if (queries.rank() != 2 || queries.dim(1) != cfg.query_dim) {
    throw ShapeError(path + ": queries must be [N, " + std::to_string(cfg.query_dim) + "], got " +
                     format_dims(queries.dims()));
  }
  const std::size_t n = queries.dim(0);
  if (references.size() != n) throw ShapeError(path + ": one reference point per query required");
  if (pyr.size() != cfg.levels || pyr.channels() != cfg.value_dim) {
    throw ShapeError(path + ": pyramid has " + std::to_string(pyr.size()) + " levels x " +
                     std::to_string(pyr.channels()) + " channels, block expects " + std::to_string(cfg.levels) +
                     " x " + std::to_string(cfg.value_dim));
  }
  const LinearParams& w_offset = store.linear(path + ".offset");
  const LinearParams& w_attn = store.linear(path + ".attn");
  std::vector<const LinearParams*> w_value, w_output;
  for (std::size_t m = 0; m < cfg.heads; ++m) {
    w_value.push_back(&store.linear(path + ".value.m" + std::to_string(m)));
    w_output.push_back(&store.linear(path + ".output.m" + std::to_string(m)));
  }
  const FfnParams fuse = store.ffn(path + ".ffn");

  const std::size_t slots = cfg.slots(), cq = cfg.query_dim;
  BasicTensor<T> out({n, cfg.out_dim});
  if (trace) {
    trace->weights.assign(n * slots, T(0));
    trace->image_features = BasicTensor<T>({n, cq});
    trace->dropped.assign(n, 0);
    trace->references.assign(n, PixelPoint{});
  }

  parallel_for(n, workers, [&](std::size_t k) {
    const std::span<const T> q = queries.row(k);
    std::vector<T> offsets(slots * 2), weights(slots);
    linear_into<T>(q, w_offset, offsets);
    linear_into<T>(q, w_attn, weights);
    for (std::size_t m = 0; m < cfg.heads; ++m) {
      softmax_inplace<T>(std::span<T>(weights).subspan(m * cfg.levels * cfg.points, cfg.levels * cfg.points));
    }

    std::vector<T> image(cq, T(0));
    const auto ref = project(references[k], cal);
    if (ref) {
      std::vector<T> sampled(cfg.value_dim), head(cfg.head_dim), projected(cq);
      for (std::size_t m = 0; m < cfg.heads; ++m) {
        std::fill(sampled.begin(), sampled.end(), T(0));
        for (std::size_t j = 0; j < cfg.levels; ++j) {
          const auto& lv = pyr.levels[j];
          for (std::size_t l = 0; l < cfg.points; ++l) {
            const std::size_t s = cfg.slot(m, j, l);
            const T u = (T(ref->u) + offsets[2 * s]) / T(lv.stride);
            const T v = (T(ref->v) + offsets[2 * s + 1]) / T(lv.stride);
            bilinear_accumulate<T>(lv.map, u, v, weights[s], sampled);
          }
        }
        // W'_m is affine; the weights sum to one, so projecting the weighted
        // sum equals summing the projected samples.
        linear_into<T>(sampled, *w_value[m], head);
        linear_into<T>(head, *w_output[m], projected);
        for (std::size_t i = 0; i < cq; ++i) image[i] += projected[i];
      }
    }

    std::vector<T> joined(q.begin(), q.end());
    joined.insert(joined.end(), image.begin(), image.end());
    ffn_into<T>(joined, fuse, out.row(k));

    if (trace) {
      std::copy(weights.begin(), weights.end(), trace->weights.begin() + static_cast<std::ptrdiff_t>(k * slots));
      std::copy(image.begin(), image.end(), trace->image_features.row(k).begin());
      trace->dropped[k] = ref ? 0 : 1;
      if (ref) trace->references[k] = *ref;
    }
  });
  return out;
}

}  // namespace radfuse
