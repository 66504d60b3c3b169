// SPDX-License-Identifier: Apache-2.0
#pragma once

// Voxelization of hybrid points and the triple-attention voxel feature
// encoder (point-wise, channel-wise and voxel-wise attention inside each
// voxel, two stacked blocks, then a max over the voxel's points).

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "radfuse/densify.hpp"
#include "radfuse/ops.hpp"
#include "radfuse/parallel.hpp"
#include "radfuse/params.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {

struct GridSpec {
  Vec3 lo{0.0, -25.6, -3.0};
  Vec3 hi{51.2, 25.6, 2.0};
  Vec3 voxel{0.05, 0.05, 0.125};

  std::array<int, 3> cells() const {
    std::array<int, 3> n{};
    for (std::size_t a = 0; a < 3; ++a) {
      const double extent = (hi[a] - lo[a]) / voxel[a];
      n[a] = static_cast<int>(std::lround(extent));
    }
    return n;
  }

  void validate() const {
    for (std::size_t a = 0; a < 3; ++a) {
      if (!(hi[a] > lo[a]) || !(voxel[a] > 0)) throw std::invalid_argument("grid: empty range or voxel size");
      const double extent = (hi[a] - lo[a]) / voxel[a];
      if (std::abs(extent - std::round(extent)) > 1e-6 * std::max(1.0, extent) || std::round(extent) < 1) {
        throw std::invalid_argument("grid: range is not a whole number of voxels along axis " + std::to_string(a));
      }
    }
  }

  bool contains(const Vec3& p) const {
    for (std::size_t a = 0; a < 3; ++a)
      if (!(p[a] >= lo[a] && p[a] < hi[a])) return false;
    return true;
  }

  /// Geometric center of the voxel with integer index (ix, iy, iz).
  Vec3 center(int ix, int iy, int iz) const {
    return {lo[0] + (ix + 0.5) * voxel[0], lo[1] + (iy + 0.5) * voxel[1], lo[2] + (iz + 0.5) * voxel[2]};
  }
};

struct VoxelCoord {
  int x = 0, y = 0, z = 0;

  /// Emission order: z, then y, then x.
  friend bool operator<(const VoxelCoord& a, const VoxelCoord& b) {
    if (a.z != b.z) return a.z < b.z;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  }
  friend bool operator==(const VoxelCoord& a, const VoxelCoord& b) = default;
};

/// Non-empty voxels: points is [N_V, N_P, C_in], zero rows past counts[k].
struct VoxelSet {
  Tensor points;
  std::vector<VoxelCoord> coords;
  std::vector<int> counts;
  std::size_t max_points = 0;
  std::size_t channels = 0;

  std::size_t size() const { return coords.size(); }
};

inline VoxelCoord voxel_index(const Vec3& p, const GridSpec& grid) {
  const auto n = grid.cells();
  std::array<int, 3> idx{};
  for (std::size_t a = 0; a < 3; ++a) {
    idx[a] = std::clamp(static_cast<int>(std::floor((p[a] - grid.lo[a]) / grid.voxel[a])), 0, n[a] - 1);
  }
  return {idx[0], idx[1], idx[2]};
}

/// Drops out-of-range points, keeps the first max_points per voxel in input
/// order and emits voxels sorted by (z, y, x).
inline VoxelSet voxelize(const std::vector<HybridPoint>& points, const GridSpec& grid, std::size_t max_points) {
  if (max_points == 0) throw std::invalid_argument("voxelize: max_points must be >= 1");
  grid.validate();
  const std::size_t channels = points.empty() ? 0 : points.front().feature_width();
  std::map<VoxelCoord, std::vector<std::size_t>> bins;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].feature_width() != channels) {
      throw ShapeError("voxelize: point " + std::to_string(i) + " has feature width " +
                       std::to_string(points[i].feature_width()) + ", expected " + std::to_string(channels));
    }
    if (!grid.contains(points[i].xyz)) continue;
    auto& bin = bins[voxel_index(points[i].xyz, grid)];
    if (bin.size() < max_points) bin.push_back(i);
  }
  VoxelSet set;
  set.max_points = max_points;
  set.channels = channels;
  set.points = Tensor({bins.size(), max_points, channels});
  std::size_t k = 0;
  std::vector<float> row;
  for (const auto& [coord, members] : bins) {
    set.coords.push_back(coord);
    set.counts.push_back(static_cast<int>(members.size()));
    for (std::size_t j = 0; j < members.size(); ++j) {
      row.clear();
      points[members[j]].append_features(row);
      std::copy(row.begin(), row.end(), set.points.values().begin() +
                                            static_cast<std::ptrdiff_t>((k * max_points + j) * channels));
    }
    ++k;
  }
  return set;
}

/// Mean of the voxel's actual point coordinates.
inline Vec3 centroid(const VoxelSet& set, std::size_t k) {
  Vec3 c{0, 0, 0};
  const int n = set.counts.at(k);
  for (int j = 0; j < n; ++j) {
    const std::size_t base = (k * set.max_points + static_cast<std::size_t>(j)) * set.channels;
    for (std::size_t a = 0; a < 3; ++a) c[a] += set.points[base + a];
  }
  for (double& v : c) v /= n;
  return c;
}

/// Appends (p - voxel center, p - centroid) to every actual point row. Pad
/// rows are emitted as zeros whatever the input holds there.
template <typename T = float>
BasicTensor<T> augment(const VoxelSet& set, std::size_t k, const GridSpec& grid) {
  const std::size_t np = set.max_points, c = set.channels;
  BasicTensor<T> out({np, c + 6});
  const Vec3 cen = centroid(set, k);
  const VoxelCoord vc = set.coords[k];
  const Vec3 geo = grid.center(vc.x, vc.y, vc.z);
  for (int j = 0; j < set.counts[k]; ++j) {
    const std::size_t src = (k * np + static_cast<std::size_t>(j)) * c;
    T* dst = out.values().data() + static_cast<std::size_t>(j) * (c + 6);
    for (std::size_t i = 0; i < c; ++i) dst[i] = set.points[src + i];
    for (std::size_t a = 0; a < 3; ++a) {
      const double p = set.points[src + a];
      dst[c + a] = static_cast<T>(p - geo[a]);
      dst[c + 3 + a] = static_cast<T>(p - cen[a]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Triple-attention block

inline void declare_ta_block(ParamStore& store, const std::string& path, std::size_t max_points,
                             std::size_t channels) {
  store.declare_linear(path + ".pw.fc1", max_points, max_points);
  store.declare_linear(path + ".pw.fc2", max_points, max_points);
  store.declare_linear(path + ".cw.fc1", channels, channels);
  store.declare_linear(path + ".cw.fc2", channels, channels);
  store.declare_linear(path + ".voxel.points", max_points, 1);
  store.declare_linear(path + ".voxel.channels", channels + 3, 1);
}

template <typename T>
struct TaTrace {
  BasicTensor<T> attention;  // M, [N_P, C]
  T voxel_weight{};          // q
};

/// One triple-attention block on a single voxel's [N_P, C] rows. Only the
/// first `count` rows are real; pad rows are treated as zero on input and
/// written as zero on output.
template <typename T>
BasicTensor<T> ta_block(const BasicTensor<T>& rows, std::size_t count, const Vec3& centroid_xyz,
                        const ParamStore& store, const std::string& path, bool gate_sigmoid = true,
                        TaTrace<T>* trace = nullptr) {
  if (rows.rank() != 2) throw ShapeError("ta_block: expected [N_P, C] rows, got " + format_dims(rows.dims()));
  const std::size_t np = rows.dim(0), c = rows.dim(1);
  const LinearParams& cw1 = store.linear(path + ".cw.fc1");
  if (cw1.fan_in() != c) {
    throw ShapeError("ta_block: " + path + " declared for " + std::to_string(cw1.fan_in()) +
                     " channels, input has " + std::to_string(c));
  }
  if (count < 1 || count > np) throw ShapeError("ta_block: point count out of range");

  // Point-wise pooled feature: max over channels, one value per point.
  std::vector<T> pw(np, T(0));
  for (std::size_t p = 0; p < count; ++p) {
    T m = rows[p * c];
    for (std::size_t i = 1; i < c; ++i) m = std::max(m, rows[p * c + i]);
    pw[p] = m;
  }
  // Channel-wise pooled feature: max over the real points.
  std::vector<T> cw(c);
  for (std::size_t i = 0; i < c; ++i) {
    T m = rows[i];
    for (std::size_t p = 1; p < count; ++p) m = std::max(m, rows[p * c + i]);
    cw[i] = m;
  }

  auto two_layer = [&](std::span<const T> in, const std::string& prefix) {
    const LinearParams& f1 = store.linear(prefix + ".fc1");
    const LinearParams& f2 = store.linear(prefix + ".fc2");
    std::vector<T> hidden(f1.fan_out());
    linear_into<T>(in, f1, hidden);
    for (T& h : hidden) h = relu(h);
    std::vector<T> out(f2.fan_out());
    linear_into<T>(hidden, f2, out);
    return out;
  };
  const std::vector<T> w_pw = two_layer(pw, path + ".pw");
  const std::vector<T> w_cw = two_layer(cw, path + ".cw");

  BasicTensor<T> weighted({np, c});
  BasicTensor<T> attention({np, c});
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t i = 0; i < c; ++i) {
      const T m = sigmoid(w_pw[p] * w_cw[i]);
      attention[p * c + i] = m;
      if (p < count) weighted[p * c + i] = m * rows[p * c + i];
    }
  }

  // Voxel weight: point axis first (N_P -> 1), then channels (C + 3 -> 1).
  const LinearParams& vp = store.linear(path + ".voxel.points");
  const LinearParams& vc = store.linear(path + ".voxel.channels");
  std::vector<T> reduced(c + 3);
  for (std::size_t i = 0; i < c + 3; ++i) {
    T acc = T(vp.bias[0]);
    for (std::size_t p = 0; p < count; ++p) {
      const T val = i < c ? weighted[p * c + i] : T(centroid_xyz[i - c]);
      acc += T(vp.weight[p]) * val;
    }
    reduced[i] = acc;
  }
  std::vector<T> q_raw(1);
  linear_into<T>(reduced, vc, q_raw);
  const T q = gate_sigmoid ? sigmoid(q_raw[0]) : q_raw[0];

  for (std::size_t p = 0; p < count; ++p)
    for (std::size_t i = 0; i < c; ++i) weighted[p * c + i] *= q;
  if (trace) {
    trace->attention = std::move(attention);
    trace->voxel_weight = q;
  }
  return weighted;
}

struct TavfeConfig {
  std::size_t max_points = 10;
  std::size_t hidden = 32;
  std::size_t out = 32;
  bool gate_sigmoid = true;
};

/// in_channels is the raw hybrid feature width (before the 6 offsets).
inline void declare_tavfe(ParamStore& store, std::size_t in_channels, const TavfeConfig& cfg,
                          const std::string& path = "vfe") {
  const std::size_t aug = in_channels + 6;
  declare_ta_block(store, path + ".ta1", cfg.max_points, aug);
  store.declare_linear(path + ".lin1", aug, cfg.hidden);
  declare_ta_block(store, path + ".ta2", cfg.max_points, cfg.hidden);
  store.declare_linear(path + ".lin2", cfg.hidden, cfg.out);
}

/// Real-row linear map; pad rows stay zero.
template <typename T>
BasicTensor<T> rowwise_linear(const BasicTensor<T>& rows, std::size_t count, const LinearParams& p) {
  const std::size_t np = rows.dim(0);
  BasicTensor<T> out({np, p.fan_out()});
  for (std::size_t r = 0; r < count; ++r) linear_into<T>(rows.row(r), p, out.row(r));
  return out;
}

/// ta1 -> linear -> ta2 -> linear -> max over real points, for one voxel's
/// augmented rows.
template <typename T>
std::vector<T> encode_voxel(const BasicTensor<T>& augmented, std::size_t count, const Vec3& centroid_xyz,
                            const ParamStore& store, const TavfeConfig& cfg, const std::string& path = "vfe") {
  BasicTensor<T> h = ta_block(augmented, count, centroid_xyz, store, path + ".ta1", cfg.gate_sigmoid);
  h = rowwise_linear(h, count, store.linear(path + ".lin1"));
  h = ta_block(h, count, centroid_xyz, store, path + ".ta2", cfg.gate_sigmoid);
  h = rowwise_linear(h, count, store.linear(path + ".lin2"));
  const std::size_t c = h.dim(1);
  std::vector<T> pooled(c);
  for (std::size_t i = 0; i < c; ++i) {
    T m = h[i];
    for (std::size_t p = 1; p < count; ++p) m = std::max(m, h[p * c + i]);
    pooled[i] = m;
  }
  return pooled;
}

/// Encoded voxels: one feature row per non-empty voxel, aligned with coords.
struct VoxelFeatures {
  Tensor features;  // [N_V, C_out]
  std::vector<VoxelCoord> coords;
  std::vector<Vec3> centroids;
  std::vector<int> counts;
};

inline VoxelFeatures tavfe(const VoxelSet& set, const GridSpec& grid, const ParamStore& store,
                           const TavfeConfig& cfg, unsigned workers = 1, const std::string& path = "vfe") {
  VoxelFeatures out;
  out.coords = set.coords;
  out.counts = set.counts;
  out.features = Tensor({set.size(), cfg.out});
  out.centroids.resize(set.size());
  if (set.size() > 0 && set.max_points != cfg.max_points) {
    throw ShapeError("tavfe: voxel set holds " + std::to_string(set.max_points) + " points per voxel, encoder expects " +
                     std::to_string(cfg.max_points));
  }
  parallel_for(set.size(), workers, [&](std::size_t k) {
    out.centroids[k] = centroid(set, k);
    // accumulate in double, store float
    const TensorD aug = augment<double>(set, k, grid);
    const std::vector<double> row =
        encode_voxel<double>(aug, static_cast<std::size_t>(set.counts[k]), out.centroids[k], store, cfg, path);
    std::transform(row.begin(), row.end(), out.features.row(k).begin(),
                   [](double x) { return static_cast<float>(x); });
  });
  return out;
}

}  // namespace radfuse
