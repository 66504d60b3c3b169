// SPDX-License-Identifier: Apache-2.0
#pragma once

// Scene-level fusion: multi-scale sparse voxel features (a grouping stand-in
// for the sparse-conv backbone), density-peak proposals (a stand-in for the
// RPN), deformable image fusion per voxel, RoI grid pooling and the
// concatenation across selected scales.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "radfuse/box.hpp"
#include "radfuse/deformable.hpp"
#include "radfuse/densify.hpp"
#include "radfuse/parallel.hpp"
#include "radfuse/voxel_encoder.hpp"

namespace radfuse {

inline constexpr std::array<int, 4> kDownsampleScales{1, 2, 4, 8};

struct SparseVoxelFeatures {
  Tensor features;  // [N_i, C_i]
  std::vector<VoxelCoord> coords;
  std::vector<Vec3> centroids;
  std::vector<int> counts;  // points represented by each voxel
  int scale = 1;

  std::size_t size() const { return coords.size(); }
};

inline void declare_backbone(ParamStore& store, std::size_t in, std::size_t width,
                             const std::string& path = "backbone") {
  for (std::size_t i = 0; i < kDownsampleScales.size(); ++i) {
    store.declare_linear(path + ".x" + std::to_string(i + 1), in, width);
  }
}

/// Level s merges voxels sharing floor(coord / s): channel-wise max of the
/// members through the level's linear layer, count-weighted mean centroid.
inline std::array<SparseVoxelFeatures, 4> multiscale_downsample(const VoxelFeatures& v, const ParamStore& store,
                                                                unsigned workers = 1,
                                                                const std::string& path = "backbone") {
  if (v.coords.empty()) throw ShapeError("downsample: no voxels");
  const std::size_t c_in = v.features.dim(1);
  std::array<SparseVoxelFeatures, 4> levels;
  for (std::size_t li = 0; li < kDownsampleScales.size(); ++li) {
    const int s = kDownsampleScales[li];
    std::map<VoxelCoord, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < v.coords.size(); ++k) {
      const VoxelCoord& c = v.coords[k];
      groups[{c.x / s, c.y / s, c.z / s}].push_back(k);
    }
    const LinearParams& proj = store.linear(path + ".x" + std::to_string(li + 1));
    SparseVoxelFeatures& out = levels[li];
    out.scale = s;
    out.features = Tensor({groups.size(), proj.fan_out()});
    std::vector<const std::vector<std::size_t>*> members;
    for (const auto& [coord, m] : groups) {
      out.coords.push_back(coord);
      members.push_back(&m);
    }
    out.centroids.resize(groups.size());
    out.counts.resize(groups.size());
    parallel_for(groups.size(), workers, [&](std::size_t g) {
      const auto& m = *members[g];
      std::vector<float> pooled(v.features.row(m[0]).begin(), v.features.row(m[0]).end());
      Vec3 cen{0, 0, 0};
      int total = 0;
      for (const std::size_t k : m) {
        const auto row = v.features.row(k);
        for (std::size_t i = 0; i < c_in; ++i) pooled[i] = std::max(pooled[i], row[i]);
        for (std::size_t a = 0; a < 3; ++a) cen[a] += v.centroids[k][a] * v.counts[k];
        total += v.counts[k];
      }
      for (double& x : cen) x /= total;
      linear_into<float>(pooled, proj, out.features.row(g));
      out.centroids[g] = cen;
      out.counts[g] = total;
    });
  }
  return levels;
}

// ---------------------------------------------------------------------------
// Proposal stand-in

struct AnchorSpec {
  int cls = 0;
  double l = 1, w = 1, h = 1;
};

struct ProposalConfig {
  std::size_t top_k = 64;
  double bev_cell = 0.8;  // meters
  int min_points = 3;
};

/// BEV density peaks of the hybrid points, one anchor-sized box per peak and
/// class. A peak is a cell whose count beats its 8 neighbors (plateaus go to
/// the smallest cell key). The box center is the mean of the points in the
/// 3x3 neighborhood; score = neighborhood count / best neighborhood count.
inline std::vector<Box3D> heuristic_proposals(const std::vector<HybridPoint>& points,
                                              const std::vector<AnchorSpec>& anchors, const ProposalConfig& cfg) {
  if (cfg.top_k < 1) throw std::invalid_argument("proposals: top_k must be >= 1");
  struct Cell {
    int count = 0;
    Vec3 sum{0, 0, 0};
  };
  std::map<std::pair<int, int>, Cell> cells;
  for (const auto& p : points) {
    const std::pair<int, int> key{static_cast<int>(std::floor(p.xyz[0] / cfg.bev_cell)),
                                  static_cast<int>(std::floor(p.xyz[1] / cfg.bev_cell))};
    Cell& c = cells[key];
    ++c.count;
    for (std::size_t a = 0; a < 3; ++a) c.sum[a] += p.xyz[a];
  }
  struct Peak {
    Vec3 center;
    int support;
  };
  std::vector<Peak> peaks;
  for (const auto& [key, cell] : cells) {
    if (cell.count < cfg.min_points) continue;
    bool is_peak = true;
    Cell hood;
    for (int dx = -1; dx <= 1 && is_peak; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        const std::pair<int, int> nk{key.first + dx, key.second + dy};
        auto it = cells.find(nk);
        if (it == cells.end()) continue;
        if (nk != key && (it->second.count > cell.count || (it->second.count == cell.count && nk < key))) {
          is_peak = false;
          break;
        }
        hood.count += it->second.count;
        for (std::size_t a = 0; a < 3; ++a) hood.sum[a] += it->second.sum[a];
      }
    }
    if (!is_peak) continue;
    peaks.push_back({{hood.sum[0] / hood.count, hood.sum[1] / hood.count, hood.sum[2] / hood.count}, hood.count});
  }
  int best = 0;
  for (const auto& p : peaks) best = std::max(best, p.support);
  std::vector<Box3D> boxes;
  for (const auto& p : peaks) {
    for (const auto& a : anchors) {
      boxes.push_back({p.center[0], p.center[1], p.center[2], a.l, a.w, a.h, 0.0,
                       static_cast<double>(p.support) / best, a.cls});
    }
  }
  std::stable_sort(boxes.begin(), boxes.end(), [](const Box3D& a, const Box3D& b) { return a.score > b.score; });
  if (boxes.size() > cfg.top_k) boxes.resize(cfg.top_k);
  return boxes;
}

// ---------------------------------------------------------------------------
// Scene-level deformable fusion and pooling

/// Voxel features query the pyramid at their projected centroids.
template <typename T>
BasicTensor<T> qgslf_block(const BasicTensor<T>& features, const std::vector<Vec3>& centroids,
                           const FeaturePyramid& pyr, const Calibration& cal, const ParamStore& store,
                           const std::string& path, const DeformableConfig& cfg, unsigned workers = 1,
                           DeformableTrace<T>* trace = nullptr) {
  return deformable_fuse<T>(features, centroids, pyr, cal, store, path, cfg, workers, trace);
}

inline Tensor qgslf_block(const SparseVoxelFeatures& x, const FeaturePyramid& pyr, const Calibration& cal,
                          const ParamStore& store, const std::string& path, const DeformableConfig& cfg,
                          unsigned workers = 1) {
  return deformable_fuse<float>(x.features, x.centroids, pyr, cal, store, path, cfg, workers);
}

/// Cell centers of a G x G x G grid over the box, world frame. Cell index is
/// (i * G + j) * G + k with i along l, j along w, k along h.
inline std::vector<Vec3> roi_grid_centers(const Box3D& b, std::size_t g) {
  std::vector<Vec3> out;
  out.reserve(g * g * g);
  const double gd = static_cast<double>(g);
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j)
      for (std::size_t k = 0; k < g; ++k) {
        out.push_back(b.to_world({((i + 0.5) / gd - 0.5) * b.l, ((j + 0.5) / gd - 0.5) * b.w,
                                  ((k + 0.5) / gd - 0.5) * b.h}));
      }
  return out;
}

inline double roi_cell_radius(const Box3D& b, std::size_t g) {
  const double gd = static_cast<double>(g);
  return 0.5 * std::sqrt((b.l / gd) * (b.l / gd) + (b.w / gd) * (b.w / gd) + (b.h / gd) * (b.h / gd));
}

/// Per proposal and grid cell: channel-wise max over voxels whose centroid is
/// within half the cell diagonal of the cell center, zeros when none.
inline Tensor roi_grid_pool(const Tensor& features, const std::vector<Vec3>& centroids,
                            const std::vector<Box3D>& proposals, std::size_t g, unsigned workers = 1) {
  if (g < 1) throw std::invalid_argument("roi_grid_pool: grid size must be >= 1");
  if (features.rank() != 2 || features.dim(0) != centroids.size()) {
    throw ShapeError("roi_grid_pool: features " + format_dims(features.dims()) + " do not align with " +
                     std::to_string(centroids.size()) + " centroids");
  }
  const std::size_t c = features.dim(1), cells = g * g * g;
  Tensor out({proposals.size(), cells * c});
  parallel_for(proposals.size(), workers, [&](std::size_t p) {
    const Box3D& b = proposals[p];
    const double rho = roi_cell_radius(b, g);
    const double reach = 0.5 * std::sqrt(b.l * b.l + b.w * b.w + b.h * b.h) + rho;
    std::vector<std::size_t> near;
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      const Vec3& q = centroids[k];
      const double dx = q[0] - b.x, dy = q[1] - b.y, dz = q[2] - b.z;
      if (dx * dx + dy * dy + dz * dz <= reach * reach) near.push_back(k);
    }
    const auto centers = roi_grid_centers(b, g);
    auto dst = out.row(p);
    for (std::size_t cell = 0; cell < cells; ++cell) {
      bool any = false;
      float* slot = dst.data() + cell * c;
      for (const std::size_t k : near) {
        const Vec3& q = centroids[k];
        const double dx = q[0] - centers[cell][0], dy = q[1] - centers[cell][1], dz = q[2] - centers[cell][2];
        if (dx * dx + dy * dy + dz * dz > rho * rho) continue;
        const auto row = features.row(k);
        if (!any) {
          std::copy(row.begin(), row.end(), slot);
          any = true;
        } else {
          for (std::size_t i = 0; i < c; ++i) slot[i] = std::max(slot[i], row[i]);
        }
      }
    }
  });
  return out;
}

struct HsfpConfig {
  std::vector<int> levels{3, 4};  // 1-based X_i indices, ascending
  std::size_t grid = 6;
  DeformableConfig attention;
};

inline std::string hsfp_path(int level) { return "hsfp.x" + std::to_string(level) + ".qgslf"; }

inline void declare_hsfp(ParamStore& store, const HsfpConfig& cfg) {
  for (const int lv : cfg.levels) declare_deformable(store, hsfp_path(lv), cfg.attention);
}

/// Fuses each selected scale with the pyramid, pools per proposal and
/// concatenates the blocks in ascending scale order.
inline Tensor hsfp(const std::array<SparseVoxelFeatures, 4>& scales, const FeaturePyramid& pyr,
                   const Calibration& cal, const std::vector<Box3D>& proposals, const ParamStore& store,
                   const HsfpConfig& cfg, unsigned workers = 1, std::vector<Tensor>* fused_out = nullptr) {
  if (cfg.levels.empty()) throw std::invalid_argument("hsfp: no levels selected");
  std::vector<int> levels = cfg.levels;
  std::sort(levels.begin(), levels.end());
  const std::size_t cells = cfg.grid * cfg.grid * cfg.grid;
  const std::size_t c = cfg.attention.out_dim;
  Tensor out({proposals.size(), levels.size() * cells * c});
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const int lv = levels[li];
    if (lv < 1 || lv > 4) throw std::invalid_argument("hsfp: level must be in 1..4");
    const auto& x = scales[static_cast<std::size_t>(lv - 1)];
    const Tensor fused = qgslf_block(x, pyr, cal, store, hsfp_path(lv), cfg.attention, workers);
    const Tensor pooled = roi_grid_pool(fused, x.centroids, proposals, cfg.grid, workers);
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      std::copy(pooled.row(p).begin(), pooled.row(p).end(),
                out.row(p).begin() + static_cast<std::ptrdiff_t>(li * cells * c));
    }
    if (fused_out) fused_out->push_back(fused);
  }
  return out;
}

}  // namespace radfuse
