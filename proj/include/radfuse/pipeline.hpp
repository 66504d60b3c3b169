// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "radfuse/config.hpp"
#include "radfuse/densify.hpp"
#include "radfuse/io.hpp"
#include "radfuse/iou.hpp"
#include "radfuse/proposal_fusion.hpp"
#include "radfuse/pyramid.hpp"
#include "radfuse/rtf.hpp"
#include "radfuse/scene_fusion.hpp"
#include "radfuse/voxel_encoder.hpp"

namespace radfuse {

/// Module that owns a pipeline stage.
inline std::string stage_module(const std::string& stage) {
  if (stage == "densify") return "densify";
  if (stage == "voxelize" || stage == "tavfe") return "voxel_encoder";
  if (stage == "downsample" || stage == "proposals" || stage == "hsfp") return "scene_fusion";
  if (stage == "grid_encode" || stage == "qgplf" || stage == "plfe" || stage == "head") return "proposal_fusion";
  if (stage == "nms") return "eval_metrics";
  return "pipeline_cli";
}

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, int frame, const std::string& what)
      : std::runtime_error("module " + stage_module(stage) + ", stage " + stage + ", frame " + std::to_string(frame) +
                           ": " + what),
        stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

inline std::size_t hybrid_width(const PipelineConfig& cfg) {
  return 3 + attribute_count(cfg.schema) + static_cast<std::size_t>(cfg.num_classes()) + 2;
}

/// Every learned layer of the model, initialized from cfg.seed.
inline ParamStore declare_model(const PipelineConfig& cfg) {
  cfg.validate();
  ParamStore store;
  declare_tavfe(store, hybrid_width(cfg), cfg.tavfe);
  declare_backbone(store, cfg.tavfe.out, cfg.backbone_width);
  declare_hsfp(store, cfg.hsfp());
  declare_plfe(store, cfg.plfe(), cfg.slp_width());
  store.init(cfg.seed);
  return store;
}

struct FrameInputs {
  int frame = 0;
  PointCloud radar;
  InstanceMask mask;
  Calibration cal;
  FeaturePyramid pyramid;
  std::optional<std::vector<Box3D>> proposals;  // bypasses the heuristic when set
};

struct StageRecord {
  std::string name;
  std::vector<std::size_t> dims;
  std::size_t nonfinite = 0;
};

struct PipelineOutput {
  DensifyResult dense;
  VoxelSet voxels;
  VoxelFeatures vfe;
  std::array<SparseVoxelFeatures, 4> scales;
  std::vector<Box3D> proposals;
  Tensor slp;          // F_SLP
  Tensor grid_queries; // F_g
  Tensor plp;          // F_PLP
  Tensor xp;           // X_P
  std::vector<RefinedProposal> refined;
  std::vector<Box3D> detections;
  std::vector<StageRecord> stages;
};

namespace detail {

inline std::size_t count_nonfinite(std::span<const float> v) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](float x) { return !std::isfinite(x); }));
}

inline std::size_t count_nonfinite(const std::vector<Box3D>& boxes) {
  std::size_t n = 0;
  for (const auto& b : boxes)
    for (const double x : {b.x, b.y, b.z, b.l, b.w, b.h, b.yaw, b.score}) n += std::isfinite(x) ? 0 : 1;
  return n;
}

template <typename Fn>
auto stage(const std::string& name, int frame, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, frame, e.what());
  }
}

}  // namespace detail

/// Class-agnostic suppression keeps one class per location.
inline std::vector<Box3D> suppress(const std::vector<Box3D>& boxes, double threshold) {
  std::vector<Box3D> out;
  for (const std::size_t i : nms_bev(boxes, threshold)) out.push_back(boxes[i]);
  return out;
}

inline PipelineOutput run_pipeline(const PipelineConfig& cfg, const FrameInputs& in, const ParamStore& store) {
  PipelineOutput out;
  const int f = in.frame;
  const unsigned w = cfg.workers;
  auto record = [&](const std::string& name, std::vector<std::size_t> dims, std::size_t bad) {
    out.stages.push_back({name, std::move(dims), bad});
  };

  out.dense = detail::stage("densify", f, [&] {
    return densify_frame(in.radar.points, in.mask, in.cal, cfg.sampler, cfg.schema, cfg.num_classes(),
                         static_cast<std::uint64_t>(f));
  });
  {
    std::size_t bad = 0;
    for (const auto& p : out.dense.points) {
      for (const double x : p.xyz) bad += std::isfinite(x) ? 0 : 1;
      bad += detail::count_nonfinite(p.attrs);
    }
    record("densify", {out.dense.points.size(), hybrid_width(cfg)}, bad);
  }

  out.voxels = detail::stage("voxelize", f, [&] { return voxelize(out.dense.points, cfg.grid, cfg.tavfe.max_points); });
  record("voxelize", {out.voxels.size(), cfg.tavfe.max_points, out.voxels.size() ? out.voxels.channels : hybrid_width(cfg)},
         detail::count_nonfinite(out.voxels.points.values()));

  out.vfe = detail::stage("tavfe", f, [&] { return tavfe(out.voxels, cfg.grid, store, cfg.tavfe, w); });
  record("tavfe", out.vfe.features.dims(), detail::count_nonfinite(out.vfe.features.values()));

  detail::stage("downsample", f, [&] {
    if (out.vfe.coords.empty()) {
      for (std::size_t i = 0; i < 4; ++i) {
        out.scales[i].features = Tensor({0, cfg.backbone_width});
        out.scales[i].scale = kDownsampleScales[i];
      }
    } else {
      out.scales = multiscale_downsample(out.vfe, store, w);
    }
    return 0;
  });
  for (std::size_t i = 0; i < 4; ++i) {
    record("x" + std::to_string(i + 1), out.scales[i].features.dims(),
           detail::count_nonfinite(out.scales[i].features.values()));
  }

  out.proposals = detail::stage("proposals", f, [&] {
    return in.proposals ? *in.proposals : heuristic_proposals(out.dense.points, cfg.anchors, cfg.proposals);
  });
  record("proposals", {out.proposals.size(), 7}, detail::count_nonfinite(out.proposals));

  out.slp = detail::stage("hsfp", f, [&] {
    return hsfp(out.scales, in.pyramid, in.cal, out.proposals, store, cfg.hsfp(), w);
  });
  record("hsfp", out.slp.dims(), detail::count_nonfinite(out.slp.values()));

  const PlfeConfig plfe = cfg.plfe();
  std::vector<ProposalGrid> grids;
  out.grid_queries = detail::stage("grid_encode", f, [&] {
    for (const auto& b : out.proposals) grids.push_back(build_proposal_grid(b, out.dense.points, plfe.grid));
    return grid_encode<float>(grid_geometry(grids), store);
  });
  record("grid_encode", out.grid_queries.dims(), detail::count_nonfinite(out.grid_queries.values()));

  out.plp = detail::stage("qgplf", f, [&] {
    if (grids.empty()) return Tensor({0, plfe.plp_width()});
    return qgplf_block<float>(out.grid_queries, grids, in.pyramid, in.cal, store, plfe.attention, w);
  });
  record("qgplf", out.plp.dims(), detail::count_nonfinite(out.plp.values()));

  out.xp = detail::stage("plfe", f, [&] { return plfe_fuse<float>(out.plp, out.slp, store, plfe.msa_heads, w); });
  record("plfe", out.xp.dims(), detail::count_nonfinite(out.xp.values()));

  out.refined = detail::stage("head", f, [&] { return detect_head(out.xp, out.proposals, store, w); });
  {
    std::size_t bad = 0;
    for (const auto& r : out.refined) {
      for (const double x : r.residual) bad += std::isfinite(x) ? 0 : 1;
      bad += std::isfinite(r.confidence) ? 0 : 1;
    }
    record("head", {out.refined.size(), 8}, bad);
  }

  out.detections = detail::stage("nms", f, [&] {
    std::vector<Box3D> decoded;
    for (const auto& r : out.refined) decoded.push_back(r.decoded(plfe.coding));
    return suppress(decoded, cfg.nms_threshold);
  });
  record("detections", {out.detections.size(), 9}, detail::count_nonfinite(out.detections));
  return out;
}

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"densify", "voxelize", "tavfe", "x1",  "x2",   "x3",   "x4",
                                              "proposals", "hsfp",   "grid_encode", "qgplf", "plfe", "head", "detections"};
  return names;
}

/// Writes one file per requested stage ("all" selects every stage).
inline std::vector<std::filesystem::path> dump_stages(const PipelineOutput& out, const PipelineConfig& cfg,
                                                      const std::filesystem::path& dir,
                                                      const std::vector<std::string>& which) {
  std::set<std::string> want(which.begin(), which.end());
  const bool all = want.count("all") > 0;
  for (const auto& w : want) {
    if (w != "all" && std::find(stage_names().begin(), stage_names().end(), w) == stage_names().end()) {
      throw std::invalid_argument("unknown stage '" + w + "'");
    }
  }
  std::filesystem::create_directories(dir);
  const auto& classes = class_names(cfg.protocol);
  std::vector<std::filesystem::path> written;
  auto on = [&](const std::string& s) { return all || want.count(s) > 0; };
  auto tensor = [&](const std::string& s, const Tensor& t) {
    if (!on(s)) return;
    const auto p = dir / (s + ".rtf");
    save_rtf(p, t);
    written.push_back(p);
  };
  if (on("densify")) {
    const auto p = dir / "densify.csv";
    save_hybrid(p, {cfg.schema, cfg.num_classes(), out.dense.points});
    written.push_back(p);
  }
  tensor("voxelize", out.voxels.size() ? out.voxels.points : Tensor({0, cfg.tavfe.max_points, hybrid_width(cfg)}));
  tensor("tavfe", out.vfe.features);
  for (std::size_t i = 0; i < 4; ++i) tensor("x" + std::to_string(i + 1), out.scales[i].features);
  if (on("proposals")) {
    const auto p = dir / "proposals.csv";
    save_boxes(p, out.proposals, classes);
    written.push_back(p);
  }
  tensor("hsfp", out.slp);
  tensor("grid_encode", out.grid_queries);
  tensor("qgplf", out.plp);
  tensor("plfe", out.xp);
  if (on("head")) {
    Tensor h({out.refined.size(), 8});
    for (std::size_t r = 0; r < out.refined.size(); ++r) {
      for (std::size_t i = 0; i < 7; ++i) h(r, i) = static_cast<float>(out.refined[r].residual[i]);
      h(r, 7) = static_cast<float>(out.refined[r].confidence);
    }
    tensor("head", h);
  }
  if (on("detections")) {
    const auto p = dir / "detections.csv";
    save_boxes(p, out.detections, classes);
    written.push_back(p);
  }
  return written;
}

}  // namespace radfuse
