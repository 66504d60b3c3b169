// SPDX-License-Identifier: Apache-2.0
//
// radfuse command-line front end. Exit codes: 0 ok, 1 check failure,
// 2 I/O, format or usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "radfuse/radfuse.hpp"

namespace fs = std::filesystem;
using namespace radfuse;

namespace {

std::string verb_module(const std::string& verb) {
  if (verb == "densify") return "densify";
  if (verb == "voxelize" || verb == "encode") return "voxel_encoder";
  if (verb == "fuse") return "scene_fusion";
  if (verb == "refine") return "proposal_fusion";
  if (verb == "eval") return "eval_metrics";
  return "pipeline_cli";
}

/// Accepts "3", "x3" or "X3".
std::vector<int> parse_levels(const std::vector<std::string>& names) {
  std::vector<int> out;
  for (const auto& n : names) {
    const std::string digits = (!n.empty() && (n[0] == 'x' || n[0] == 'X')) ? n.substr(1) : n;
    if (digits.size() != 1 || digits[0] < '1' || digits[0] > '4') {
      throw std::invalid_argument("--levels: expected x1..x4, got '" + n + "'");
    }
    out.push_back(digits[0] - '0');
  }
  return out;
}

PipelineConfig load_cfg(const std::string& path, std::optional<unsigned> workers,
                        const std::vector<std::string>& levels) {
  PipelineConfig c = path.empty() ? PipelineConfig::vod() : load_config(path);
  apply_seed_env(c);
  if (workers) c.workers = std::max(1u, *workers);
  if (!levels.empty()) c.hsfp_levels = parse_levels(levels);
  c.validate();
  return c;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw FormatError("cannot write " + p.string());
  os << s;
}

/// A frame directory as written by `radfuse synth`.
struct FrameFiles {
  fs::path dir;
  fs::path points() const { return dir / "points.csv"; }
  fs::path mask() const { return dir / "mask.pgm"; }
  fs::path mask_json() const { return dir / "mask.json"; }
  fs::path calib() const { return dir / "calib.json"; }
  fs::path image() const { return dir / "image.ppm"; }
  fs::path gt() const { return dir / "gt.csv"; }
};

void save_scene(const SyntheticScene& s, const fs::path& dir, const PipelineConfig& cfg) {
  fs::create_directories(dir);
  const FrameFiles f{dir};
  save_points(f.points(), s.radar);
  save_mask(f.mask(), f.mask_json(), s.mask, class_names(cfg.protocol));
  save_calibration(f.calib(), s.cal);
  save_ppm(f.image(), s.image);
  save_boxes(f.gt(), s.gt, class_names(cfg.protocol));
}

SynthConfig synth_config(const PipelineConfig& cfg) {
  SynthConfig sc;
  sc.width = cfg.image_width;
  sc.height = cfg.image_height;
  sc.focal = cfg.focal;
  sc.schema = cfg.schema;
  sc.grid = cfg.grid;
  return sc;
}

FeaturePyramid pyramid_for(const PipelineConfig& cfg, const RgbImage& img, const std::vector<std::string>& files,
                           const std::vector<double>& strides) {
  if (!files.empty()) {
    std::vector<fs::path> paths(files.begin(), files.end());
    return load_pyramid(paths, strides);
  }
  return synthesize_pyramid(img, cfg.pyramid_levels, cfg.pyramid_channels, cfg.seed, cfg.pyramid_base_stride);
}

FrameInputs load_frame(const PipelineConfig& cfg, const fs::path& dir, const std::vector<std::string>& pyramid_files,
                       const std::vector<double>& strides, const std::string& proposals, int frame,
                       bool need_pyramid = true) {
  const FrameFiles f{dir};
  FrameInputs in;
  in.frame = frame;
  in.radar = load_points(f.points());
  if (in.radar.schema != cfg.schema) {
    throw FormatError("points: file schema " + schema_name(in.radar.schema) + " but config expects " +
                      schema_name(cfg.schema));
  }
  in.mask = load_mask(f.mask(), f.mask_json(), class_names(cfg.protocol));
  in.cal = load_calibration(f.calib());
  if (need_pyramid) {
    in.pyramid = pyramid_for(cfg, pyramid_files.empty() ? load_ppm(f.image()) : RgbImage{}, pyramid_files, strides);
  }
  if (!proposals.empty()) {
    std::vector<Box3D> boxes;
    for (const auto& b : load_boxes(proposals, class_names(cfg.protocol))) boxes.push_back(b.box);
    in.proposals = boxes;
  }
  return in;
}

std::vector<Box3D> boxes_of(const std::vector<FramedBox>& fb) {
  std::vector<Box3D> out;
  for (const auto& b : fb) out.push_back(b.box);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radfuse: radar-camera fusion detector toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<unsigned> workers;
  app.add_option("--config", config_path, "pipeline config (TOML)");
  app.add_option("--workers", workers, "worker threads");
  std::vector<std::string> levels;
  app.add_option("--levels", levels, "backbone scales (1-4) pooled by scene-level fusion");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic frame directory");
  std::uint64_t synth_seed = 42;
  int objects = 6, clutter = 100;
  std::string out_dir = "frame";
  synth_cmd->add_option("--seed", synth_seed, "scene seed");
  synth_cmd->add_option("--objects", objects, "number of boxes");
  synth_cmd->add_option("--clutter", clutter, "clutter points");
  synth_cmd->add_option("--out", out_dir, "output directory");

  // densify
  auto* densify_cmd = app.add_subcommand("densify", "densify a frame into hybrid points");
  std::string frame_dir, out_file;
  densify_cmd->add_option("--frame", frame_dir, "frame directory")->required();
  densify_cmd->add_option("--out", out_file, "hybrid points CSV")->required();

  // voxelize / encode
  auto* voxelize_cmd = app.add_subcommand("voxelize", "voxelize hybrid points");
  std::string hybrid_path;
  voxelize_cmd->add_option("--hybrid", hybrid_path, "hybrid points CSV")->required();
  voxelize_cmd->add_option("--out", out_file, "voxel tensor (RTF)")->required();
  auto* encode_cmd = app.add_subcommand("encode", "TA-VFE voxel features");
  encode_cmd->add_option("--hybrid", hybrid_path, "hybrid points CSV")->required();
  encode_cmd->add_option("--out", out_file, "voxel features (RTF)")->required();

  // fuse / refine / pipeline
  std::vector<std::string> pyramid_files;
  std::vector<double> strides;
  std::string proposals_path;
  auto add_frame_inputs = [&](CLI::App* c) {
    c->add_option("--frame", frame_dir, "frame directory")->required();
    c->add_option("--pyramid", pyramid_files, "pyramid RTF files, finest first");
    c->add_option("--strides", strides, "pyramid strides matching --pyramid");
    c->add_option("--proposals", proposals_path, "proposal CSV (skips the heuristic)");
  };
  auto* fuse_cmd = app.add_subcommand("fuse", "scene-level fusion: proposals and pooled features");
  add_frame_inputs(fuse_cmd);
  fuse_cmd->add_option("--out", out_dir, "output directory")->required();
  auto* refine_cmd = app.add_subcommand("refine", "proposal-level fusion and detection head");
  add_frame_inputs(refine_cmd);
  refine_cmd->add_option("--out", out_file, "detections CSV")->required();

  auto* pipeline_cmd = app.add_subcommand("pipeline", "end-to-end run");
  std::optional<std::uint64_t> pipe_synth;
  int frames = 1;
  std::vector<std::string> dump;
  pipeline_cmd->add_option("--frame", frame_dir, "frame directory");
  pipeline_cmd->add_option("--synth", pipe_synth, "synthesize the input frame(s) from this seed instead");
  pipeline_cmd->add_option("--frames", frames, "number of synthetic frames");
  pipeline_cmd->add_option("--objects", objects, "boxes per synthetic frame");
  pipeline_cmd->add_option("--clutter", clutter, "clutter points per synthetic frame");
  pipeline_cmd->add_option("--pyramid", pyramid_files, "pyramid RTF files, finest first");
  pipeline_cmd->add_option("--strides", strides, "pyramid strides matching --pyramid");
  pipeline_cmd->add_option("--proposals", proposals_path, "proposal CSV (skips the heuristic)");
  pipeline_cmd->add_option("--dump-stage", dump, "stage dump(s) to write, or 'all'");
  pipeline_cmd->add_option("--out", out_dir, "output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "AP evaluation");
  std::string dets_path, gt_path, protocol, report_path;
  eval_cmd->add_option("--dets", dets_path, "detections CSV")->required();
  eval_cmd->add_option("--gt", gt_path, "ground-truth CSV")->required();
  eval_cmd->add_option("--protocol", protocol, "vod_eaa | vod_dca | tj4d");
  eval_cmd->add_option("--out", report_path, "report JSON");

  // check
  auto* check_cmd = app.add_subcommand("check", "run the invariant suite");
  bool inject = false;
  int jvp_seeds = 50;
  check_cmd->add_flag("--inject-fault", inject, "break softmax normalization (negative control)");
  check_cmd->add_option("--jvp-seeds", jvp_seeds, "seeds per derivative check");
  check_cmd->add_option("--out", report_path, "report JSON");

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "BEV scatter and PR curves");
  std::string plot_dir;
  plot_cmd->add_option("--dumps", plot_dir, "directory of pipeline stage dumps")->required();
  plot_cmd->add_option("--gt", gt_path, "ground-truth CSV to overlay and evaluate");
  plot_cmd->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    const PipelineConfig cfg = load_cfg(config_path, workers, levels);
    const auto& classes = class_names(cfg.protocol);

    if (verb == "synth") {
      const auto scene = synth_scene(synth_seed, objects, clutter, synth_config(cfg));
      save_scene(scene, out_dir, cfg);
      std::cout << "synth: " << scene.gt.size() << " boxes, " << scene.radar.points.size() << " points -> " << out_dir
                << '\n';
      return 0;
    }
    if (verb == "densify") {
      const FrameInputs in = load_frame(cfg, frame_dir, {}, {}, "", 0, false);
      const DensifyResult d = densify_frame(in.radar.points, in.mask, in.cal, cfg.sampler, cfg.schema, cfg.num_classes());
      save_hybrid(out_file, {cfg.schema, cfg.num_classes(), d.points});
      for (const auto& r : d.instances) {
        std::cout << "instance " << r.instance << " (" << classes.at(static_cast<std::size_t>(r.cls))
                  << "): foreground " << r.foreground << ", virtual " << r.virtual_points << '\n';
      }
      return 0;
    }
    if (verb == "voxelize" || verb == "encode") {
      const HybridCloud hc = load_hybrid(hybrid_path);
      const VoxelSet set = voxelize(hc.points, cfg.grid, cfg.tavfe.max_points);
      if (verb == "voxelize") {
        save_rtf(out_file, set.size() ? set.points : Tensor({0, cfg.tavfe.max_points, hybrid_width(cfg)}));
        std::cout << "voxelize: " << set.size() << " voxels\n";
        return 0;
      }
      const ParamStore store = declare_model(cfg);
      const VoxelFeatures vf = tavfe(set, cfg.grid, store, cfg.tavfe, cfg.workers);
      save_rtf(out_file, vf.features);
      std::cout << "encode: " << format_dims(vf.features.dims()) << '\n';
      return 0;
    }
    if (verb == "fuse" || verb == "refine") {
      const FrameInputs in = load_frame(cfg, frame_dir, pyramid_files, strides, proposals_path, 0);
      const ParamStore store = declare_model(cfg);
      const PipelineOutput out = run_pipeline(cfg, in, store);
      if (verb == "fuse") {
        dump_stages(out, cfg, out_dir, {"proposals", "hsfp"});
        std::cout << "fuse: F_SLP " << format_dims(out.slp.dims()) << '\n';
      } else {
        save_boxes(out_file, out.detections, classes);
        std::cout << "refine: " << out.detections.size() << " detections\n";
      }
      return 0;
    }
    if (verb == "pipeline") {
      if (!pipe_synth && frame_dir.empty()) throw std::invalid_argument("give --frame or --synth");
      if (frames < 1) throw std::invalid_argument("--frames must be >= 1");
      const ParamStore store = declare_model(cfg);
      fs::create_directories(out_dir);
      const std::size_t nf = pipe_synth ? static_cast<std::size_t>(frames) : 1;
      std::vector<PipelineOutput> outs(nf);
      std::vector<std::vector<Box3D>> gts(nf);
      PipelineConfig inner = cfg;
      if (nf > 1) inner.workers = 1;  // parallel over frames instead
      parallel_for(nf, nf > 1 ? cfg.workers : 1, [&](std::size_t f) {
        FrameInputs in;
        if (pipe_synth) {
          const std::uint64_t seed = nf > 1 ? stream_key(*pipe_synth, f) : *pipe_synth;
          const auto scene = synth_scene(seed, objects, clutter, synth_config(cfg));
          in.frame = static_cast<int>(f);
          in.radar = scene.radar;
          in.mask = scene.mask;
          in.cal = scene.cal;
          in.pyramid = pyramid_for(cfg, scene.image, pyramid_files, strides);
          if (!proposals_path.empty()) in.proposals = boxes_of(load_boxes(proposals_path, classes));
          gts[f] = scene.gt;
        } else {
          in = load_frame(cfg, frame_dir, pyramid_files, strides, proposals_path, 0);
          if (fs::exists(FrameFiles{frame_dir}.gt())) gts[f] = boxes_of(load_boxes(FrameFiles{frame_dir}.gt(), classes));
        }
        outs[f] = run_pipeline(inner, in, store);
      });
      std::vector<FramedBox> dets, gt_all;
      for (std::size_t f = 0; f < nf; ++f) {
        for (const auto& b : outs[f].detections) dets.push_back({static_cast<int>(f), b});
        for (const auto& b : gts[f]) gt_all.push_back({static_cast<int>(f), b});
        if (!dump.empty()) dump_stages(outs[f], cfg, nf > 1 ? fs::path(out_dir) / ("frame" + std::to_string(f)) : fs::path(out_dir), dump);
      }
      {
        std::ofstream os(fs::path(out_dir) / "detections.csv", std::ios::binary);
        write_boxes_csv(os, dets, classes, nf > 1);
        if (!os) throw FormatError("cannot write detections.csv");
      }
      if (!gt_all.empty()) {
        std::ofstream os(fs::path(out_dir) / "gt.csv", std::ios::binary);
        write_boxes_csv(os, gt_all, classes, nf > 1);
      }
      nlohmann::json stages = nlohmann::json::array();
      for (const auto& s : outs[0].stages) stages.push_back({{"stage", s.name}, {"dims", s.dims}, {"nonfinite", s.nonfinite}});
      write_text(fs::path(out_dir) / "stages.json", stages.dump(2) + "\n");
      std::cout << "pipeline: " << dets.size() << " detections over " << nf << " frame(s) -> " << out_dir << '\n';
      return 0;
    }
    if (verb == "eval") {
      const Protocol p = protocol.empty() ? cfg.protocol : parse_protocol(protocol);
      const auto& names = class_names(p);
      const auto dets = load_boxes(dets_path, names), gts = load_boxes(gt_path, names);
      std::size_t frames_n = 0;
      for (const auto& b : dets) frames_n = std::max(frames_n, static_cast<std::size_t>(b.frame) + 1);
      for (const auto& b : gts) frames_n = std::max(frames_n, static_cast<std::size_t>(b.frame) + 1);
      const auto rep = evaluate(group_by_frame(dets, frames_n), group_by_frame(gts, frames_n), p, cfg.iou_thresholds,
                                cfg.dca_axes);
      if (!report_path.empty()) write_text(report_path, rep.to_json().dump(2) + "\n");
      std::cout << rep.to_text();
      return 0;
    }
    if (verb == "check") {
      CheckOptions opt;
      opt.inject_fault = inject;
      opt.jvp_seeds = jvp_seeds;
      opt.workers = std::max(2u, cfg.workers);
      const auto rep = run_checks(opt);
      const std::string js = rep.to_json().dump(2) + "\n";
      if (!report_path.empty()) {
        write_text(report_path, js);
      } else {
        std::cout << js;
      }
      for (const auto& r : rep.results) {
        if (!r.pass) std::cerr << "radfuse check: FAILED " << r.name << " (value " << r.value << ")\n";
      }
      return rep.ok() ? 0 : 1;
    }
    if (verb == "plot") {
      const fs::path d = plot_dir;
      const fs::path dense = d / "densify.csv";
      if (!fs::exists(dense)) throw FormatError("missing dump for stage 'densify' (" + dense.string() + ")");
      const HybridCloud hc = load_hybrid(dense);
      std::vector<Box3D> boxes;
      if (!gt_path.empty()) boxes = boxes_of(load_boxes(gt_path, classes));
      fs::create_directories(out_dir);
      write_text(fs::path(out_dir) / "bev.svg", bev_svg(hc.points, boxes, cfg.grid));
      save_ppm(fs::path(out_dir) / "bev.ppm", bev_image(hc.points, boxes, cfg.grid));
      if (!gt_path.empty()) {
        const fs::path det = d / "detections.csv";
        if (!fs::exists(det)) throw FormatError("missing dump for stage 'detections' (" + det.string() + ")");
        const auto rep = evaluate({boxes_of(load_boxes(det, classes))}, {boxes}, cfg.protocol, cfg.iou_thresholds,
                                  cfg.dca_axes);
        write_text(fs::path(out_dir) / "pr.svg", pr_svg(rep));
      }
      std::cout << "plot: wrote " << out_dir << '\n';
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "radfuse " << verb << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "radfuse " << verb << ": module " << verb_module(verb) << ", stage " << verb << ": " << e.what()
              << '\n';
    return 2;
  }
  return 2;
}
