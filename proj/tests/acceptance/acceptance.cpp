// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "oracles/ap_oracle.hpp"
#include "oracles/deformable_oracle.hpp"
#include "oracles/iou_oracle.hpp"
#include "oracles/tavfe_oracle.hpp"
#include "oracles/tensor_oracle.hpp"
#include "radfuse/check_suite.hpp"
#include "radfuse/eval_metrics.hpp"
#include "radfuse/pipeline.hpp"
#include "radfuse/synth.hpp"

using namespace radfuse;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("radfuse_accept_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

/// relative path -> bytes for every regular file under dir
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

FrameInputs synth_inputs(const PipelineConfig& cfg, std::uint64_t seed) {
  const auto scene = synth_scene(seed, 4, 60);
  FrameInputs in;
  in.radar = scene.radar;
  in.mask = scene.mask;
  in.cal = scene.cal;
  in.pyramid = synthesize_pyramid(scene.image, cfg.pyramid_levels, cfg.pyramid_channels, cfg.seed,
                                  cfg.pyramid_base_stride);
  return in;
}

// ---------------------------------------------------------------------------

Verdict geometry_round_trip() {
  SplitMix64 rng(11);
  Calibration c = synth_calibration(960, 600, 800);
  c.intr[1] = 0.7;
  c.intr[3] = 3.0;
  const double t = 0.1;
  const double r0[9] = {std::cos(t), 0, std::sin(t), 0, 1, 0, -std::sin(t), 0, std::cos(t)};
  const double base[9] = {0, -1, 0, 0, 0, -1, 1, 0, 0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += r0[i * 3 + k] * base[k * 3 + j];
      c.r2c[static_cast<std::size_t>(i * 4 + j)] = acc;
    }
  c.r2c[3] = 0.3;
  c.r2c[7] = -0.2;
  double worst = 0;
  int kept = 0;
  while (kept < 10000) {
    const Vec3 p{rng.uniform(0.5, 70), rng.uniform(-30, 30), rng.uniform(-4, 4)};
    const auto q = project(p, c);
    if (!q) continue;
    ++kept;
    const Vec3 b = reproject(*q, c);
    worst = std::max(worst, std::hypot(b[0] - p[0], b[1] - p[1], b[2] - p[2]));
  }
  return {worst < 1e-6, fmt("max error %.3g over %d points", worst, kept)};
}

/// Foreground of one instance as seen by the homogeneous oracle.
std::map<int, std::vector<oracle::Pixel>> oracle_foreground(const SyntheticScene& s) {
  std::map<int, std::vector<oracle::Pixel>> fg;
  for (const auto& [id, cls] : s.mask.classes) fg[id];
  for (const auto& p : s.radar.points) {
    const auto px = oracle::pinhole(p.xyz, s.cal);
    if (!px) continue;
    const long c = std::lround(px->u), r = std::lround(px->v);
    if (c < 0 || r < 0 || c >= s.mask.width || r >= s.mask.height) continue;
    const int id = s.mask.labels[static_cast<std::size_t>(r * s.mask.width + c)];
    if (id > 0) fg[id].push_back(*px);
  }
  return fg;
}

bool region_nonempty(const SyntheticScene& s, int id, const std::vector<oracle::Pixel>& fg, double radius) {
  for (int r = 0; r < s.mask.height; ++r)
    for (int c = 0; c < s.mask.width; ++c) {
      if (s.mask.labels[static_cast<std::size_t>(r * s.mask.width + c)] != id) continue;
      const bool near = std::any_of(fg.begin(), fg.end(), [&](const oracle::Pixel& f) {
        return std::hypot(c - f.u, r - f.v) < radius;
      });
      if (!near) return true;
    }
  return false;
}

bool inside_instance(const InstanceMask& m, int id, double u, double v) {
  for (long r = static_cast<long>(std::floor(v - 0.5)); r <= static_cast<long>(std::ceil(v + 0.5)); ++r)
    for (long c = static_cast<long>(std::floor(u - 0.5)); c <= static_cast<long>(std::ceil(u + 0.5)); ++c) {
      if (std::abs(u - c) > 0.5 || std::abs(v - r) > 0.5) continue;
      if (m.label(static_cast<int>(c), static_cast<int>(r)) == id) return true;
    }
  return false;
}

Verdict densify_counts() {
  const SamplerConfig sc;
  SynthConfig near;
  near.x_min = 5;
  near.x_max = 12;
  near.min_points = 20;
  int scenes = 0, tried = 0, outside = 0;
  std::size_t wrong = 0, instances = 0, virt = 0;
  for (std::uint64_t seed = 0; scenes < 30 && seed < 400; ++seed) {
    ++tried;
    const auto s = synth_scene(seed, 3, 30, near);
    const auto fg = oracle_foreground(s);
    bool eligible = !fg.empty();
    for (const auto& [id, pts] : fg) eligible = eligible && pts.size() >= 4 && region_nonempty(s, id, pts, sc.radius);
    if (!eligible) continue;
    ++scenes;
    const DensifyResult r = densify_frame(s.radar.points, s.mask, s.cal, sc, Schema::kVod7, 3, seed);
    std::map<int, std::size_t> per;
    for (const auto& p : r.points) {
      if (!p.is_virtual()) continue;
      ++per[p.instance];
      ++virt;
      const auto px = oracle::pinhole(p.xyz, s.cal);
      if (!px || !inside_instance(s.mask, p.instance, px->u, px->v)) ++outside;
    }
    for (const auto& [id, pts] : fg) {
      ++instances;
      if (per[id] != static_cast<std::size_t>(5 * sc.tau)) ++wrong;
    }
  }
  const bool pass = scenes >= 10 && wrong == 0 && outside == 0;
  return {pass, fmt("%d eligible scenes of %d, %zu instances, %zu off count, %zu virtual points, %d outside mask",
                    scenes, tried, instances, wrong, virt, outside)};
}

Verdict depth_subset() {
  const SamplerConfig sc;
  std::size_t checked = 0, bad = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = synth_scene(seed, 4, 60);
    const auto fg = oracle_foreground(s);
    const DensifyResult r = densify_frame(s.radar.points, s.mask, s.cal, sc, Schema::kVod7, 3, seed);
    for (const auto& p : r.points) {
      if (!p.is_virtual()) continue;
      ++checked;
      const auto it = fg.find(p.instance);
      const bool copied = it != fg.end() && std::any_of(it->second.begin(), it->second.end(), [&](const auto& f) {
                            return std::abs(f.d - p.source_depth) <= 1e-9 * std::max(1.0, f.d);
                          });
      const auto px = oracle::pinhole(p.xyz, s.cal);
      if (!copied || !px || std::abs(px->d - p.source_depth) > 1e-9 * std::max(1.0, px->d)) ++bad;
    }
  }
  return {checked > 0 && bad == 0, fmt("%zu virtual depths over 100 seeds, %zu not among foreground", checked, bad)};
}

std::vector<HybridPoint> toy_voxel_points(SplitMix64& rng, const GridSpec& g) {
  std::vector<HybridPoint> pts;
  const std::array<Vec3, 3> base{{{10.0, 0.0, 0.0}, {20.0, 5.0, 1.0}, {30.0, -5.0, -1.0}}};
  const int counts[3] = {1, 4, 13};
  for (int v = 0; v < 3; ++v)
    for (int i = 0; i < counts[v]; ++i) {
      HybridPoint p;
      p.xyz = {base[v][0] + rng.uniform(0, g.voxel[0]), base[v][1] + rng.uniform(0, g.voxel[1]),
               base[v][2] + rng.uniform(0, g.voxel[2])};
      const float a = static_cast<float>(rng.uniform(-2, 2));
      p.attrs = {a, -a, 2 * a, 1.0f};
      p.semantic = {1, 1, 1};
      p.type = rng.uniform() < 0.5 ? std::array<float, 2>{1, 0} : std::array<float, 2>{0, 1};
      pts.push_back(p);
    }
  return pts;
}

Verdict tavfe_oracle() {
  const GridSpec g;
  const TavfeConfig cfg;
  double worst = 0;
  bool identical = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SplitMix64 rng(seed);
    const VoxelSet set = voxelize(toy_voxel_points(rng, g), g, cfg.max_points);
    if (set.size() != 3) return {false, fmt("seed %llu gave %zu voxels", static_cast<unsigned long long>(seed), set.size())};
    ParamStore store;
    declare_tavfe(store, set.channels, cfg);
    store.init(seed);
    const VoxelFeatures vf = tavfe(set, g, store, cfg);
    for (std::size_t k = 0; k < 3; ++k) {
      oracle::Rows raw;
      for (int j = 0; j < set.counts[k]; ++j) {
        oracle::Vec row;
        for (std::size_t c = 0; c < set.channels; ++c) row.push_back(set.points(k, static_cast<std::size_t>(j), c));
        raw.push_back(row);
      }
      const Vec3 vc = g.center(set.coords[k].x, set.coords[k].y, set.coords[k].z);
      const oracle::Vec ref = oracle::encode_voxel(raw, {vc[0], vc[1], vc[2]}, store, cfg);
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - vf.features(k, i)));

      const Tensor clean = augment(set, k, g);
      Tensor noisy = clean;
      for (std::size_t r = static_cast<std::size_t>(set.counts[k]); r < cfg.max_points; ++r)
        for (float& x : noisy.row(r)) x = static_cast<float>(rng.uniform(-1e3, 1e3));
      const Vec3 c = centroid(set, k);
      identical = identical && encode_voxel<float>(clean, static_cast<std::size_t>(set.counts[k]), c, store, cfg) ==
                                   encode_voxel<float>(noisy, static_cast<std::size_t>(set.counts[k]), c, store, cfg);
    }
  }
  return {worst < 1e-5 && identical,
          fmt("max abs error %.3g over 50 seeds, padding %s", worst, identical ? "bit-identical" : "CHANGED output")};
}

DeformableConfig collapse_config() {
  DeformableConfig one;
  one.heads = one.levels = one.points = 1;
  one.query_dim = one.value_dim = one.head_dim = one.ffn_hidden = one.out_dim = 4;
  return one;
}

ParamStore collapse_store(const DeformableConfig& one, const std::string& path, std::uint64_t seed) {
  ParamStore s;
  declare_deformable(s, path, one);
  s.init(seed);
  for (float& w : s.mutable_linear(path + ".offset").weight.values()) w = 0;
  for (const std::string n : {".value.m0", ".output.m0"}) {
    auto& l = s.mutable_linear(path + n);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) l.weight(r, c) = r == c ? 1.0f : 0.0f;
  }
  return s;
}

double collapse_error(const DeformableTrace<float>& tr, const std::vector<Vec3>& refs, const FeaturePyramid& pyr,
                      const Calibration& cal) {
  double worst = 0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto px = oracle::pinhole(refs[k], cal);
    if (!px) continue;
    const double st = pyr.levels[0].stride;
    const oracle::Vec ref = oracle::bilinear(pyr.levels[0].map, px->u / st, px->v / st);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - tr.image_features(k, i)));
  }
  return worst;
}

Verdict attention_contracts() {
  // production attention shape: 4 heads, 4 points, 5 levels
  const DeformableConfig cfg = PipelineConfig::vod().attention();
  const Calibration cal = toy_calibration();
  double sum_err = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitMix64 rng(seed);
    const FeaturePyramid pyr = toy_pyramid(cfg.levels, cfg.value_dim, rng);
    ParamStore s;
    declare_deformable(s, "a", cfg);
    s.init(seed);
    std::vector<Vec3> refs;
    for (int i = 0; i < 16; ++i) refs.push_back(toy_reference(rng));
    DeformableTrace<float> tr;
    deformable_fuse<float>(random_tensor({16, cfg.query_dim}, rng, -5, 5), refs, pyr, cal, s, "a", cfg, 2, &tr);
    const std::size_t per = cfg.levels * cfg.points;
    for (std::size_t h = 0; h < tr.weights.size() / per; ++h) {
      double sum = 0;
      for (std::size_t i = 0; i < per; ++i) sum += tr.weights[h * per + i];
      sum_err = std::max(sum_err, std::abs(sum - 1.0));
    }
  }

  const DeformableConfig one = collapse_config();
  SplitMix64 rng(77);
  const FeaturePyramid pyr = toy_pyramid(1, 4, rng);

  const ParamStore ss = collapse_store(one, "hsfp.x3.qgslf", 7);
  std::vector<Vec3> refs;
  for (int i = 0; i < 40; ++i) refs.push_back(toy_reference(rng));
  DeformableTrace<float> ts;
  qgslf_block<float>(random_tensor({40, 4}, rng), refs, pyr, cal, ss, "hsfp.x3.qgslf", one, 1, &ts);
  const double slf = collapse_error(ts, refs, pyr, cal);

  const ParamStore ps = collapse_store(one, "plfe.qgplf", 8);
  const ProposalGrid g = build_proposal_grid({0.2, 0.1, 6, 1.6, 1.2, 1.0, 0.3}, {}, {2, 2, 2});
  DeformableTrace<float> tp;
  qgplf_block<float>(random_tensor({8, 4}, rng), {g}, pyr, cal, ps, one, 1, &tp, "plfe.qgplf");
  const double plf = collapse_error(tp, g.centers, pyr, cal);

  return {sum_err <= 1e-6 && slf <= 1e-5 && plf <= 1e-5,
          fmt("head sum error %.3g, collapse error QGSLF %.3g QGPLF %.3g", sum_err, slf, plf)};
}

Verdict jvp_all() {
  Verdict v;
  for (const std::string op :
       {"linear", "softmax_over", "ffn", "sigmoid", "bilinear_sample", "qgslf_block", "qgplf_block"}) {
    double worst = 0;
    int fails = 0;
    const auto reports = jvp_suite(op, 50);
    for (const auto& r : reports) {
      worst = std::max(worst, r.max_rel_err);
      if (!r.pass || r.kink || r.max_rel_err >= 1e-4) ++fails;
    }
    v.pass = v.pass && fails == 0 && reports.size() == 50;
    v.detail += fmt("%s%s %.2g", v.detail.empty() ? "" : ", ", op.c_str(), worst);
    if (fails) v.detail += fmt(" (%d failed)", fails);
  }
  v.detail = "max rel error " + v.detail;
  return v;
}

Verdict iou_oracle() {
  SplitMix64 rng(2024);
  double worst = 0;
  for (int i = 0; i < 500; ++i) {
    const Box3D a{rng.uniform(-5, 5), rng.uniform(-5, 5), 0, rng.uniform(0.5, 4), rng.uniform(0.5, 2), 1,
                  rng.uniform(-3.1, 3.1)};
    const Box3D b{a.x + rng.uniform(-1.5, 1.5), a.y + rng.uniform(-1.5, 1.5), 0, rng.uniform(0.5, 4),
                  rng.uniform(0.5, 2), 1, rng.uniform(-3.1, 3.1)};
    worst = std::max(worst, std::abs(bev_iou(a, b) - oracle::mc_bev_iou(a, b, 5000 + static_cast<std::uint64_t>(i))));
  }
  const Box3D u{0, 0, 0, 1, 1, 1, 0};
  Box3D shifted = u, lifted = u;
  shifted.x = 0.5;
  lifted.z = 0.5;
  const double e_bev = std::abs(bev_iou(u, shifted) - 1.0 / 3.0);
  const double e_3d = std::abs(iou3d(u, lifted) - 1.0 / 3.0);
  return {worst <= 2e-3 && e_bev <= 1e-9 && e_3d <= 1e-9,
          fmt("max |IoU - MC| %.3g over 500 pairs, half-overlap error BEV %.2g 3D %.2g", worst, e_bev, e_3d)};
}

Verdict ap_enumeration() {
  auto box = [](double x, double y, double score) { return Box3D{x, y, 0, 1, 1, 1, 0, score, 0}; };
  const std::vector<Box3D> gts{box(0, 0, 1), box(5, 0, 1)};
  // candidate positions: exact hits, duplicates, IoU 1/3 hits and misses
  const std::vector<Box3D> pool{box(0, 0, 0), box(5, 0, 0), box(0.05, 0, 0), box(5.5, 0, 0), box(20, 0, 0),
                                box(0.5, 0, 0)};
  const double scores[3] = {0.9, 0.6, 0.3};
  int cases = 0, mismatch = 0;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = 0; j < pool.size(); ++j)
      for (std::size_t k = 0; k < pool.size(); ++k) {
        if (i == j || j == k || i == k) continue;
        std::vector<Box3D> dets{pool[i], pool[j], pool[k]};
        for (int d = 0; d < 3; ++d) dets[static_cast<std::size_t>(d)].score = scores[d];
        for (const double thr : {0.5, 0.25}) {
          ++cases;
          if (average_precision(dets, gts, bev_iou, thr).ap != oracle::enumerate_ap(dets, gts, bev_iou, thr))
            ++mismatch;
        }
      }
  const double perfect = average_precision(gts, gts, bev_iou, 0.5).ap;
  const bool thresholds = default_iou_thresholds() == std::vector<double>{0.5, 0.25, 0.25, 0.5} &&
                          PipelineConfig::vod().iou_thresholds == default_iou_thresholds();
  return {mismatch == 0 && perfect == 1.0 && thresholds,
          fmt("%d/%d cases match enumeration, perfect AP %.17g, thresholds %s", cases - mismatch, cases, perfect,
              thresholds ? "{0.5, 0.25, 0.25, 0.5}" : "WRONG")};
}

int run_cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string(RADFUSE_CLI) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Verdict determinism() {
  PipelineConfig cfg;
  cfg.seed = cfg.sampler.seed = 42;
  const ParamStore store = declare_model(cfg);
  const FrameInputs in = synth_inputs(cfg, 42);
  std::vector<std::map<std::string, std::string>> dumps;
  for (const unsigned w : {1u, 8u, 1u, 8u}) {
    cfg.workers = w;
    const fs::path d = scratch("lib_" + std::to_string(dumps.size()));
    dump_stages(run_pipeline(cfg, in, store), cfg, d, {"all"});
    dumps.push_back(tree(d));
  }
  const bool lib = dumps[0] == dumps[1] && dumps[0] == dumps[2] && dumps[0] == dumps[3];

  std::vector<std::map<std::string, std::string>> runs;
  bool exits = true;
  for (const int w : {1, 8, 1, 8}) {
    const fs::path d = scratch("cli_" + std::to_string(runs.size()));
    const fs::path out = d / "out";
    exits = exits && run_cli(fmt("--workers %d pipeline --synth 42 --dump-stage all --out %s", w, out.c_str()), d) == 0;
    runs.push_back(fs::exists(out) ? tree(out) : std::map<std::string, std::string>{});
  }
  const bool cli = exits && !runs[0].empty() && runs[0] == runs[1] && runs[0] == runs[2] && runs[0] == runs[3];
  return {lib && cli && !dumps[0].empty(),
          fmt("library %zu files %s, CLI %zu files %s (workers 1/8, two runs each)", dumps[0].size(),
              lib ? "identical" : "DIFFER", runs[0].size(), cli ? "identical" : "DIFFER")};
}

Verdict stage_contracts() {
  PipelineConfig cfg;
  cfg.seed = cfg.sampler.seed = 42;
  const ParamStore store = declare_model(cfg);
  const FrameInputs in = synth_inputs(cfg, 42);
  const auto out = run_pipeline(cfg, in, store);
  const std::size_t np = out.proposals.size(), c = cfg.backbone_width, cells = 6 * 6 * 6;
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  expect(cfg.heads == 4 && cfg.points == 4, "heads/points");
  expect(in.pyramid.levels.size() == 5 && cfg.pyramid_levels == 5, "pyramid levels");
  expect(cfg.roi_grid == GridDims{6, 6, 6}, "roi grid");
  expect(cfg.hsfp_levels == std::vector<int>{3, 4}, "hsfp levels");
  const std::size_t slots = 4 * 5 * 4;
  for (const std::string& p : {hsfp_path(3), hsfp_path(4), std::string("plfe.qgplf")}) {
    expect(store.linear(p + ".offset").fan_out() == 2 * slots && store.linear(p + ".attn").fan_out() == slots,
           p + " slots");
  }
  expect(!store.contains(hsfp_path(1) + ".offset") && !store.contains(hsfp_path(2) + ".offset"), "extra levels");
  expect(np > 0, "no proposals");

  std::map<std::string, std::vector<std::size_t>> dims;
  std::size_t nonfinite = 0;
  for (const auto& s : out.stages) {
    dims[s.name] = s.dims;
    nonfinite += s.nonfinite;
  }
  for (const auto& n : stage_names()) expect(dims.count(n) > 0, "missing " + n);
  using D = std::vector<std::size_t>;
  const std::size_t width = 3 + 4 + 3 + 2;  // xyz, VoD attributes, class one-hot, type
  expect(dims["densify"] == D{out.dense.points.size(), width}, "densify");
  expect(dims["voxelize"] == D{out.voxels.size(), cfg.tavfe.max_points, width}, "voxelize");
  expect(dims["tavfe"] == D{out.voxels.size(), 32}, "tavfe");
  for (int i = 1; i <= 4; ++i) expect(dims["x" + std::to_string(i)].size() == 2 && dims["x" + std::to_string(i)][1] == c, "x" + std::to_string(i));
  expect(dims["proposals"] == D{np, 7}, "proposals");
  expect(dims["hsfp"] == D{np, 2 * cells * c}, "hsfp");
  expect(dims["grid_encode"] == D{np * cells, c}, "grid_encode");
  expect(dims["qgplf"] == D{np, cells * c}, "qgplf");
  expect(dims["plfe"] == D{np, 2 * cfg.msa_dim}, "plfe");
  expect(dims["head"] == D{np, 8}, "head");
  expect(dims["detections"].size() == 2 && dims["detections"][1] == 9, "detections");
  expect(nonfinite == 0, "non-finite values");
  expect(out.slp.all_finite() && out.plp.all_finite() && out.xp.all_finite() && out.vfe.features.all_finite(),
         "non-finite tensors");

  std::string detail = fmt("%zu stages, %zu proposals, hsfp [%zu, %zu], qgplf [%zu, %zu], %zu non-finite",
                           out.stages.size(), np, dims["hsfp"][0], dims["hsfp"][1], dims["qgplf"][0],
                           dims["qgplf"][1], nonfinite);
  for (const auto& b : bad) detail += "; bad " + b;
  return {bad.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::function<Verdict()>> criteria{geometry_round_trip, densify_counts,   depth_subset,
                                                       tavfe_oracle,        attention_contracts, jvp_all,
                                                       iou_oracle,          ap_enumeration,   determinism,
                                                       stage_contracts};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("criterion %zu: %s %s\n", i + 1, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
