// SPDX-License-Identifier: Apache-2.0
#pragma once

// Self-check runner: module invariants and derivative checks on small seeded
// inputs, reported as JSON. Used by `radfuse check`.

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "radfuse/eval_metrics.hpp"
#include "radfuse/jvp.hpp"
#include "radfuse/pipeline.hpp"
#include "radfuse/synth.hpp"

namespace radfuse {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;  // the measured quantity (error, count, ...)
  std::string detail;
};

struct CheckOptions {
  int jvp_seeds = 50;
  bool inject_fault = false;  // breaks softmax normalization for the run
  unsigned workers = 4;       // for the determinism comparison
};

struct CheckReport {
  std::vector<CheckResult> results;
  double seconds = 0.0;

  bool ok() const {
    for (const auto& r : results)
      if (!r.pass) return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    std::size_t failed = 0;
    j["checks"] = nlohmann::json::array();
    for (const auto& r : results) {
      failed += r.pass ? 0 : 1;
      j["checks"].push_back({{"name", r.name}, {"pass", r.pass}, {"value", r.value}, {"detail", r.detail}});
    }
    j["passed"] = results.size() - failed;
    j["failed"] = failed;
    j["ok"] = failed == 0;
    j["seconds"] = seconds;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Small seeded fixtures, shared with the derivative checks.

inline Tensor random_tensor(const std::vector<std::size_t>& dims, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(dims);
  for (float& x : t.values()) x = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline TensorD random_tensor_d(const std::vector<std::size_t>& dims, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(dims);
  for (double& x : t.values()) x = rng.uniform(lo, hi);
  return t;
}

/// Identity extrinsics, f = 100, principal point (32, 24) in a 64 x 48 image.
inline Calibration toy_calibration() { return Calibration::pinhole(100.0, 100.0, 32.0, 24.0); }

inline FeaturePyramid toy_pyramid(std::size_t levels, std::size_t channels, SplitMix64& rng) {
  FeaturePyramid p;
  for (std::size_t j = 0; j < levels; ++j) {
    const double stride = 4.0 * static_cast<double>(1u << j);
    const std::size_t h = static_cast<std::size_t>(std::ceil(48.0 / stride)) + 1;
    const std::size_t w = static_cast<std::size_t>(std::ceil(64.0 / stride)) + 1;
    p.levels.push_back({random_tensor({h, w, channels}, rng), stride});
  }
  p.validate();
  return p;
}

inline DeformableConfig toy_attention(std::size_t levels = 2) {
  DeformableConfig d;
  d.heads = 2;
  d.points = 2;
  d.levels = levels;
  d.query_dim = 6;
  d.value_dim = 4;
  d.head_dim = 3;
  d.ffn_hidden = 8;
  d.out_dim = 5;
  return d;
}

/// A point projecting to the toy image interior at depth 4 to 8 m.
inline Vec3 toy_reference(SplitMix64& rng) {
  const double z = rng.uniform(4.0, 8.0);
  return {rng.uniform(-0.2, 0.2) * z, rng.uniform(-0.15, 0.15) * z, z};
}

/// Resamples x until no kink lies inside the stencil, up to 20 draws.
inline JvpReport jvp_trial(const std::string& op, const JvpContext& ctx, const std::vector<std::size_t>& dims,
                           SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  JvpReport r;
  for (int attempt = 0; attempt < 20; ++attempt) {
    const TensorD x = random_tensor_d(dims, rng, lo, hi);
    const TensorD v = random_tensor_d(dims, rng);
    r = jvp_check(op, x, v, ctx);
    if (!r.kink) return r;
  }
  return r;
}

/// Runs `seeds` independent derivative checks of `op` on toy inputs.
inline std::vector<JvpReport> jvp_suite(const std::string& op, int seeds) {
  std::vector<JvpReport> out;
  for (int s = 0; s < seeds; ++s) {
    SplitMix64 rng(stream_key(std::uint64_t{0x6a7670}, op.size(), static_cast<std::uint64_t>(s)));
    ParamStore store;
    JvpContext ctx;
    ctx.store = &store;
    if (op == "linear") {
      store.declare_linear("l", 5, 4);
      store.init(rng.next());
      for (float& b : store.mutable_linear("l").bias.values()) b = static_cast<float>(rng.uniform(-1, 1));
      ctx.path = "l";
      out.push_back(jvp_trial(op, ctx, {3, 5}, rng));
    } else if (op == "softmax_over") {
      ctx.axes = {1};
      out.push_back(jvp_trial(op, ctx, {4, 5}, rng, -3.0, 3.0));
    } else if (op == "sigmoid") {
      out.push_back(jvp_trial(op, ctx, {2, 6}, rng, -4.0, 4.0));
    } else if (op == "ffn") {
      store.declare_ffn("f", 6, 8, 3);
      store.init(rng.next());
      ctx.path = "f";
      out.push_back(jvp_trial(op, ctx, {2, 6}, rng));
    } else if (op == "bilinear_sample") {
      const Tensor f = random_tensor({7, 9, 3}, rng);
      ctx.feature = &f;
      // interior only
      JvpReport r;
      for (int attempt = 0; attempt < 20; ++attempt) {
        TensorD x({2});
        x[0] = rng.uniform(0.5, 7.5);
        x[1] = rng.uniform(0.5, 5.5);
        r = jvp_check(op, x, random_tensor_d({2}, rng), ctx);
        if (!r.kink) break;
      }
      out.push_back(r);
    } else if (op == "qgslf_block" || op == "qgplf_block") {
      const DeformableConfig cfg = toy_attention(op == "qgslf_block" ? 1 : 2);
      const FeaturePyramid pyr = toy_pyramid(cfg.levels, cfg.value_dim, rng);
      const Calibration cal = toy_calibration();
      declare_deformable(store, "b", cfg);
      store.init(rng.next());
      ctx.path = "b";
      ctx.pyramid = &pyr;
      ctx.cal = &cal;
      ctx.attention = cfg;
      std::vector<std::size_t> dims;
      if (op == "qgslf_block") {
        ctx.references = {toy_reference(rng)};
        dims = {1, cfg.query_dim};
      } else {
        Box3D b;
        b.z = rng.uniform(5.0, 7.0);
        b.l = b.w = b.h = 0.8;
        b.yaw = rng.uniform(-1.0, 1.0);
        ctx.grids = {build_proposal_grid(b, {}, {2, 2, 2})};
        dims = {8, cfg.query_dim};
      }
      out.push_back(jvp_trial(op, ctx, dims, rng));
    } else {
      throw std::invalid_argument("jvp_suite: unsupported op '" + op + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline CheckResult check(const std::string& name, bool pass, double value, std::string detail = {}) {
  return {name, pass, value, std::move(detail)};
}

inline double max_head_sum_error(const std::vector<float>& w, const DeformableConfig& cfg) {
  const std::size_t per_head = cfg.levels * cfg.points;
  double worst = 0.0;
  for (std::size_t off = 0; off + per_head <= w.size(); off += per_head) {
    double s = 0.0;
    for (std::size_t i = 0; i < per_head; ++i) s += w[off + i];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace detail

inline CheckReport run_checks(const CheckOptions& opt = {}) {
  using detail::check;
  const auto t0 = std::chrono::steady_clock::now();
  struct FaultGuard {
    explicit FaultGuard(bool on) { fault::break_softmax.store(on); }
    ~FaultGuard() { fault::break_softmax.store(false); }
  } guard(opt.inject_fault);

  CheckReport rep;
  auto add = [&](CheckResult r) { rep.results.push_back(std::move(r)); };
  SplitMix64 rng(0x636865636bull);

  // tensor_kernel
  {
    double worst = 0.0, shift = 0.0;
    for (int s = 0; s < 20; ++s) {
      const TensorD x = random_tensor_d({4, 5, 3}, rng, -5, 5);
      const TensorD y = softmax_over<double>(x, {1, 2});
      TensorD xs = x;
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t k = 0; k < 15; ++k) xs[i * 15 + k] += 3.0 * static_cast<double>(i);
      const TensorD ys = softmax_over<double>(xs, {1, 2});
      for (std::size_t i = 0; i < 4; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 15; ++k) {
          sum += y[i * 15 + k];
          shift = std::max(shift, std::abs(y[i * 15 + k] - ys[i * 15 + k]));
        }
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    }
    add(check("tensor.softmax_normalized", worst <= 1e-6, worst));
    add(check("tensor.softmax_shift_invariant", shift <= 1e-6, shift));
  }
  {
    double worst = 0.0;
    bool open_interval = true;
    for (int i = 0; i < 1000; ++i) {
      const float x = static_cast<float>(rng.uniform(-40, 40));
      const float a = sigmoid(x), b = sigmoid(-x);
      worst = std::max(worst, std::abs(static_cast<double>(a) + b - 1.0));
      open_interval = open_interval && a > 0.0f && a < 1.0f;
    }
    add(check("tensor.sigmoid_symmetry", worst <= 1e-6 && open_interval, worst));
  }
  {
    const Tensor f = random_tensor({5, 6, 3}, rng);
    bool exact = true;
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 6; ++c) {
        const Tensor s = bilinear_sample(f, static_cast<double>(c), static_cast<double>(r));
        for (std::size_t k = 0; k < 3; ++k) exact = exact && s[k] == f(r, c, k);
      }
    const Tensor out = bilinear_sample(f, -5.0, 0.0);
    bool zero = true;
    for (const float x : out.values()) zero = zero && x == 0.0f;
    add(check("tensor.bilinear_integer_exact", exact, exact ? 0 : 1));
    add(check("tensor.bilinear_border_zero", zero, zero ? 0 : 1));
  }
  {
    ParamStore a, b;
    for (ParamStore* s : {&a, &b}) {
      s->declare_linear("x.fc", 7, 5);
      s->declare_ffn("y", 4, 6, 2);
      s->init(99);
    }
    add(check("tensor.init_deterministic", a == b, a == b ? 0 : 1));
  }
  for (const auto& op : jvp_ops()) {
    const auto reports = jvp_suite(op, opt.jvp_seeds);
    double worst = 0.0;
    int fails = 0;
    for (const auto& r : reports) {
      worst = std::max(worst, r.max_rel_err);
      fails += r.pass ? 0 : 1;
    }
    add(check("tensor.jvp." + op, fails == 0, worst,
              std::to_string(reports.size() - static_cast<std::size_t>(fails)) + "/" + std::to_string(reports.size()) +
                  " seeds pass"));
  }

  // geometry
  {
    const Calibration cal = synth_calibration(960, 600, 800);
    const Reprojector lift(cal);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const Vec3 p{rng.uniform(1.0, 60.0), rng.uniform(-30, 30), rng.uniform(-3, 3)};
      const auto q = project(p, cal);
      if (!q) continue;
      const Vec3 back = lift(*q);
      worst = std::max(worst, std::hypot(back[0] - p[0], back[1] - p[1], back[2] - p[2]));
    }
    add(check("geometry.roundtrip", worst < 1e-6, worst));
  }

  // densify
  {
    SynthConfig sc;
    sc.x_min = 5.0;
    sc.x_max = 9.0;
    int eligible = 0, exact = 0;
    double worst_px = 0.0;
    bool depth_subset = true;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto scene = synth_scene(seed, 3, 20, sc);
      SamplerConfig cfg;
      cfg.seed = seed;
      const auto res = densify_frame(scene.radar.points, scene.mask, scene.cal, cfg, Schema::kVod7, 3, seed);
      const auto fg = filter_foreground(scene.radar.points, scene.mask, scene.cal);
      for (const auto& ir : res.instances) {
        const auto& f = fg.at(ir.instance);
        if (f.size() >= 4 && !uniform_region(f, scene.mask, ir.instance, cfg.radius).empty()) {
          ++eligible;
          exact += ir.virtual_points == 250 ? 1 : 0;
        }
      }
      for (const auto& p : res.points) {
        if (!p.is_virtual()) continue;
        const auto q = project(p.xyz, scene.cal);
        if (!q) {
          worst_px = 1e9;
          continue;
        }
        const int l = scene.mask.label_at(q->u, q->v);
        worst_px = std::max(worst_px, l == p.instance ? 0.0 : 1e9);
        bool found = false;
        for (const auto& f : fg.at(p.instance)) found = found || f.d == p.source_depth;
        depth_subset = depth_subset && found;
      }
    }
    add(check("densify.virtual_count", eligible > 0 && exact == eligible, exact,
              std::to_string(exact) + "/" + std::to_string(eligible) + " eligible instances"));
    add(check("densify.inside_mask", worst_px == 0.0, worst_px));
    add(check("densify.depth_copy", depth_subset, depth_subset ? 0 : 1));
  }

  // voxel_encoder
  {
    GridSpec grid;
    std::vector<HybridPoint> pts;
    for (int i = 0; i < 5; ++i) {
      HybridPoint p;
      p.xyz = {10.0 + 0.01 * i, 0.01 * i, 0.0};
      p.attrs = {1, 2, 3, 4};
      p.semantic = {1, 1, 1};
      pts.push_back(p);
    }
    const VoxelSet set = voxelize(pts, grid, 10);
    TavfeConfig tc;
    ParamStore store;
    declare_tavfe(store, set.channels, tc);
    store.init(11);
    const Tensor clean = augment(set, 0, grid);
    Tensor noisy = clean;
    for (std::size_t r = static_cast<std::size_t>(set.counts[0]); r < tc.max_points; ++r)
      for (float& x : noisy.row(r)) x = static_cast<float>(rng.uniform(-100, 100));
    const auto c0 = centroid(set, 0);
    const auto a = encode_voxel<float>(clean, static_cast<std::size_t>(set.counts[0]), c0, store, tc);
    const auto b = encode_voxel<float>(noisy, static_cast<std::size_t>(set.counts[0]), c0, store, tc);
    add(check("voxel.padding_invariant", a == b, a == b ? 0 : 1));
  }

  // scene_fusion and proposal_fusion attention contracts
  {
    const DeformableConfig cfg = toy_attention(2);
    const FeaturePyramid pyr = toy_pyramid(cfg.levels, cfg.value_dim, rng);
    ParamStore store;
    declare_deformable(store, "q", cfg);
    store.init(5);
    const Tensor queries = random_tensor({6, cfg.query_dim}, rng);
    std::vector<Vec3> refs;
    for (int i = 0; i < 6; ++i) refs.push_back(toy_reference(rng));
    DeformableTrace<float> tr;
    deformable_fuse<float>(queries, refs, pyr, toy_calibration(), store, "q", cfg, 1, &tr);
    const double e = detail::max_head_sum_error(tr.weights, cfg);
    add(check("scene.attention_normalized", e <= 1e-6, e));

    // Collapse: one head, level and point; zero offsets; identity value maps.
    DeformableConfig one;
    one.heads = one.levels = one.points = 1;
    one.query_dim = one.value_dim = one.head_dim = 4;
    one.ffn_hidden = 4;
    one.out_dim = 4;
    ParamStore cs;
    declare_deformable(cs, "c", one);
    cs.init(6);
    for (const char* name : {"c.offset"}) {
      for (float& w : cs.mutable_linear(name).weight.values()) w = 0.0f;
    }
    for (const char* name : {"c.value.m0", "c.output.m0"}) {
      auto& l = cs.mutable_linear(name);
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) l.weight(r, c) = r == c ? 1.0f : 0.0f;
    }
    FeaturePyramid single{{pyr.levels[0]}};
    single.levels[0].map = random_tensor({pyr.levels[0].map.dim(0), pyr.levels[0].map.dim(1), 4}, rng);
    const Tensor q4 = random_tensor({6, 4}, rng);
    DeformableTrace<float> ct;
    deformable_fuse<float>(q4, refs, single, toy_calibration(), cs, "c", one, 1, &ct);
    double worst = 0.0;
    for (std::size_t k = 0; k < refs.size(); ++k) {
      const auto px = project(refs[k], toy_calibration());
      const Tensor s = bilinear_sample(single.levels[0].map, px->u / single.levels[0].stride, px->v / single.levels[0].stride);
      for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(static_cast<double>(s[i]) - ct.image_features(k, i)));
    }
    add(check("scene.offset_collapse", worst <= 1e-5, worst));

    MsaTrace<float> mt;
    ParamStore ms;
    ms.declare_linear("m.proj_plp", 10, 8);
    ms.declare_linear("m.proj_slp", 12, 8);
    for (const char* n : {"q", "k", "v", "o"}) ms.declare_linear(std::string("m.") + n, 8, 8);
    ms.declare_norm("m.norm", 8);
    ms.init(8);
    plfe_fuse<float>(random_tensor({3, 10}, rng), random_tensor({3, 12}, rng), ms, 2, 1, &mt, "m");
    double msa = 0.0;
    for (std::size_t i = 0; i + 1 < mt.attention.size(); i += 2) {
      msa = std::max(msa, std::abs(static_cast<double>(mt.attention[i]) + mt.attention[i + 1] - 1.0));
    }
    add(check("proposal.msa_normalized", msa <= 1e-6, msa));
  }
  {
    double worst = 0.0;
    for (const auto coding : {ResidualCoding::kAdditiveLogSize, ResidualCoding::kDiagonal}) {
      for (int i = 0; i < 200; ++i) {
        const Box3D gt{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-2, 2), rng.uniform(0.3, 5),
                       rng.uniform(0.3, 3),  rng.uniform(0.5, 3),  rng.uniform(-3.1, 3.1)};
        const Box3D base{gt.x + rng.uniform(-1, 1), gt.y + rng.uniform(-1, 1), gt.z, rng.uniform(0.3, 5),
                         rng.uniform(0.3, 3), rng.uniform(0.5, 3), rng.uniform(-3.1, 3.1)};
        const Box3D back = decode_residual(encode_residual(gt, base, coding), base, coding);
        for (const double d : {back.x - gt.x, back.y - gt.y, back.z - gt.z, back.l - gt.l, back.w - gt.w,
                               back.h - gt.h, wrap_angle(back.yaw - gt.yaw)}) {
          worst = std::max(worst, std::abs(d));
        }
      }
    }
    add(check("proposal.residual_roundtrip", worst <= 1e-5, worst));
  }

  // eval_metrics
  {
    const Box3D a{0, 0, 0, 1, 1, 1, 0};
    const Box3D b{0.5, 0, 0, 1, 1, 1, 0};
    const double e = std::abs(bev_iou(a, b) - 1.0 / 3.0);
    add(check("eval.iou_half_overlap", e <= 1e-9, e));
    double asym = 0.0, rot = 0.0;
    for (int i = 0; i < 200; ++i) {
      const Box3D p{rng.uniform(-2, 2), rng.uniform(-2, 2), 0, rng.uniform(0.5, 4), rng.uniform(0.5, 2), 1, rng.uniform(-3, 3)};
      const Box3D q{rng.uniform(-2, 2), rng.uniform(-2, 2), 0, rng.uniform(0.5, 4), rng.uniform(0.5, 2), 1, rng.uniform(-3, 3)};
      asym = std::max(asym, std::abs(bev_iou(p, q) - bev_iou(q, p)));
      const double t = rng.uniform(-std::numbers::pi, std::numbers::pi), c = std::cos(t), s = std::sin(t);
      auto turn = [&](Box3D x) {
        const double nx = c * x.x - s * x.y, ny = s * x.x + c * x.y;
        x.x = nx;
        x.y = ny;
        x.yaw = wrap_angle(x.yaw + t);
        return x;
      };
      rot = std::max(rot, std::abs(bev_iou(turn(p), turn(q)) - bev_iou(p, q)));
    }
    add(check("eval.iou_symmetric", asym == 0.0, asym));
    add(check("eval.iou_rotation_invariant", rot < 1e-6, rot));
    std::vector<Box3D> gts{{5, 0, 0, 4, 2, 1.5, 0, 1, 0}, {10, 3, 0, 0.8, 0.6, 1.7, 0, 1, 1}};
    const auto pr = average_precision(gts, gts, iou3d, 0.5);
    add(check("eval.ap_perfect", pr.ap == 1.0, pr.ap));
    const auto th = default_iou_thresholds();
    const bool th_ok = th == std::vector<double>{0.5, 0.25, 0.25, 0.5};
    add(check("eval.default_thresholds", th_ok, th_ok ? 0 : 1));
  }

  // pipeline
  {
    PipelineConfig cfg;
    cfg.seed = cfg.sampler.seed = 42;
    const auto scene = synth_scene(42, 4, 60);
    FrameInputs in;
    in.radar = scene.radar;
    in.mask = scene.mask;
    in.cal = scene.cal;
    in.pyramid = synthesize_pyramid(scene.image, cfg.pyramid_levels, cfg.pyramid_channels, cfg.seed);
    const ParamStore store = declare_model(cfg);
    const auto one = run_pipeline(cfg, in, store);
    cfg.workers = opt.workers;
    const auto many = run_pipeline(cfg, in, store);
    std::size_t bad = 0;
    for (const auto& s : one.stages) bad += s.nonfinite;
    const bool same = one.xp == many.xp && one.slp == many.slp && one.plp == many.plp &&
                      one.detections.size() == many.detections.size();
    add(check("pipeline.finite", bad == 0, static_cast<double>(bad)));
    add(check("pipeline.worker_invariant", same, same ? 0 : 1));
  }

  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace radfuse
