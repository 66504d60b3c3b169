#include <gtest/gtest.h>

#include "oracles/deformable_oracle.hpp"
#include "oracles/fusion_oracle.hpp"
#include "radfuse/check_suite.hpp"
#include "radfuse/scene_fusion.hpp"

using namespace radfuse;

namespace {

VoxelFeatures random_voxels(SplitMix64& rng, std::size_t n, std::size_t c, int span) {
  std::map<VoxelCoord, int> seen;
  VoxelFeatures v;
  while (v.coords.size() < n) {
    const VoxelCoord k{static_cast<int>(rng.uniform(0, span)), static_cast<int>(rng.uniform(0, span)),
                       static_cast<int>(rng.uniform(0, span))};
    if (seen.count(k)) continue;
    seen[k] = 1;
    v.coords.push_back(k);
  }
  std::sort(v.coords.begin(), v.coords.end());
  v.features = random_tensor({n, c}, rng);
  for (const auto& k : v.coords) {
    v.centroids.push_back({k.x * 0.2 + rng.uniform(0, 0.2), k.y * 0.2 + rng.uniform(0, 0.2), k.z * 0.1});
    v.counts.push_back(1 + static_cast<int>(rng.uniform(0, 9)));
  }
  return v;
}

HybridPoint at(double x, double y, double z) {
  HybridPoint p;
  p.xyz = {x, y, z};
  return p;
}

}  // namespace

TEST(Downsample, SingleVoxelIsIdenticalAtEveryLevel) {
  VoxelFeatures v;
  v.coords = {{5, 9, 3}};
  v.features = Tensor({1, 4}, std::vector<float>{1, -2, 3, 0.5f});
  v.centroids = {{1.1, 2.2, 0.3}};
  v.counts = {3};
  ParamStore s;
  declare_backbone(s, 4, 6);
  s.init(1);
  const auto lv = multiscale_downsample(v, s);
  for (std::size_t i = 0; i < 4; ++i) {
    ASSERT_EQ(lv[i].size(), 1u);
    EXPECT_EQ(lv[i].centroids[0], v.centroids[0]);
    EXPECT_EQ(lv[i].counts[0], 3);
    const oracle::Vec ref = oracle::matvec({1, -2, 3, 0.5}, s.linear("backbone.x" + std::to_string(i + 1)));
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(lv[i].features(0, c), ref[c], 1e-6);
  }
}

TEST(Downsample, CubeOfEightMergesAtScaleTwo) {
  VoxelFeatures v;
  SplitMix64 rng(2);
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        v.coords.push_back({x + 4, y + 4, z + 2});
        v.centroids.push_back({x * 1.0, y * 1.0, z * 1.0});
        v.counts.push_back(1);
      }
  v.features = random_tensor({8, 3}, rng);
  ParamStore s;
  declare_backbone(s, 3, 3);
  s.init(2);
  const auto lv = multiscale_downsample(v, s);
  EXPECT_EQ(lv[0].size(), 8u);
  ASSERT_EQ(lv[1].size(), 1u);
  EXPECT_EQ(lv[1].coords[0].x, 2);
  EXPECT_EQ(lv[1].counts[0], 8);
  EXPECT_EQ(lv[1].centroids[0], (Vec3{0.5, 0.5, 0.5}));
}

TEST(Downsample, MatchesGroupingOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitMix64 rng(seed);
    const VoxelFeatures v = random_voxels(rng, 60, 5, 20);
    ParamStore s;
    declare_backbone(s, 5, 7);
    s.init(seed);
    const auto lv = multiscale_downsample(v, s, 3);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto ref = oracle::group_by(v, kDownsampleScales[i]);
      ASSERT_EQ(lv[i].size(), ref.size());
      for (std::size_t g = 0; g < ref.size(); ++g) {
        EXPECT_EQ(lv[i].coords[g].x, ref[g].coord[0]);
        EXPECT_EQ(lv[i].coords[g].y, ref[g].coord[1]);
        EXPECT_EQ(lv[i].coords[g].z, ref[g].coord[2]);
        EXPECT_EQ(lv[i].counts[g], ref[g].count);
        for (int a = 0; a < 3; ++a) EXPECT_NEAR(lv[i].centroids[g][a], ref[g].centroid[a], 1e-12);
        const oracle::Vec f = oracle::matvec(ref[g].pooled, s.linear("backbone.x" + std::to_string(i + 1)));
        for (std::size_t c = 0; c < f.size(); ++c) EXPECT_NEAR(lv[i].features(g, c), f[c], 1e-5);
      }
    }
  }
}

TEST(Downsample, EmptyInputThrows) {
  ParamStore s;
  declare_backbone(s, 2, 2);
  s.init(0);
  EXPECT_THROW(multiscale_downsample(VoxelFeatures{}, s), ShapeError);
}

TEST(Proposals, EmptySceneGivesNone) {
  EXPECT_TRUE(heuristic_proposals({}, {{0, 4, 2, 1.5}}, {}).empty());
}

TEST(Proposals, ClusterYieldsOneBoxPerAnchor) {
  std::vector<HybridPoint> pts;
  SplitMix64 rng(3);
  for (int i = 0; i < 30; ++i) pts.push_back(at(10 + rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0));
  const std::vector<AnchorSpec> anchors{{0, 3.9, 1.6, 1.56}, {1, 0.8, 0.6, 1.73}};
  const auto boxes = heuristic_proposals(pts, anchors, {});
  ASSERT_EQ(boxes.size(), 2u);
  for (const auto& b : boxes) {
    EXPECT_LT(std::hypot(b.x - 10, b.y), 0.8);
    EXPECT_EQ(b.score, 1.0);
    EXPECT_EQ(b.yaw, 0.0);
  }
  EXPECT_EQ(boxes[0].cls, 0);
  EXPECT_EQ(boxes[1].cls, 1);
}

TEST(Proposals, TopKAndMinPoints) {
  std::vector<HybridPoint> pts;
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < 5 + c; ++i) pts.push_back(at(5.0 * c + 0.1, 0.1, 0));
  pts.push_back(at(40.1, 30.1, 0));  // lone point, below min_points
  ProposalConfig cfg;
  cfg.top_k = 3;
  const auto boxes = heuristic_proposals(pts, {{0, 1, 1, 1}}, cfg);
  ASSERT_EQ(boxes.size(), 3u);
  EXPECT_GE(boxes[0].score, boxes[1].score);
  EXPECT_NEAR(boxes[0].x, 20.1, 1e-9);
  cfg.top_k = 0;
  EXPECT_THROW(heuristic_proposals(pts, {}, cfg), std::invalid_argument);
}

TEST(Deformable, MatchesPerSampleOracle) {
  const DeformableConfig cfg = toy_attention(2);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng(seed);
    const FeaturePyramid pyr = toy_pyramid(cfg.levels, cfg.value_dim, rng);
    ParamStore s;
    declare_deformable(s, "d", cfg);
    s.init(seed);
    const TensorD q = random_tensor_d({2, cfg.query_dim}, rng);
    const std::vector<Vec3> refs{toy_reference(rng), toy_reference(rng)};
    DeformableTrace<double> tr;
    const TensorD out = qgslf_block<double>(q, refs, pyr, toy_calibration(), s, "d", cfg, 1, &tr);
    for (std::size_t k = 0; k < 2; ++k) {
      const oracle::Vec qk(q.row(k).begin(), q.row(k).end());
      const auto ref = oracle::deformable(qk, refs[k], pyr, toy_calibration(), s, "d", cfg);
      for (std::size_t i = 0; i < cfg.out_dim; ++i) worst = std::max(worst, std::abs(ref.output[i] - out(k, i)));
      for (std::size_t i = 0; i < cfg.query_dim; ++i)
        worst = std::max(worst, std::abs(ref.image[i] - tr.image_features(k, i)));
      for (std::size_t i = 0; i < cfg.slots(); ++i)
        worst = std::max(worst, std::abs(ref.weights[i] - tr.weights[k * cfg.slots() + i]));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Deformable, HeadWeightsSumToOne) {
  const DeformableConfig cfg = toy_attention(3);
  SplitMix64 rng(4);
  const FeaturePyramid pyr = toy_pyramid(cfg.levels, cfg.value_dim, rng);
  ParamStore s;
  declare_deformable(s, "d", cfg);
  s.init(4);
  std::vector<Vec3> refs;
  for (int i = 0; i < 8; ++i) refs.push_back(toy_reference(rng));
  DeformableTrace<float> tr;
  deformable_fuse<float>(random_tensor({8, cfg.query_dim}, rng, -5, 5), refs, pyr, toy_calibration(), s, "d", cfg, 2,
                         &tr);
  const std::size_t per = cfg.levels * cfg.points;
  for (std::size_t h = 0; h < tr.weights.size() / per; ++h) {
    double sum = 0;
    for (std::size_t i = 0; i < per; ++i) sum += tr.weights[h * per + i];
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Deformable, ReferenceBehindCameraDropsImageTerm) {
  const DeformableConfig cfg = toy_attention(2);
  SplitMix64 rng(5);
  const FeaturePyramid pyr = toy_pyramid(cfg.levels, cfg.value_dim, rng);
  ParamStore s;
  declare_deformable(s, "d", cfg);
  s.init(5);
  const std::vector<Vec3> refs{{0, 0, -3}};
  DeformableTrace<float> tr;
  deformable_fuse<float>(random_tensor({1, cfg.query_dim}, rng), refs, pyr, toy_calibration(), s, "d", cfg, 1, &tr);
  EXPECT_EQ(tr.dropped[0], 1);
  for (const float x : tr.image_features.values()) EXPECT_EQ(x, 0.0f);
}

TEST(Deformable, OffsetCollapseEqualsBilinearSample) {
  DeformableConfig one;
  one.heads = one.levels = one.points = 1;
  one.query_dim = one.value_dim = one.head_dim = one.ffn_hidden = one.out_dim = 4;
  ParamStore s;
  declare_deformable(s, "c", one);
  s.init(6);
  for (float& w : s.mutable_linear("c.offset").weight.values()) w = 0;
  for (const char* n : {"c.value.m0", "c.output.m0"}) {
    auto& l = s.mutable_linear(n);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) l.weight(r, c) = r == c ? 1.0f : 0.0f;
  }
  SplitMix64 rng(6);
  const FeaturePyramid pyr = toy_pyramid(1, 4, rng);
  std::vector<Vec3> refs;
  for (int i = 0; i < 20; ++i) refs.push_back(toy_reference(rng));
  DeformableTrace<float> tr;
  qgslf_block<float>(random_tensor({20, 4}, rng), refs, pyr, toy_calibration(), s, "c", one, 1, &tr);
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto px = project(refs[k], toy_calibration());
    const Tensor ref = bilinear_sample(pyr.levels[0].map, px->u / pyr.levels[0].stride, px->v / pyr.levels[0].stride);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(tr.image_features(k, i), ref[i], 1e-5);
  }
}

TEST(Deformable, PyramidMismatchThrows) {
  const DeformableConfig cfg = toy_attention(2);
  SplitMix64 rng(7);
  const FeaturePyramid pyr = toy_pyramid(3, cfg.value_dim, rng);
  ParamStore s;
  declare_deformable(s, "d", cfg);
  s.init(7);
  const std::vector<Vec3> refs{toy_reference(rng)};
  EXPECT_THROW(deformable_fuse<float>(random_tensor({1, cfg.query_dim}, rng), refs, pyr, toy_calibration(), s, "d", cfg),
               ShapeError);
}

TEST(RoiPool, MatchesExhaustiveScan) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitMix64 rng(seed);
    const std::size_t n = 300;
    const Tensor f = random_tensor({n, 4}, rng);
    std::vector<Vec3> cen;
    for (std::size_t i = 0; i < n; ++i) cen.push_back({rng.uniform(8, 12), rng.uniform(-2, 2), rng.uniform(-1, 1)});
    const Box3D b{10, 0, 0, 3.9, 1.6, 1.56, rng.uniform(-3, 3)};
    const Tensor got = roi_grid_pool(f, cen, {b}, 3, 2);
    const auto ref = oracle::roi_scan(f, cen, b, 3);
    ASSERT_EQ(got.dims(), (std::vector<std::size_t>{1, 27 * 4}));
    for (std::size_t cell = 0; cell < 27; ++cell)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(got(0, cell * 4 + c), static_cast<float>(ref[cell][c]));
  }
}

TEST(RoiPool, CellCentersFollowRotation) {
  const Box3D b{3, -2, 1, 4, 2, 1, 0.7};
  const auto a = roi_grid_centers(b, 3);
  const auto ref = oracle::grid_centers(b, 3, 3, 3);
  ASSERT_EQ(a.size(), ref.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(a[i][k], ref[i][k], 1e-12);
}

TEST(RoiPool, NoVoxelsGivesZerosAndCenterVoxelFillsOneCell) {
  const Box3D b{0, 0, 0, 6, 6, 6, 0};
  const Tensor empty = roi_grid_pool(Tensor({0, 2}), {}, {b}, 6);
  for (const float x : empty.values()) EXPECT_EQ(x, 0.0f);
  const Tensor f({1, 2}, std::vector<float>{3, -4});
  const Tensor one = roi_grid_pool(f, {{-2.5, -2.5, -2.5}}, {b}, 6);  // center of cell 0
  std::size_t filled = 0;
  for (std::size_t cell = 0; cell < 216; ++cell)
    if (one(0, cell * 2) != 0.0f) ++filled;
  EXPECT_EQ(filled, 1u);
  EXPECT_EQ(one(0, 0), 3.0f);
  EXPECT_EQ(one(0, 1), -4.0f);
}

TEST(Hsfp, SingleLevelEqualsPooledFusedBlock) {
  HsfpConfig cfg;
  cfg.levels = {2};
  cfg.grid = 2;
  cfg.attention = toy_attention(2);
  SplitMix64 rng(8);
  const FeaturePyramid pyr = toy_pyramid(2, cfg.attention.value_dim, rng);
  VoxelFeatures v = random_voxels(rng, 30, cfg.attention.query_dim, 10);
  for (auto& c : v.centroids) c = toy_reference(rng);
  ParamStore s;
  declare_backbone(s, cfg.attention.query_dim, cfg.attention.query_dim);
  declare_hsfp(s, cfg);
  s.init(8);
  const auto scales = multiscale_downsample(v, s);
  const std::vector<Box3D> props{{0, 0, 6, 3, 3, 3, 0.2}, {0.5, 0.4, 5, 2, 2, 2, 0}};
  std::vector<Tensor> fused;
  const Tensor out = hsfp(scales, pyr, toy_calibration(), props, s, cfg, 2, &fused);
  const Tensor direct = qgslf_block(scales[1], pyr, toy_calibration(), s, hsfp_path(2), cfg.attention);
  EXPECT_TRUE(fused.at(0) == direct);
  EXPECT_TRUE(out == roi_grid_pool(direct, scales[1].centroids, props, 2));
  EXPECT_EQ(out.dims(), (std::vector<std::size_t>{2, 8 * cfg.attention.out_dim}));
}

TEST(Hsfp, ConcatenatesLevelsInAscendingOrder) {
  HsfpConfig cfg;
  cfg.levels = {4, 3};
  cfg.grid = 2;
  cfg.attention = toy_attention(2);
  SplitMix64 rng(9);
  const FeaturePyramid pyr = toy_pyramid(2, cfg.attention.value_dim, rng);
  VoxelFeatures v = random_voxels(rng, 40, cfg.attention.query_dim, 16);
  for (auto& c : v.centroids) c = toy_reference(rng);
  ParamStore s;
  declare_backbone(s, cfg.attention.query_dim, cfg.attention.query_dim);
  declare_hsfp(s, cfg);
  s.init(9);
  const auto scales = multiscale_downsample(v, s);
  const std::vector<Box3D> props{{0, 0, 6, 3, 3, 3, 0}};
  const Tensor out = hsfp(scales, pyr, toy_calibration(), props, s, cfg);
  const std::size_t block = 8 * cfg.attention.out_dim;
  ASSERT_EQ(out.dim(1), 2 * block);
  for (std::size_t li = 0; li < 2; ++li) {
    const int lv = 3 + static_cast<int>(li);
    const Tensor f = qgslf_block(scales[static_cast<std::size_t>(lv - 1)], pyr, toy_calibration(), s, hsfp_path(lv),
                                 cfg.attention);
    const Tensor p = roi_grid_pool(f, scales[static_cast<std::size_t>(lv - 1)].centroids, props, 2);
    for (std::size_t i = 0; i < block; ++i) EXPECT_EQ(out(0, li * block + i), p(0, i));
  }
  cfg.levels = {5};
  EXPECT_THROW(hsfp(scales, pyr, toy_calibration(), props, s, cfg), std::invalid_argument);
}
