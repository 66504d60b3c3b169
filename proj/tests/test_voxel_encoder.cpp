#include <gtest/gtest.h>

#include "oracles/tavfe_oracle.hpp"
#include "radfuse/check_suite.hpp"
#include "radfuse/voxel_encoder.hpp"

using namespace radfuse;

namespace {

HybridPoint point(double x, double y, double z, float a = 0.5f) {
  HybridPoint p;
  p.xyz = {x, y, z};
  p.attrs = {a, -a, 2 * a, 1.0f};
  p.semantic = {1, 1, 1};
  return p;
}

/// Three voxels holding 1, 4 and 10 (of 13) points.
std::vector<HybridPoint> toy_points(SplitMix64& rng, const GridSpec& g) {
  std::vector<HybridPoint> pts;
  const std::array<Vec3, 3> base{{{10.0, 0.0, 0.0}, {20.0, 5.0, 1.0}, {30.0, -5.0, -1.0}}};
  const int counts[3] = {1, 4, 13};
  for (int v = 0; v < 3; ++v)
    for (int i = 0; i < counts[v]; ++i) {
      HybridPoint p = point(base[v][0] + rng.uniform(0, g.voxel[0]), base[v][1] + rng.uniform(0, g.voxel[1]),
                            base[v][2] + rng.uniform(0, g.voxel[2]), static_cast<float>(rng.uniform(-2, 2)));
      p.type = rng.uniform() < 0.5 ? std::array<float, 2>{1, 0} : std::array<float, 2>{0, 1};
      pts.push_back(p);
    }
  return pts;
}

}  // namespace

TEST(Voxelize, SinglePoint) {
  GridSpec g;
  const VoxelSet s = voxelize({point(1.0, 2.0, 0.5)}, g, 10);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.counts, std::vector<int>{1});
  EXPECT_EQ(s.points.dims(), (std::vector<std::size_t>{1, 10, 12}));
  for (std::size_t r = 1; r < 10; ++r)
    for (std::size_t c = 0; c < 12; ++c) EXPECT_EQ(s.points(0, r, c), 0.0f);
}

TEST(Voxelize, DefaultGridCells) {
  EXPECT_EQ(GridSpec{}.cells(), (std::array<int, 3>{1024, 1024, 40}));
}

TEST(Voxelize, DropsOutOfRangeCapsAndOrders) {
  GridSpec g;
  std::vector<HybridPoint> pts{point(-1, 0, 0), point(60, 0, 0), point(5, 0, 0), point(1, 0, 1)};
  for (int i = 0; i < 12; ++i) pts.push_back(point(2.001, 3.001, 0.001, static_cast<float>(i)));
  const VoxelSet s = voxelize(pts, g, 10);
  ASSERT_EQ(s.size(), 3u);
  for (std::size_t k = 1; k < s.size(); ++k) EXPECT_TRUE(s.coords[k - 1] < s.coords[k]);
  std::size_t capped = 0;
  for (std::size_t k = 0; k < s.size(); ++k)
    if (s.counts[k] == 10) capped = k;
  // first ten in input order survive
  for (int j = 0; j < 10; ++j) EXPECT_EQ(s.points(capped, static_cast<std::size_t>(j), 3), static_cast<float>(j));
  EXPECT_THROW(voxelize(pts, g, 0), std::invalid_argument);
}

TEST(Centroid, Examples) {
  GridSpec g;
  g.voxel = {4, 4, 4};
  g.lo = {0, 0, 0};
  g.hi = {8, 8, 8};
  VoxelSet one = voxelize({point(1.5, 2.5, 3.5)}, g, 4);
  EXPECT_EQ(centroid(one, 0), (Vec3{1.5, 2.5, 3.5}));
  VoxelSet two = voxelize({point(0, 0, 0), point(2, 0, 0)}, g, 4);
  EXPECT_EQ(centroid(two, 0), (Vec3{1, 0, 0}));
}

TEST(Augment, CenterPointGetsZeroOffsets) {
  GridSpec g;
  g.lo = {0, 0, 0};
  g.hi = {4, 4, 4};
  g.voxel = {1, 1, 1};
  const VoxelSet s = voxelize({point(2.5, 1.5, 0.5)}, g, 3);
  const Tensor a = augment(s, 0, g);
  ASSERT_EQ(a.dims(), (std::vector<std::size_t>{3, 18}));
  for (std::size_t c = 12; c < 18; ++c) EXPECT_EQ(a(0, c), 0.0f);
}

TEST(TaBlock, ZeroAttentionWeightTrace) {
  ParamStore s;
  declare_ta_block(s, "t", 4, 5);
  s.init(1);
  for (const auto& p : s.paths()) {
    if (p.rfind("t.", 0) != 0 || !s.contains(p)) continue;
    for (float& w : s.mutable_linear(p).weight.values()) w = 0;
  }
  SplitMix64 rng(2);
  const Tensor in = random_tensor({4, 5}, rng);
  TaTrace<float> tr;
  const Tensor off = ta_block(in, 3, {1, 2, 3}, s, "t", false, &tr);
  for (const float m : tr.attention.values()) EXPECT_EQ(m, 0.5f);
  EXPECT_EQ(tr.voxel_weight, 0.0f);
  for (const float v : off.values()) EXPECT_EQ(v, 0.0f);
  // with the sigmoid gate, q = sigmoid(0) and the block scales by 1/4
  const Tensor on = ta_block(in, 3, {1, 2, 3}, s, "t", true);
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_FLOAT_EQ(on(p, c), 0.25f * in(p, c));
}

TEST(Tavfe, MatchesStraightLineOracle) {
  GridSpec g;
  TavfeConfig cfg;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SplitMix64 rng(seed);
    const auto pts = toy_points(rng, g);
    const VoxelSet set = voxelize(pts, g, cfg.max_points);
    ASSERT_EQ(set.size(), 3u);
    ParamStore store;
    declare_tavfe(store, set.channels, cfg);
    store.init(seed);
    const VoxelFeatures vf = tavfe(set, g, store, cfg);
    ASSERT_EQ(vf.features.dims(), (std::vector<std::size_t>{3, 32}));
    for (std::size_t k = 0; k < 3; ++k) {
      oracle::Rows raw;
      for (int j = 0; j < set.counts[k]; ++j) {
        oracle::Vec r;
        for (std::size_t c = 0; c < set.channels; ++c) r.push_back(set.points(k, static_cast<std::size_t>(j), c));
        raw.push_back(r);
      }
      const Vec3 vc = g.center(set.coords[k].x, set.coords[k].y, set.coords[k].z);
      const oracle::Vec ref = oracle::encode_voxel(raw, {vc[0], vc[1], vc[2]}, store, cfg);
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - vf.features(k, i)));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Tavfe, PaddingPerturbationIsBitIdentical) {
  GridSpec g;
  TavfeConfig cfg;
  SplitMix64 rng(3);
  const VoxelSet set = voxelize(toy_points(rng, g), g, cfg.max_points);
  ParamStore store;
  declare_tavfe(store, set.channels, cfg);
  store.init(4);
  for (std::size_t k = 0; k < set.size(); ++k) {
    const Tensor clean = augment(set, k, g);
    Tensor noisy = clean;
    for (std::size_t r = static_cast<std::size_t>(set.counts[k]); r < cfg.max_points; ++r)
      for (float& x : noisy.row(r)) x = static_cast<float>(rng.uniform(-1e3, 1e3));
    const Vec3 c = centroid(set, k);
    EXPECT_EQ(encode_voxel<float>(clean, static_cast<std::size_t>(set.counts[k]), c, store, cfg),
              encode_voxel<float>(noisy, static_cast<std::size_t>(set.counts[k]), c, store, cfg));
  }
}

TEST(Tavfe, RowsPerVoxelAndWorkerIndependence) {
  GridSpec g;
  TavfeConfig cfg;
  SplitMix64 rng(5);
  std::vector<HybridPoint> pts;
  for (int i = 0; i < 400; ++i) pts.push_back(point(rng.uniform(0, 50), rng.uniform(-20, 20), rng.uniform(-2, 1)));
  const VoxelSet set = voxelize(pts, g, cfg.max_points);
  ParamStore store;
  declare_tavfe(store, set.channels, cfg);
  store.init(6);
  const VoxelFeatures a = tavfe(set, g, store, cfg, 1), b = tavfe(set, g, store, cfg, 7);
  EXPECT_EQ(a.features.dim(0), set.size());
  EXPECT_TRUE(a.features == b.features);
  EXPECT_TRUE(a.features.all_finite());
}

TEST(Tavfe, WrongVoxelCapacityThrows) {
  GridSpec g;
  TavfeConfig cfg;
  const VoxelSet set = voxelize({point(1, 1, 0)}, g, 5);
  ParamStore store;
  declare_tavfe(store, set.channels, cfg);
  store.init(0);
  EXPECT_THROW(tavfe(set, g, store, cfg), ShapeError);
}
