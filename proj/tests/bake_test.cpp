#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

namespace merf {
namespace {

TEST(Occupancy, ThresholdExamples) {
  const std::vector<WeightedPoint> none = {{{0.1, 0.2, 0.3}, 0.004, 0.9}, {{0, 0, 0}, 0.5, 0.005}};
  EXPECT_EQ(compute_occupancy(none, 0.005, 128).count(), 0u);

  // Point strictly inside a cell, away from cell centres: the 8 cells whose
  // centres surround it.
  const std::vector<WeightedPoint> one = {{{0.0101, -0.5203, 1.2707}, 0.01, 0.01}};
  const BitGrid g = compute_occupancy(one, 0.005, 128);
  EXPECT_EQ(g.count(), 8u);
  const std::vector<WeightedPoint> occluded = {{{0.3, 0.3, 0.3}, 0.001, 0.9}};
  EXPECT_EQ(compute_occupancy(occluded, 0.005, 128).count(), 0u);
  const std::vector<WeightedPoint> all_one = {{{0.3, 0.3, 0.3}, 1.0, 1.0}};
  EXPECT_EQ(compute_occupancy(all_one, 1.0, 128).count(), 0u);
}

TEST(Occupancy, WeightedPointsOnEmptyFieldAreZero) {
  FieldGrids g(GridShape{4, 8});
  g.for_each_array([](std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); i += kChannels) v[i] = -40.0;
  });
  const std::vector<Ray> rays = {{{-1.5, 0.1, 0.2}, normalize(Vec3{1, 0.1, 0}), 0.0, 10.0}};
  const auto pts = collect_weighted_points(rays, ContinuousSource(g), MarchConfig::for_plane_resolution(8));
  ASSERT_FALSE(pts.empty());
  for (const auto& p : pts) {
    EXPECT_EQ(p.weight, 0.0);
    EXPECT_EQ(p.alpha, 0.0);
  }
}

TEST(Occupancy, OpaqueWallHasUnitAlphaThenNothing) {
  const GridShape shape{17, 16};
  FieldGrids g(shape);
  for (int z = 0; z < 17; ++z) {
    for (int y = 0; y < 17; ++y) {
      for (int x = 0; x < 17; ++x) {
        g.voxel[voxel_index(shape, x, y, z) * kChannels] = x >= 10 ? 14.0 : -30.0;
      }
    }
  }
  for (auto& p : g.planes) {
    for (std::size_t i = 0; i < p.size(); i += kChannels) p[i] = 0.0;
  }
  const std::vector<Ray> rays = {{{-1.0, 0.05, 0.05}, {1, 0, 0}, 0.0, 1.9}};
  MarchConfig cfg = MarchConfig::for_plane_resolution(16);
  cfg.termination_transmittance = 0.0;
  const auto pts = collect_weighted_points(rays, ContinuousSource(g), cfg);
  double sum_w = 0.0;
  std::size_t first = pts.size();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    sum_w += pts[i].weight;
    EXPECT_LE(pts[i].weight, pts[i].alpha + 1e-15);
    if (first == pts.size() && pts[i].alpha > 0.99) first = i;
  }
  ASSERT_LT(first, pts.size());
  double before = 1.0;
  for (std::size_t i = 0; i < first; ++i) before *= 1.0 - pts[i].alpha;
  EXPECT_NEAR(pts[first].weight, before, 1e-2);
  for (std::size_t i = first + 2; i < pts.size(); ++i) EXPECT_LT(pts[i].weight, 1e-6);
  EXPECT_LE(sum_w, 1.0 + 1e-12);
}

TEST(Sparsify, EmptyAndSingleVoxel) {
  const GridShape shape{16, 128};
  const QuantizedGrids q = quantize_grids(RawGrids(shape));
  EXPECT_EQ(sparsify_voxels(q, BitGrid(128), 8).allocated_blocks(), 0u);

  // A base cell well inside block (0,0,0) interior.
  BitGrid one(128);
  one.set(20, 20, 20);
  EXPECT_EQ(sparsify_voxels(q, one, 8).allocated_blocks(), 1u);
  // A base cell straddling the voxel cell that crosses the block boundary at
  // voxel index 8 on every axis.
  BitGrid corner(128);
  const int c = static_cast<int>((4.0 * 8 / 15 - 2.0 + 2.0) / 4.0 * 128);  // contains voxel corner 8
  corner.set(c, c, c);
  EXPECT_EQ(sparsify_voxels(q, corner, 8).allocated_blocks(), 8u);
}

TEST(Sparsify, SparseEqualsDenseOnOccupiedSpace) {
  const GridShape shape{16, 128};
  const FieldModel model = testing::ball_model(shape, 9);
  const QuantizedGrids q = quantize_grids(model.raw);
  std::mt19937_64 rng(61);
  std::bernoulli_distribution bit(0.02);
  BitGrid occ(128);
  for (std::size_t i = 0; i < occ.size(); ++i) {
    if (bit(rng)) occ.set(i);
  }
  const BlockSparseGrid sparse = sparsify_voxels(q, occ, 8);
  const QuantizedPlanes planes = QuantizedPlanes::from(q);
  const BakedSource baked(sparse, planes, model.quant);
  const QuantizedSource dense(q, model.quant);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  int checked = 0;
  while (checked < 10000) {
    const Point3 p{u(rng), u(rng), u(rng)};
    if (!occupied_at(occ, p)) continue;
    ++checked;
    const Stencil st = make_stencil(shape, p);
    std::array<double, 8 * kChannels> a{}, b{};
    baked.voxel_corners(st.voxel[0].index, st.voxel[1].index, st.voxel[2].index, a, false);
    dense.voxel_corners(st.voxel[0].index, st.voxel[1].index, st.voxel[2].index, b, false);
    ASSERT_EQ(a, b);
  }
}

TEST(Sparsify, ApronMatchesNeighbourFace) {
  const GridShape shape{16, 128};
  const QuantizedGrids q = quantize_grids(testing::ball_model(shape, 10).raw);
  BitGrid all(128);
  for (std::size_t i = 0; i < all.size(); ++i) all.set(i);
  const BlockSparseGrid g = sparsify_voxels(q, all, 8);
  const std::int32_t b0 = g.atlas_index(0, 0, 0);
  const std::int32_t b1 = g.atlas_index(1, 0, 0);
  for (int z = 0; z <= 8; ++z) {
    for (int y = 0; y <= 8; ++y) {
      EXPECT_EQ(g.density_at(b0, g.local_index(8, y, z)), g.density_at(b1, g.local_index(0, y, z)));
    }
  }
}

class BakeBallTest : public ::testing::Test {
 protected:
  static constexpr GridShape kShape{16, 128};
};

TEST_F(BakeBallTest, CullingIsSound) {
  const FieldModel model = testing::ball_model(kShape, 11);
  const auto rays = testing::camera_rays(testing::ring_cameras(4, 20, 20));
  BakeConfig cfg;
  cfg.march = MarchConfig::for_plane_resolution(kShape.plane_res);
  const AssetBundle bundle = bake_scene(model, rays, cfg);
  ASSERT_GT(bundle.occupancy.base.count(), 0u);
  const QuantizedGrids q = quantize_grids(model.raw);
  std::size_t significant = 0;
  for (const Ray& r : rays) {
    march_weights(r, QuantizedSource(q, model.quant), cfg.march, [&](const WeightedPoint& p) {
      if (p.weight > 0.005 && p.alpha > 0.005) {
        ++significant;
        EXPECT_TRUE(occupied_at(bundle.occupancy.base, p.position));
      }
    });
  }
  EXPECT_GT(significant, 0u);
  // The streaming path agrees with collecting points first.
  const auto pts = collect_weighted_points(rays, QuantizedSource(q, model.quant), cfg.march);
  EXPECT_EQ(compute_occupancy(pts, 0.005, 128), bundle.occupancy.base);
}

TEST_F(BakeBallTest, EmptyFieldBakesToEmptyBundle) {
  FieldModel model;
  model.raw = RawGrids(kShape);
  model.raw.for_each_array([](std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); i += kChannels) v[i] = -20.0;
  });
  model.mlp = DeferredMlp::zeros();
  BakeConfig cfg;
  cfg.march = MarchConfig::for_plane_resolution(kShape.plane_res);
  const auto rays = testing::camera_rays(testing::ring_cameras(2, 8, 8));
  const AssetBundle bundle = bake_scene(model, rays, cfg);
  EXPECT_EQ(bundle.occupancy.base.count(), 0u);
  EXPECT_EQ(bundle.voxels.allocated_blocks(), 0u);
}

TEST_F(BakeBallTest, ThresholdOneGivesEmptyOccupancy) {
  const FieldModel model = testing::ball_model(kShape, 12);
  BakeConfig cfg;
  cfg.threshold = 1.0;
  cfg.march = MarchConfig::for_plane_resolution(kShape.plane_res);
  const auto rays = testing::camera_rays(testing::ring_cameras(2, 12, 12));
  EXPECT_EQ(bake_scene(model, rays, cfg).occupancy.base.count(), 0u);
}

TEST_F(BakeBallTest, ThreadCountDoesNotChangeBundle) {
  const FieldModel model = testing::ball_model(kShape, 13);
  const auto rays = testing::camera_rays(testing::ring_cameras(3, 16, 16));
  BakeConfig cfg;
  cfg.march = MarchConfig::for_plane_resolution(kShape.plane_res);
  const AssetBundle a = bake_scene(model, rays, cfg);
  cfg.threads = 3;
  EXPECT_TRUE(a == bake_scene(model, rays, cfg));
}

}  // namespace
}  // namespace merf
