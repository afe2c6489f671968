#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "test_util.hpp"

namespace merf {
namespace {

FieldSample sample_with(double density, Rgb diffuse) {
  FieldSample s;
  s.density = density;
  s.diffuse = diffuse;
  return s;
}

TEST(Compositing, OpaqueSample) {
  const auto acc = composite_step({}, sample_with(std::numeric_limits<double>::infinity(), {1, 0, 0}), 0.1);
  EXPECT_EQ(acc.diffuse, (Rgb{1, 0, 0}));
  EXPECT_EQ(acc.transmittance, 0.0);
}

TEST(Compositing, TwoHalfAlphaSamples) {
  const double delta = 1.0;
  const double tau = std::log(2.0);  // alpha = 1 - exp(-ln 2) = 0.5
  RayAccumulation acc;
  acc = composite_step(acc, sample_with(tau, {1, 0, 0}), delta);
  acc = composite_step(acc, sample_with(tau, {0, 1, 0}), delta);
  EXPECT_EQ(acc.diffuse, (Rgb{0.5, 0.25, 0.0}));
  EXPECT_EQ(acc.transmittance, 0.25);
}

TEST(Compositing, EmptySampleIsNoOp) {
  RayAccumulation acc;
  acc.diffuse = {0.1, 0.2, 0.3};
  acc.transmittance = 0.7;
  const auto out = composite_step(acc, sample_with(0.0, {1, 1, 1}), 0.5);
  EXPECT_EQ(out.diffuse, acc.diffuse);
  EXPECT_EQ(out.transmittance, acc.transmittance);
}

TEST(Compositing, OrderMatters) {
  const double tau = std::log(2.0);
  RayAccumulation a, b;
  a = composite_step(composite_step(a, sample_with(tau, {1, 0, 0}), 1.0), sample_with(tau, {0, 1, 0}), 1.0);
  b = composite_step(composite_step(b, sample_with(tau, {0, 1, 0}), 1.0), sample_with(tau, {1, 0, 0}), 1.0);
  EXPECT_NE(a.diffuse, b.diffuse);
}

TEST(Compositing, TelescopingAndMonotoneTransmittance) {
  std::mt19937_64 rng(41);
  std::exponential_distribution<double> tau(0.5);
  for (int r = 0; r < 200; ++r) {
    RayAccumulation acc;
    double sum_w = 0.0;
    for (int i = 0; i < 300; ++i) {
      const double t_before = acc.transmittance;
      acc = composite_step(acc, sample_with(tau(rng), {1, 1, 1}), 0.01);
      sum_w += t_before - acc.transmittance;
      EXPECT_LE(acc.transmittance, t_before);
      EXPECT_GE(acc.transmittance, 0.0);
    }
    // With white samples the accumulated colour is exactly sum of w_i.
    EXPECT_NEAR(1.0 - acc.transmittance, acc.diffuse[0], 1e-12);
    EXPECT_NEAR(1.0 - acc.transmittance, sum_w, 1e-12);
  }
}

TEST(Psnr, Examples) {
  const std::vector<double> zeros(12, 0.0), ones(12, 1.0), halves(12, 0.5);
  EXPECT_TRUE(std::isinf(psnr(zeros, zeros)));
  EXPECT_DOUBLE_EQ(psnr(zeros, ones), 0.0);
  EXPECT_NEAR(psnr(zeros, halves), 10.0 * std::log10(4.0), 1e-12);
  EXPECT_NEAR(psnr(zeros, halves), 6.02, 5e-3);
  EXPECT_THROW(psnr(zeros, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST(Camera, IdentityPoseRaysThroughPixelCentres) {
  Camera c;
  c.width = 2;
  c.height = 2;
  c.fx = c.fy = 100.0;
  c.cx = c.cy = 1.0;
  c.far = 10.0;
  c.validate();
  const Ray r00 = c.pixel_ray(0, 0);
  const Ray r11 = c.pixel_ray(1, 1);
  const Ray r01 = c.pixel_ray(0, 1);
  const Ray r10 = c.pixel_ray(1, 0);
  EXPECT_NEAR(r00.direction.x, -0.005, 1e-6);
  EXPECT_NEAR(r00.direction.y, -0.005, 1e-6);
  EXPECT_NEAR(r00.direction.x, -r11.direction.x, 1e-15);
  EXPECT_NEAR(r00.direction.y, -r11.direction.y, 1e-15);
  EXPECT_NEAR(r01.direction.x, -r10.direction.x, 1e-15);
  EXPECT_NEAR(r01.direction.y, -r10.direction.y, 1e-15);
  EXPECT_EQ(r00.direction.z, r11.direction.z);
  EXPECT_EQ(r00.origin, (Point3{0, 0, 0}));
}

TEST(Camera, RejectsNonOrthonormalRotation) {
  Camera c;
  c.width = c.height = 2;
  c.fx = c.fy = 1.0;
  c.camera_to_world[0] = 2.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

class BakedBallTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { bundle_ = new AssetBundle(testing::bake_ball({16, 128}, 5)); }
  static void TearDownTestSuite() {
    delete bundle_;
    bundle_ = nullptr;
  }
  static AssetBundle* bundle_;
};
AssetBundle* BakedBallTest::bundle_ = nullptr;

TEST_F(BakedBallTest, SkipRenderMatchesReference) {
  ASSERT_GT(bundle_->occupancy.base.count(), 0u);
  for (const Camera& cam : testing::ring_cameras(3, 32, 32, 2.5)) {
    const FloatImage fast = render_image(cam, *bundle_, bundle_->march);
    const FloatImage ref = render_reference(cam, *bundle_, bundle_->march);
    EXPECT_LE(testing::mean_abs_diff(fast.rgb, ref.rgb), 1e-5);
    EXPECT_GE(psnr(fast.rgb, ref.rgb), 60.0);
    EXPECT_LT(fast.field_queries, ref.field_queries);
  }
}

TEST_F(BakedBallTest, QueriesOnlyInOccupiedSpace) {
  const BakedSource src = bundle_->source();
  std::size_t queries = 0, outside = 0;
  const QueryObserver obs = [&](const Point3& p) {
    ++queries;
    if (!occupied_at(bundle_->occupancy.base, p)) ++outside;
  };
  for (const Camera& cam : testing::ring_cameras(2, 24, 24, 2.5)) {
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        march_ray(cam.pixel_ray(x, y), src, bundle_->occupancy, bundle_->mlp, bundle_->march, &obs);
      }
    }
  }
  EXPECT_GT(queries, 0u);
  EXPECT_EQ(outside, 0u);
}

TEST_F(BakedBallTest, RenderingIsDeterministicAndThreadInvariant) {
  const Camera cam = testing::ring_cameras(1, 20, 16)[0];
  const FloatImage a = render_image(cam, *bundle_, bundle_->march, 1);
  const FloatImage b = render_image(cam, *bundle_, bundle_->march, 1);
  const FloatImage c = render_image(cam, *bundle_, bundle_->march, 3);
  EXPECT_EQ(a.rgb, b.rgb);
  EXPECT_EQ(a.rgb, c.rgb);
  EXPECT_EQ(to_image(a), to_image(c));
}

TEST_F(BakedBallTest, EarlyTerminationBoundedByThreshold) {
  MarchConfig no_term = bundle_->march;
  no_term.termination_transmittance = 0.0;
  const BakedSource src = bundle_->source();
  const DeferredMlp zero = DeferredMlp::zeros();
  for (const Camera& cam : testing::ring_cameras(2, 24, 24, 2.5)) {
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const Ray r = cam.pixel_ray(x, y);
        const auto a = march_ray(r, src, bundle_->occupancy, zero, bundle_->march);
        const auto b = march_ray(r, src, bundle_->occupancy, zero, no_term);
        for (int c = 0; c < 3; ++c) {
          EXPECT_LE(std::abs(a.accumulation.diffuse[c] - b.accumulation.diffuse[c]),
                    bundle_->march.termination_transmittance);
        }
      }
    }
  }
}

TEST(Render, EmptyOccupancyGivesBackgroundAndNoQueries) {
  const GridShape shape{8, 128};
  const QuantizedGrids q = quantize_grids(RawGrids(shape));
  const QuantizedSource src(q, QuantizationSpec{});
  const OccupancyPyramid empty = build_pyramid(BitGrid(128));
  const DeferredMlp mlp = DeferredMlp::random(3);
  Camera cam = look_at_camera({2, 0, 0.5}, {0, 0, 0}, 1, 1, 40.0);
  const FloatImage img = render_image(cam, src, empty, mlp, MarchConfig::for_plane_resolution(128));
  EXPECT_EQ(img.field_queries, 0u);
  const Rgb expected = deferred_shade(std::array<double, 3>{}, std::array<double, kFeatures>{},
                                      cam.pixel_ray(0, 0).direction, mlp);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(img.rgb[c], expected[c]);
  const FloatImage ref =
      render_reference(cam, src, &empty, mlp, MarchConfig::for_plane_resolution(128));
  EXPECT_EQ(ref.rgb, img.rgb);
}

// One dense opaque voxel region around the origin; the ray through its centre
// returns that region's diffuse colour plus the zero network's 0.5.
TEST(Render, OpaqueVoxelWithZeroNetwork) {
  const GridShape shape{9, 128};
  FieldGrids g(shape);
  for (std::size_t i = 0; i < g.voxel.size(); i += kChannels) {
    g.voxel[i] = -14.0;
    g.voxel[i + 1] = 2.0;   // red
    g.voxel[i + 2] = -7.0;
    g.voxel[i + 3] = -7.0;
  }
  for (auto& p : g.planes) {
    for (std::size_t i = 0; i < p.size(); i += kChannels) p[i] = 0.0;
  }
  // Corners of the cell around the origin.
  for (int z = 3; z <= 5; ++z) {
    for (int y = 3; y <= 5; ++y) {
      for (int x = 3; x <= 5; ++x) g.voxel[voxel_index(shape, x, y, z) * kChannels] = 14.0;
    }
  }
  BitGrid base(128);
  for (int z = 0; z < 128; ++z) {
    for (int y = 0; y < 128; ++y) {
      for (int x = 0; x < 128; ++x) base.set(x, y, z);
    }
  }
  const OccupancyPyramid occ = build_pyramid(base);
  const Ray ray{{-1.5, 0.0, 0.0}, {1, 0, 0}, 0.0, 3.0};
  const RayResult r = march_ray(ray, ContinuousSource(g), occ, DeferredMlp::zeros(),
                                MarchConfig::for_plane_resolution(128));
  EXPECT_NEAR(r.accumulation.transmittance, 0.0, 1e-3);
  const double red = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(r.accumulation.diffuse[0], red, 2e-3);
  EXPECT_NEAR(r.color[0], std::min(1.0, red + 0.5), 2e-3);
  EXPECT_NEAR(r.color[1], 0.5 + 1.0 / (1.0 + std::exp(7.0)), 2e-3);
}

}  // namespace
}  // namespace merf
