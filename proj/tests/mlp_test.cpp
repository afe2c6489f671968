#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "merf/mlp.hpp"

namespace merf {
namespace {

TEST(DirectionEncoding, Examples) {
  const auto z = encode_direction({0, 0, 1});
  ASSERT_EQ(z.size(), 27u);
  EXPECT_EQ(z[0], 0.0);
  EXPECT_EQ(z[1], 0.0);
  EXPECT_EQ(z[2], 1.0);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(z[3 + 2 * k], 0.0);
    EXPECT_EQ(z[3 + 2 * k + 1], 1.0);
  }
  const auto x = encode_direction({1, 0, 0});
  // j = x, k = 1: sin(2)
  EXPECT_NEAR(x[3 + 2], std::sin(2.0), 1e-15);
  EXPECT_NEAR(x[3 + 2], 0.9093, 1e-4);
  EXPECT_NEAR(x[3 + 3], std::cos(2.0), 1e-15);
  // j = z, k = 3: sin(8 * 0), cos(8 * 0)
  EXPECT_EQ(x[3 + 16 + 6], 0.0);
  EXPECT_EQ(x[3 + 16 + 7], 1.0);
}

TEST(DeferredShade, ZeroNetworkAddsHalf) {
  const DeferredMlp mlp = DeferredMlp::zeros();
  const std::array<double, 3> cd{0.1, 0.4, 0.7};
  const std::array<double, kFeatures> f{0.2, 0.2, 0.2, 0.2};
  const Rgb c = deferred_shade(cd, f, normalize(Vec3{1, 2, 3}), mlp);
  EXPECT_DOUBLE_EQ(c[0], 0.6);
  EXPECT_DOUBLE_EQ(c[1], 0.9);
  EXPECT_DOUBLE_EQ(c[2], 1.0);
}

// A network with two live hidden units per layer, evaluated by hand:
// h1_0 = relu(0.5 + 1*cd_r - 2*f_0) = relu(0.5 + 0.4 - 0.6) = 0.3
// h1_1 = relu(-1 + d_z)                = relu(-1 + 0.6)     = 0
// h2_0 = relu(0.1 + 2*h1_0)            = 0.7
// h2_1 = relu(-0.2 + 3*h1_1)           = 0
// y_0 = sigmoid(1*h2_0) = sigmoid(0.7); y_1 = sigmoid(-0.5); y_2 = sigmoid(0)
TEST(DeferredShade, HandEvaluatedTinyNetwork) {
  DeferredMlp mlp = DeferredMlp::zeros();
  auto& l0 = mlp.layers[0];
  auto& l1 = mlp.layers[1];
  auto& l2 = mlp.layers[2];
  l0.bias[0] = 0.5;
  l0.w(0, 0) = 1.0;
  l0.w(0, 3) = -2.0;
  l0.bias[1] = -1.0;
  l0.w(1, 3 + kFeatures + 2) = 1.0;
  l1.bias[0] = 0.1;
  l1.w(0, 0) = 2.0;
  l1.bias[1] = -0.2;
  l1.w(1, 1) = 3.0;
  l2.w(0, 0) = 1.0;
  l2.bias[1] = -0.5;
  const std::array<double, 3> cd{0.4, 0.0, 0.2};
  const std::array<double, kFeatures> f{0.3, 0.9, 0.9, 0.9};
  const Vec3 d{0.0, 0.8, 0.6};
  const Rgb c = deferred_shade(cd, f, d, mlp);
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  EXPECT_NEAR(c[0], std::min(1.0, 0.4 + sig(0.7)), 1e-15);
  EXPECT_NEAR(c[1], 0.0 + sig(-0.5), 1e-15);
  EXPECT_NEAR(c[2], 0.2 + 0.5, 1e-15);
}

TEST(DeferredShade, OutputAlwaysInUnitRange) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  for (int i = 0; i < 1000; ++i) {
    const DeferredMlp mlp = DeferredMlp::random(i);
    const std::array<double, 3> cd{u(rng), u(rng), u(rng)};
    const std::array<double, kFeatures> f{u(rng), u(rng), u(rng), u(rng)};
    const Rgb c = deferred_shade(cd, f, normalize(Vec3{g(rng), g(rng), g(rng)}), mlp);
    for (double v : c) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(DeferredShade, RejectsFeatureDimensionMismatch) {
  const DeferredMlp mlp = DeferredMlp::zeros(3);
  const std::array<double, 3> cd{};
  const std::array<double, kFeatures> f{};
  EXPECT_THROW(deferred_shade(cd, f, {0, 0, 1}, mlp), std::invalid_argument);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  const DeferredMlp mlp = DeferredMlp::random(7);
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, kMlpInputDim> x{};
  for (auto& v : x) v = u(rng);
  const Rgb gy{0.3, -1.1, 0.6};
  auto loss = [&](const DeferredMlp& m, const std::array<double, kMlpInputDim>& in) {
    const Rgb y = mlp_forward(m, in);
    return gy[0] * y[0] + gy[1] * y[1] + gy[2] * y[2];
  };
  MlpTape tape;
  mlp_forward(mlp, x, &tape);
  DeferredMlp grad = DeferredMlp::zeros();
  const auto gx = mlp_backward(mlp, tape, gy, grad);
  const double h = 1e-6;
  for (int i = 0; i < kMlpInputDim; ++i) {
    auto xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    EXPECT_NEAR(gx[i], (loss(mlp, xp) - loss(mlp, xm)) / (2 * h), 1e-7);
  }
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    for (std::size_t k = 0; k < mlp.layers[l].weights.size(); k += 7) {
      DeferredMlp p = mlp, m = mlp;
      p.layers[l].weights[k] += h;
      m.layers[l].weights[k] -= h;
      EXPECT_NEAR(grad.layers[l].weights[k], (loss(p, x) - loss(m, x)) / (2 * h), 1e-7);
    }
  }
}

}  // namespace
}  // namespace merf
