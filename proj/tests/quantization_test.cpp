#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "merf/quantization.hpp"

namespace merf {
namespace {

TEST(Quantization, ValueExamples) {
  EXPECT_EQ(quantize_value(0.0), 0.0);
  EXPECT_EQ(quantize_value(1.0), 1.0);
  EXPECT_EQ(quantize_value(0.3), 77.0 / 255.0);
  EXPECT_EQ(quantize_value(0.5), 128.0 / 255.0);
  EXPECT_EQ(quantize_value(-0.2), 0.0);
  EXPECT_EQ(quantize_value(1.7), 1.0);
}

TEST(Quantization, IdempotentAndWithinHalfLevel) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng);
    const double q = quantize_value(v);
    EXPECT_EQ(quantize_value(q), q);
    EXPECT_LE(std::abs(q - v), 1.0 / 510.0 + 1e-15);
    const double level = q * 255.0;
    EXPECT_NEAR(level, std::round(level), 1e-9);
  }
}

TEST(Quantization, StraightThroughGradientIsOne) {
  for (double v : {0.0, 0.1, 0.5, 0.999, 1.0}) EXPECT_EQ(quantize_value_grad(v), 1.0);
}

TEST(Quantization, CellExamples) {
  EXPECT_EQ(encode_cell(0.0), 128);
  EXPECT_NEAR(decode_cell(128, 14.0), 28.0 * 128.0 / 255.0 - 14.0, 1e-15);
  EXPECT_NEAR(decode_cell(128, 14.0), 0.05490, 1e-5);
  EXPECT_EQ(decode_cell(0, 7.0), -7.0);
  EXPECT_EQ(decode_cell(255, 7.0), 7.0);
  EXPECT_EQ(encode_cell(1e6), 255);
  EXPECT_EQ(encode_cell(-1e6), 0);
}

TEST(Quantization, EncodeDecodeMatchesByteQuantisedSigmoid) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 4.0);
  for (int i = 0; i < 10000; ++i) {
    const double raw = g(rng);
    for (double m : {14.0, 7.0}) {
      const double s = 1.0 / (1.0 + std::exp(-raw));
      const double expected = 2.0 * m * (std::floor(255.0 * s + 0.5) / 255.0) - m;
      EXPECT_NEAR(decode_cell(encode_cell(raw), m), expected, 1e-12);
      EXPECT_NEAR(decode_cell(encode_cell(raw), m), 2.0 * m * quantize_value(s) - m, 1e-12);
      EXPECT_LE(std::abs(decode_cell(encode_cell(raw), m) - (2.0 * m * s - m)), m / 255.0 + 1e-12);
    }
  }
}

TEST(Quantization, SquashGradientMatchesFiniteDifference) {
  for (double raw : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    const double h = 1e-6;
    const double fd = (squash_cell(raw + h, 14.0) - squash_cell(raw - h, 14.0)) / (2 * h);
    EXPECT_NEAR(squash_cell_grad(raw, 14.0), fd, 1e-7);
  }
}

}  // namespace
}  // namespace merf
