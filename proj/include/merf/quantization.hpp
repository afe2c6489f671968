#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace merf {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Affine ranges for dequantised grid values. Densities pass through exp()
// after interpolation, hence the wider range.
struct QuantizationSpec {
  double m_density = 14.0;
  double m_appearance = 7.0;
  int levels = 256;

  double range(int channel) const { return channel == 0 ? m_density : m_appearance; }
};

inline constexpr double kByteMax = 255.0;

// Forward pass of the byte quantiser. The backward pass is the identity
// (straight-through), see quantize_value_grad.
inline double quantize_value(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return std::floor(kByteMax * v + 0.5) / kByteMax;
}

constexpr double quantize_value_grad(double /*v*/) { return 1.0; }

inline std::uint8_t encode_cell(double raw) {
  return static_cast<std::uint8_t>(std::floor(kByteMax * sigmoid(raw) + 0.5));
}

inline double decode_cell(std::uint8_t b, double m) {
  return 2.0 * m * (static_cast<double>(b) / kByteMax) - m;
}

// Continuous (non-quantised) map from a raw parameter to the grid value range.
inline double squash_cell(double raw, double m) { return 2.0 * m * sigmoid(raw) - m; }

// d squash_cell / d raw; also the straight-through gradient of the quantised path.
inline double squash_cell_grad(double raw, double m) {
  const double s = sigmoid(raw);
  return 2.0 * m * s * (1.0 - s);
}

}  // namespace merf
