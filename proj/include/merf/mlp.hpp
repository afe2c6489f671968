#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "merf/grid.hpp"
#include "merf/quantization.hpp"
#include "merf/vec.hpp"

namespace merf {

inline constexpr int kDirectionFrequencies = 4;
inline constexpr int kDirectionEncodingDim = 3 + 2 * kDirectionFrequencies * 3;
inline constexpr int kMlpInputDim = 3 + kFeatures + kDirectionEncodingDim;
inline constexpr int kMlpHidden = 16;

using Rgb = std::array<double, 3>;

// d followed by sin/cos(2^k d_j), axis-major, frequency-minor, sin before cos.
inline std::array<double, kDirectionEncodingDim> encode_direction(const Vec3& d) {
  std::array<double, kDirectionEncodingDim> out{};
  out[0] = d.x;
  out[1] = d.y;
  out[2] = d.z;
  int n = 3;
  for (int j = 0; j < 3; ++j) {
    double scale = 1.0;
    for (int k = 0; k < kDirectionFrequencies; ++k) {
      out[n++] = std::sin(scale * d[j]);
      out[n++] = std::cos(scale * d[j]);
      scale *= 2.0;
    }
  }
  return out;
}

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> weights;  // row-major [out][in]
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(int in_, int out_)
      : in(in_), out(out_), weights(static_cast<std::size_t>(in_) * out_, 0.0), bias(out_, 0.0) {}

  double& w(int o, int i) { return weights[static_cast<std::size_t>(o) * in + i]; }
  double w(int o, int i) const { return weights[static_cast<std::size_t>(o) * in + i]; }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// View-dependence network evaluated once per ray: rectifier hidden layers and
// a sigmoid output that is added to the accumulated diffuse colour.
struct DeferredMlp {
  std::vector<DenseLayer> layers;

  static DeferredMlp zeros(int features = kFeatures) {
    DeferredMlp m;
    m.layers = {DenseLayer(3 + features + kDirectionEncodingDim, kMlpHidden),
                DenseLayer(kMlpHidden, kMlpHidden), DenseLayer(kMlpHidden, 3)};
    return m;
  }

  // Glorot-uniform weights, zero biases.
  static DeferredMlp random(std::uint64_t seed) {
    DeferredMlp m = zeros();
    std::mt19937_64 rng(seed);
    for (auto& layer : m.layers) {
      const double limit = std::sqrt(6.0 / (layer.in + layer.out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (auto& w : layer.weights) w = dist(rng);
    }
    return m;
  }

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.size() != 3) throw std::invalid_argument("deferred MLP must have 3 layers");
    if (layers[0].in != kMlpInputDim || layers[0].out != kMlpHidden ||
        layers[1].in != kMlpHidden || layers[1].out != kMlpHidden ||
        layers[2].in != kMlpHidden || layers[2].out != 3) {
      throw std::invalid_argument("deferred MLP layer dimensions do not chain 34-16-16-3");
    }
    for (const auto& l : layers) {
      if (l.weights.size() != static_cast<std::size_t>(l.in) * l.out ||
          l.bias.size() != static_cast<std::size_t>(l.out)) {
        throw std::invalid_argument("deferred MLP parameter arrays have the wrong size");
      }
    }
  }

  friend bool operator==(const DeferredMlp&, const DeferredMlp&) = default;
};

// Activations kept for the backward pass.
struct MlpTape {
  std::array<double, kMlpInputDim> input{};
  std::array<double, kMlpHidden> hidden1{};
  std::array<double, kMlpHidden> hidden2{};
  Rgb output{};  // after the sigmoid
};

inline std::array<double, kMlpInputDim> mlp_input(std::span<const double> diffuse,
                                                  std::span<const double> features,
                                                  const Vec3& d) {
  if (diffuse.size() != 3 || features.size() != kFeatures) {
    throw std::invalid_argument("deferred MLP input has the wrong dimension");
  }
  std::array<double, kMlpInputDim> x{};
  std::copy(diffuse.begin(), diffuse.end(), x.begin());
  std::copy(features.begin(), features.end(), x.begin() + 3);
  const auto enc = encode_direction(d);
  std::copy(enc.begin(), enc.end(), x.begin() + 3 + kFeatures);
  return x;
}

inline Rgb mlp_forward(const DeferredMlp& mlp, const std::array<double, kMlpInputDim>& x,
                       MlpTape* tape = nullptr) {
  const DenseLayer& l0 = mlp.layers[0];
  const DenseLayer& l1 = mlp.layers[1];
  const DenseLayer& l2 = mlp.layers[2];
  std::array<double, kMlpHidden> h1{};
  std::array<double, kMlpHidden> h2{};
  for (int o = 0; o < kMlpHidden; ++o) {
    double acc = l0.bias[o];
    for (int i = 0; i < kMlpInputDim; ++i) acc += l0.w(o, i) * x[i];
    h1[o] = std::max(acc, 0.0);
  }
  for (int o = 0; o < kMlpHidden; ++o) {
    double acc = l1.bias[o];
    for (int i = 0; i < kMlpHidden; ++i) acc += l1.w(o, i) * h1[i];
    h2[o] = std::max(acc, 0.0);
  }
  Rgb y{};
  for (int o = 0; o < 3; ++o) {
    double acc = l2.bias[o];
    for (int i = 0; i < kMlpHidden; ++i) acc += l2.w(o, i) * h2[i];
    y[o] = sigmoid(acc);
  }
  if (tape) {
    tape->input = x;
    tape->hidden1 = h1;
    tape->hidden2 = h2;
    tape->output = y;
  }
  return y;
}

// C = clamp(C_d + h(C_d, F, d), 0, 1)
inline Rgb deferred_shade(std::span<const double> diffuse, std::span<const double> features,
                          const Vec3& d, const DeferredMlp& mlp) {
  if (static_cast<int>(3 + features.size() + kDirectionEncodingDim) != mlp.input_dim()) {
    throw std::invalid_argument("feature dimension does not match the deferred MLP input");
  }
  const Rgb h = mlp_forward(mlp, mlp_input(diffuse, features, d));
  Rgb c{};
  for (int k = 0; k < 3; ++k) c[k] = std::clamp(diffuse[k] + h[k], 0.0, 1.0);
  return c;
}

// Accumulates dL/d(parameters) into grad (same layout as the network) and
// returns dL/d(input) given dL/d(output after sigmoid).
inline std::array<double, kMlpInputDim> mlp_backward(const DeferredMlp& mlp, const MlpTape& tape,
                                                     const Rgb& grad_output, DeferredMlp& grad) {
  const DenseLayer& l0 = mlp.layers[0];
  const DenseLayer& l1 = mlp.layers[1];
  const DenseLayer& l2 = mlp.layers[2];
  DenseLayer& g0 = grad.layers[0];
  DenseLayer& g1 = grad.layers[1];
  DenseLayer& g2 = grad.layers[2];

  Rgb g_pre{};
  for (int o = 0; o < 3; ++o) {
    const double y = tape.output[o];
    g_pre[o] = grad_output[o] * y * (1.0 - y);
  }
  std::array<double, kMlpHidden> g_h2{};
  for (int o = 0; o < 3; ++o) {
    g2.bias[o] += g_pre[o];
    for (int i = 0; i < kMlpHidden; ++i) {
      g2.w(o, i) += g_pre[o] * tape.hidden2[i];
      g_h2[i] += g_pre[o] * l2.w(o, i);
    }
  }
  std::array<double, kMlpHidden> g_h1{};
  for (int o = 0; o < kMlpHidden; ++o) {
    if (tape.hidden2[o] <= 0.0) continue;
    const double g = g_h2[o];
    g1.bias[o] += g;
    for (int i = 0; i < kMlpHidden; ++i) {
      g1.w(o, i) += g * tape.hidden1[i];
      g_h1[i] += g * l1.w(o, i);
    }
  }
  std::array<double, kMlpInputDim> g_x{};
  for (int o = 0; o < kMlpHidden; ++o) {
    if (tape.hidden1[o] <= 0.0) continue;
    const double g = g_h1[o];
    g0.bias[o] += g;
    for (int i = 0; i < kMlpInputDim; ++i) {
      g0.w(o, i) += g * tape.input[i];
      g_x[i] += g * l0.w(o, i);
    }
  }
  return g_x;
}

}  // namespace merf
