#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "merf/quantization.hpp"

namespace merf {

// Feature width K is fixed so the feature payload fits one RGBA raster.
inline constexpr int kFeatures = 4;
inline constexpr int kChannels = 4 + kFeatures;
inline constexpr int kAppearanceChannels = kChannels - 1;

enum class StorageMode { kContinuous, kQuantizedBytes };

// L: voxel corners per axis, R: plane texels per axis.
struct GridShape {
  int voxel_res = 512;
  int plane_res = 2048;

  std::size_t voxel_cells() const {
    return static_cast<std::size_t>(voxel_res) * voxel_res * voxel_res;
  }
  std::size_t plane_cells() const { return static_cast<std::size_t>(plane_res) * plane_res; }

  void validate() const {
    if (voxel_res < 2 || plane_res < 2) {
      throw std::invalid_argument("grid resolutions must be at least 2");
    }
  }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

// Plane a is perpendicular to axis a. Its (u, v) coordinates are the two
// remaining axes in increasing order: P_x(y, z), P_y(x, z), P_z(x, y).
inline constexpr std::array<std::array<int, 2>, 3> kPlaneAxes = {{{1, 2}, {0, 2}, {0, 1}}};

inline std::size_t voxel_index(const GridShape& s, int x, int y, int z) {
  return (static_cast<std::size_t>(z) * s.voxel_res + y) * s.voxel_res + x;
}

inline std::size_t plane_index(const GridShape& s, int u, int v) {
  return static_cast<std::size_t>(v) * s.plane_res + u;
}

// Interleaved C-channel arrays: voxel[(cell)*C + c], planes[a][(cell)*C + c].
template <class T>
struct GridArrays {
  GridShape shape;
  std::vector<T> voxel;
  std::array<std::vector<T>, 3> planes;

  GridArrays() = default;
  explicit GridArrays(GridShape s, T fill = T{}) : shape(s) {
    shape.validate();
    voxel.assign(shape.voxel_cells() * kChannels, fill);
    for (auto& p : planes) p.assign(shape.plane_cells() * kChannels, fill);
  }

  std::size_t parameter_count() const { return voxel.size() + 3 * planes[0].size(); }

  template <class F>
  void for_each_array(F&& f) {
    f(voxel);
    for (auto& p : planes) f(p);
  }
  template <class F>
  void for_each_array(F&& f) const {
    f(voxel);
    for (const auto& p : planes) f(p);
  }
};

// Pre-activation grid values (the range [-m, m] per channel).
struct FieldGrids : GridArrays<double> {
  using GridArrays::GridArrays;
  static constexpr StorageMode storage_mode = StorageMode::kContinuous;
};

// Unconstrained trainable parameters; grid values are 2m*sigmoid(raw) - m,
// optionally byte quantised.
struct RawGrids : GridArrays<double> {
  using GridArrays::GridArrays;
};

// Byte storage with density and appearance kept in separate arrays.
struct QuantizedGrids {
  static constexpr StorageMode storage_mode = StorageMode::kQuantizedBytes;

  GridShape shape;
  std::vector<std::uint8_t> voxel_density;     // L^3
  std::vector<std::uint8_t> voxel_appearance;  // L^3 * (C - 1)
  std::array<std::vector<std::uint8_t>, 3> plane_density;
  std::array<std::vector<std::uint8_t>, 3> plane_appearance;

  QuantizedGrids() = default;
  explicit QuantizedGrids(GridShape s) : shape(s) {
    shape.validate();
    voxel_density.assign(shape.voxel_cells(), 0);
    voxel_appearance.assign(shape.voxel_cells() * kAppearanceChannels, 0);
    for (int a = 0; a < 3; ++a) {
      plane_density[a].assign(shape.plane_cells(), 0);
      plane_appearance[a].assign(shape.plane_cells() * kAppearanceChannels, 0);
    }
  }
};

// Lookup of decode_cell for every byte, one table per channel range.
struct DecodeTable {
  std::array<double, 256> density{};
  std::array<double, 256> appearance{};

  DecodeTable() : DecodeTable(QuantizationSpec{}) {}
  explicit DecodeTable(const QuantizationSpec& q) {
    for (int b = 0; b < 256; ++b) {
      density[b] = decode_cell(static_cast<std::uint8_t>(b), q.m_density);
      appearance[b] = decode_cell(static_cast<std::uint8_t>(b), q.m_appearance);
    }
  }
};

inline QuantizedGrids quantize_grids(const RawGrids& raw) {
  QuantizedGrids out(raw.shape);
  auto split = [](const std::vector<double>& src, std::vector<std::uint8_t>& density,
                  std::vector<std::uint8_t>& appearance) {
    const std::size_t cells = density.size();
    for (std::size_t i = 0; i < cells; ++i) {
      density[i] = encode_cell(src[i * kChannels]);
      for (int c = 1; c < kChannels; ++c) {
        appearance[i * kAppearanceChannels + (c - 1)] = encode_cell(src[i * kChannels + c]);
      }
    }
  };
  split(raw.voxel, out.voxel_density, out.voxel_appearance);
  for (int a = 0; a < 3; ++a) split(raw.planes[a], out.plane_density[a], out.plane_appearance[a]);
  return out;
}

inline FieldGrids dequantize_grids(const QuantizedGrids& q, const QuantizationSpec& spec) {
  const DecodeTable table(spec);
  FieldGrids out(q.shape);
  auto merge = [&](const std::vector<std::uint8_t>& density,
                   const std::vector<std::uint8_t>& appearance, std::vector<double>& dst) {
    for (std::size_t i = 0; i < density.size(); ++i) {
      dst[i * kChannels] = table.density[density[i]];
      for (int c = 1; c < kChannels; ++c) {
        dst[i * kChannels + c] = table.appearance[appearance[i * kAppearanceChannels + (c - 1)]];
      }
    }
  };
  merge(q.voxel_density, q.voxel_appearance, out.voxel);
  for (int a = 0; a < 3; ++a) merge(q.plane_density[a], q.plane_appearance[a], out.planes[a]);
  return out;
}

// Grid values seen by the renderer for the given raw parameters. With
// quantisation on this is decode(encode(raw)), bit-identical to the baked path.
inline FieldGrids materialize(const RawGrids& raw, const QuantizationSpec& spec,
                              bool quantized) {
  FieldGrids out(raw.shape);
  auto apply = [&](const std::vector<double>& src, std::vector<double>& dst) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double m = spec.range(static_cast<int>(i % kChannels));
      dst[i] = quantized ? decode_cell(encode_cell(src[i]), m) : squash_cell(src[i], m);
    }
  };
  apply(raw.voxel, out.voxel);
  for (int a = 0; a < 3; ++a) apply(raw.planes[a], out.planes[a]);
  return out;
}

}  // namespace merf
