#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>

#include "merf/grid.hpp"
#include "merf/quantization.hpp"
#include "merf/vec.hpp"

namespace merf {

struct FieldSample {
  double density = 0.0;  // per unit of contracted arc length
  std::array<double, 3> diffuse{};
  std::array<double, kFeatures> feature{};
};

using ChannelVector = std::array<double, kChannels>;

// Anything that can hand out the corner values of a voxel cell or a plane
// texel quad. Outputs are laid out [corner * kChannels + channel]; with
// density_only set only channel 0 is written.
template <class S>
concept FieldSource = requires(const S& s, int i, bool density_only,
                               std::span<double, 8 * kChannels> voxel_out,
                               std::span<double, 4 * kChannels> plane_out) {
  { s.shape() } -> std::convertible_to<GridShape>;
  s.voxel_corners(i, i, i, voxel_out, density_only);
  s.plane_corners(i, i, i, plane_out, density_only);
};

// Grid values live at cell corners: contracted p in [-2, 2] maps to the
// continuous index (p + 2) / 4 * (N - 1).
struct LerpCoord {
  int index = 0;
  double frac = 0.0;
};

inline LerpCoord lerp_coord(double p, int n) {
  double u = (p + 2.0) * 0.25 * (n - 1);
  u = std::clamp(u, 0.0, static_cast<double>(n - 1));
  const int i = std::min(static_cast<int>(u), n - 2);
  return {i, u - i};
}

// Interpolation footprint of one contracted point.
struct Stencil {
  std::array<LerpCoord, 3> voxel;
  std::array<std::array<LerpCoord, 2>, 3> plane;

  // corner bit 0 -> x, bit 1 -> y, bit 2 -> z
  double voxel_weight(int corner) const {
    double w = 1.0;
    for (int a = 0; a < 3; ++a) {
      w *= ((corner >> a) & 1) ? voxel[a].frac : 1.0 - voxel[a].frac;
    }
    return w;
  }
  // corner bit 0 -> u, bit 1 -> v
  double plane_weight(int a, int corner) const {
    const double fu = plane[a][0].frac;
    const double fv = plane[a][1].frac;
    return ((corner & 1) ? fu : 1.0 - fu) * ((corner & 2) ? fv : 1.0 - fv);
  }
};

inline bool in_contracted_domain(const Point3& x) {
  return std::abs(x.x) <= 2.0 && std::abs(x.y) <= 2.0 && std::abs(x.z) <= 2.0;
}

inline Stencil make_stencil(const GridShape& shape, const Point3& x) {
  if (!in_contracted_domain(x)) {
    throw std::out_of_range("field query outside the contracted domain [-2, 2]^3");
  }
  Stencil s;
  for (int a = 0; a < 3; ++a) s.voxel[a] = lerp_coord(x[a], shape.voxel_res);
  for (int a = 0; a < 3; ++a) {
    s.plane[a][0] = lerp_coord(x[kPlaneAxes[a][0]], shape.plane_res);
    s.plane[a][1] = lerp_coord(x[kPlaneAxes[a][1]], shape.plane_res);
  }
  return s;
}

// t = V(x, y, z) + P_x(y, z) + P_y(x, z) + P_z(x, y), before any nonlinearity.
template <FieldSource S>
ChannelVector interpolate(const S& source, const Stencil& st, bool density_only = false) {
  const int channels = density_only ? 1 : kChannels;
  ChannelVector t{};
  std::array<double, 8 * kChannels> vbuf;
  source.voxel_corners(st.voxel[0].index, st.voxel[1].index, st.voxel[2].index,
                       std::span<double, 8 * kChannels>(vbuf), density_only);
  for (int corner = 0; corner < 8; ++corner) {
    const double w = st.voxel_weight(corner);
    for (int c = 0; c < channels; ++c) t[c] += w * vbuf[corner * kChannels + c];
  }
  std::array<double, 4 * kChannels> pbuf;
  for (int a = 0; a < 3; ++a) {
    source.plane_corners(a, st.plane[a][0].index, st.plane[a][1].index,
                         std::span<double, 4 * kChannels>(pbuf), density_only);
    for (int corner = 0; corner < 4; ++corner) {
      const double w = st.plane_weight(a, corner);
      for (int c = 0; c < channels; ++c) t[c] += w * pbuf[corner * kChannels + c];
    }
  }
  return t;
}

inline double activate_density(double t0) { return std::exp(t0); }

inline FieldSample activate(const ChannelVector& t) {
  FieldSample s;
  s.density = activate_density(t[0]);
  for (int c = 0; c < 3; ++c) s.diffuse[c] = sigmoid(t[1 + c]);
  for (int k = 0; k < kFeatures; ++k) s.feature[k] = sigmoid(t[4 + k]);
  return s;
}

template <FieldSource S>
FieldSample query_field(const S& source, const Point3& x_c) {
  return activate(interpolate(source, make_stencil(source.shape(), x_c)));
}

template <FieldSource S>
double query_density_only(const S& source, const Point3& x_c) {
  return activate_density(interpolate(source, make_stencil(source.shape(), x_c), true)[0]);
}

// Dense continuous grids.
class ContinuousSource {
 public:
  explicit ContinuousSource(const FieldGrids& grids) : grids_(&grids) {}

  const GridShape& shape() const { return grids_->shape; }

  void voxel_corners(int i, int j, int k, std::span<double, 8 * kChannels> out,
                     bool density_only) const {
    const GridShape& s = grids_->shape;
    const int channels = density_only ? 1 : kChannels;
    for (int corner = 0; corner < 8; ++corner) {
      const std::size_t cell =
          voxel_index(s, i + (corner & 1), j + ((corner >> 1) & 1), k + ((corner >> 2) & 1));
      const double* src = grids_->voxel.data() + cell * kChannels;
      for (int c = 0; c < channels; ++c) out[corner * kChannels + c] = src[c];
    }
  }

  void plane_corners(int a, int u, int v, std::span<double, 4 * kChannels> out,
                     bool density_only) const {
    const GridShape& s = grids_->shape;
    const int channels = density_only ? 1 : kChannels;
    for (int corner = 0; corner < 4; ++corner) {
      const std::size_t cell = plane_index(s, u + (corner & 1), v + ((corner >> 1) & 1));
      const double* src = grids_->planes[a].data() + cell * kChannels;
      for (int c = 0; c < channels; ++c) out[corner * kChannels + c] = src[c];
    }
  }

 private:
  const FieldGrids* grids_;
};

// Dense byte grids, dequantised on read.
class QuantizedSource {
 public:
  QuantizedSource(const QuantizedGrids& grids, const QuantizationSpec& spec)
      : grids_(&grids), table_(spec) {}

  const GridShape& shape() const { return grids_->shape; }

  void voxel_corners(int i, int j, int k, std::span<double, 8 * kChannels> out,
                     bool density_only) const {
    const GridShape& s = grids_->shape;
    for (int corner = 0; corner < 8; ++corner) {
      const std::size_t cell =
          voxel_index(s, i + (corner & 1), j + ((corner >> 1) & 1), k + ((corner >> 2) & 1));
      decode_into(grids_->voxel_density, grids_->voxel_appearance, cell,
                  out.subspan(corner * kChannels, kChannels), density_only);
    }
  }

  void plane_corners(int a, int u, int v, std::span<double, 4 * kChannels> out,
                     bool density_only) const {
    const GridShape& s = grids_->shape;
    for (int corner = 0; corner < 4; ++corner) {
      const std::size_t cell = plane_index(s, u + (corner & 1), v + ((corner >> 1) & 1));
      decode_into(grids_->plane_density[a], grids_->plane_appearance[a], cell,
                  out.subspan(corner * kChannels, kChannels), density_only);
    }
  }

  const DecodeTable& table() const { return table_; }

 private:
  void decode_into(const std::vector<std::uint8_t>& density,
                   const std::vector<std::uint8_t>& appearance, std::size_t cell,
                   std::span<double> out, bool density_only) const {
    out[0] = table_.density[density[cell]];
    if (density_only) return;
    const std::uint8_t* app = appearance.data() + cell * kAppearanceChannels;
    for (int c = 0; c < kAppearanceChannels; ++c) out[1 + c] = table_.appearance[app[c]];
  }

  const QuantizedGrids* grids_;
  DecodeTable table_;
};

inline FieldSample query_field(const FieldGrids& grids, const Point3& x_c) {
  return query_field(ContinuousSource(grids), x_c);
}

inline FieldSample query_field(const QuantizedGrids& grids, const QuantizationSpec& spec,
                               const Point3& x_c) {
  return query_field(QuantizedSource(grids, spec), x_c);
}

inline double query_density_only(const FieldGrids& grids, const Point3& x_c) {
  return query_density_only(ContinuousSource(grids), x_c);
}

inline double query_density_only(const QuantizedGrids& grids, const QuantizationSpec& spec,
                                  const Point3& x_c) {
  return query_density_only(QuantizedSource(grids, spec), x_c);
}

}  // namespace merf
