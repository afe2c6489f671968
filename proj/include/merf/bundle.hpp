#pragma once

#include <string>

#include "merf/mlp.hpp"
#include "merf/occupancy.hpp"
#include "merf/quantization.hpp"
#include "merf/render.hpp"
#include "merf/sparse_grid.hpp"

namespace merf {

inline constexpr const char* kBundleVersion = "1.0";

// Everything a viewer needs to render a baked scene.
struct AssetBundle {
  std::string version = kBundleVersion;
  GridShape shape;
  QuantizationSpec quant;
  MarchConfig march;
  QuantizedPlanes planes;
  BlockSparseGrid voxels;
  OccupancyPyramid occupancy;
  DeferredMlp mlp;

  BakedSource source() const { return BakedSource(voxels, planes, quant); }

  friend bool operator==(const AssetBundle& a, const AssetBundle& b) {
    return a.version == b.version && a.shape == b.shape &&
           a.quant.m_density == b.quant.m_density &&
           a.quant.m_appearance == b.quant.m_appearance && a.march.step_size == b.march.step_size &&
           a.march.termination_transmittance == b.march.termination_transmittance &&
           a.march.max_steps == b.march.max_steps && a.planes == b.planes &&
           a.voxels == b.voxels && a.occupancy == b.occupancy && a.mlp == b.mlp;
  }
};

inline FloatImage render_image(const Camera& camera, const AssetBundle& bundle,
                               const MarchConfig& cfg, int threads = 1) {
  const BakedSource src = bundle.source();
  return render_image(camera, src, bundle.occupancy, bundle.mlp, cfg, threads);
}

inline FloatImage render_reference(const Camera& camera, const AssetBundle& bundle,
                                   const MarchConfig& cfg, int threads = 1) {
  const BakedSource src = bundle.source();
  return render_reference(camera, src, &bundle.occupancy, bundle.mlp, cfg, threads);
}

}  // namespace merf
