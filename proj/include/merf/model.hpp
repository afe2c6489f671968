#pragma once

#include "merf/grid.hpp"
#include "merf/mlp.hpp"
#include "merf/quantization.hpp"

namespace merf {

// A fitted (unbaked) radiance field: raw grid parameters plus the jointly
// trained view-dependence network.
struct FieldModel {
  RawGrids raw;
  DeferredMlp mlp;
  QuantizationSpec quant;
  bool quantization_aware = true;

  // Grid values as the training forward pass sees them.
  FieldGrids grids() const { return materialize(raw, quant, quantization_aware); }
};

}  // namespace merf
