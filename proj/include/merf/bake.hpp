#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "merf/bundle.hpp"
#include "merf/contraction.hpp"
#include "merf/field.hpp"
#include "merf/model.hpp"
#include "merf/occupancy.hpp"
#include "merf/parallel.hpp"
#include "merf/render.hpp"
#include "merf/sparse_grid.hpp"

namespace merf {

struct WeightedPoint {
  Point3 position;  // contracted
  double weight = 0.0;
  double alpha = 0.0;
};

// Marks the 2x2x2 base cells whose centres surround p.
inline void mark_point(BitGrid& grid, const Point3& p) {
  const int n = grid.resolution();
  std::array<std::array<int, 2>, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] + 2.0) * 0.25 * n - 0.5;
    const int i0 = static_cast<int>(std::floor(u));
    idx[a] = {std::clamp(i0, 0, n - 1), std::clamp(i0 + 1, 0, n - 1)};
  }
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) grid.set(idx[0][dx], idx[1][dy], idx[2][dz]);
    }
  }
}

inline bool passes_thresholds(const WeightedPoint& p, double threshold) {
  return p.weight > threshold && p.alpha > threshold;
}

inline BitGrid compute_occupancy(std::span<const WeightedPoint> points, double threshold,
                                 int base_resolution) {
  BitGrid grid(base_resolution);
  for (const auto& p : points) {
    if (!in_contracted_domain(p.position)) {
      throw std::out_of_range("weighted point outside the contracted domain");
    }
    if (passes_thresholds(p, threshold)) mark_point(grid, p.position);
  }
  return grid;
}

// Marches one ray on the renderer's sample grid and reports every sample's
// weight and alpha. Only density is read.
template <FieldSource S, class Sink>
void march_weights(const Ray& ray, const S& field, const MarchConfig& cfg, Sink&& sink) {
  const SegmentedRay segmented = segment_ray(ray);
  double transmittance = 1.0;
  auto no_skip = [](const Point3&) -> std::optional<std::array<Point3, 2>> {
    return std::nullopt;
  };
  walk_samples(segmented, cfg, no_skip, [&](const Point3& p) {
    const double alpha = alpha_from_density(query_density_only(field, p), cfg.step_size);
    const WeightedPoint wp{p, alpha * transmittance, alpha};
    sink(wp);
    transmittance *= 1.0 - alpha;
    return transmittance >= cfg.termination_transmittance;
  });
}

template <FieldSource S>
std::vector<WeightedPoint> collect_weighted_points(std::span<const Ray> rays, const S& field,
                                                   const MarchConfig& cfg) {
  std::vector<WeightedPoint> points;
  for (const Ray& ray : rays) {
    march_weights(ray, field, cfg, [&](const WeightedPoint& p) { points.push_back(p); });
  }
  return points;
}

// Streaming equivalent of compute_occupancy(collect_weighted_points(...)).
// Each worker marks a private grid; the grids are OR-merged afterwards.
template <FieldSource S>
BitGrid occupancy_from_rays(std::span<const Ray> rays, const S& field, const MarchConfig& cfg,
                            double threshold, int base_resolution, int threads = 1) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(rays.size())));
  std::vector<BitGrid> shards(threads, BitGrid(base_resolution));
  parallel_chunks(rays.size(), threads, [&](std::size_t begin, std::size_t end, int worker) {
    for (std::size_t i = begin; i < end; ++i) {
      march_weights(rays[i], field, cfg, [&](const WeightedPoint& p) {
        if (passes_thresholds(p, threshold)) mark_point(shards[worker], p.position);
      });
    }
  });
  std::vector<std::uint8_t> merged(shards[0].bytes().size(), 0);
  for (const auto& s : shards) {
    for (std::size_t i = 0; i < merged.size(); ++i) merged[i] |= s.bytes()[i];
  }
  return BitGrid(base_resolution, std::move(merged));
}

struct BakeConfig {
  double threshold = 0.005;
  int base_resolution = 0;  // 0: same as the plane resolution
  int block_size = 8;
  MarchConfig march;
  int threads = 1;
};

// Quantises, culls and sparsifies a fitted model into a render-ready bundle.
inline AssetBundle bake_scene(const FieldModel& model, std::span<const Ray> training_rays,
                              const BakeConfig& cfg) {
  model.mlp.validate();
  cfg.march.validate();
  const GridShape shape = model.raw.shape;
  const int base_res = cfg.base_resolution > 0 ? cfg.base_resolution : shape.plane_res;

  const QuantizedGrids quantized = quantize_grids(model.raw);
  const QuantizedSource source(quantized, model.quant);
  const BitGrid occupancy =
      occupancy_from_rays(training_rays, source, cfg.march, cfg.threshold, base_res, cfg.threads);

  AssetBundle bundle;
  bundle.shape = shape;
  bundle.quant = model.quant;
  bundle.march = cfg.march;
  bundle.planes = QuantizedPlanes::from(quantized);
  bundle.voxels = sparsify_voxels(quantized, occupancy, cfg.block_size);
  bundle.occupancy = build_pyramid(occupancy);
  bundle.mlp = model.mlp;
  return bundle;
}

}  // namespace merf
