#pragma once

// Shared fixtures: a small hand-built field (a dense ball with random
// appearance) and cameras looking at it.

#include <algorithm>
#include <random>
#include <vector>

#include "merf.hpp"

namespace merf::testing {

// Raw parameters whose voxel density is high inside a ball and near zero
// elsewhere; planes carry no density. Appearance is random.
inline FieldModel ball_model(const GridShape& shape, std::uint64_t seed,
                             const Point3& center = {0.1, -0.05, 0.0}, double radius = 0.45) {
  FieldModel model;
  model.raw = RawGrids(shape);
  model.mlp = DeferredMlp::random(seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> app(0.0, 1.5);
  const int L = shape.voxel_res;
  for (int z = 0; z < L; ++z) {
    for (int y = 0; y < L; ++y) {
      for (int x = 0; x < L; ++x) {
        const Point3 p{4.0 * x / (L - 1) - 2.0, 4.0 * y / (L - 1) - 2.0, 4.0 * z / (L - 1) - 2.0};
        double* v = model.raw.voxel.data() + voxel_index(shape, x, y, z) * kChannels;
        v[0] = norm(p - center) < radius ? 0.6 : -3.5;
        for (int c = 1; c < kChannels; ++c) v[c] = app(rng);
      }
    }
  }
  for (auto& plane : model.raw.planes) {
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = i % kChannels == 0 ? -0.2 : app(rng);
  }
  return model;
}

inline std::vector<Camera> ring_cameras(int count, int width, int height, double radius = 2.2) {
  std::vector<Camera> cams;
  for (int i = 0; i < count; ++i) {
    const double az = 2.0 * 3.141592653589793 * i / count + 0.3;
    const Point3 eye{radius * std::cos(az), radius * std::sin(az), 0.6 + 0.2 * (i % 3)};
    cams.push_back(look_at_camera(eye, {0, 0, 0}, width, height, 50.0));
  }
  return cams;
}

inline std::vector<Ray> camera_rays(const std::vector<Camera>& cams) {
  std::vector<Ray> rays;
  for (const auto& c : cams) {
    for (int y = 0; y < c.height; ++y) {
      for (int x = 0; x < c.width; ++x) rays.push_back(c.pixel_ray(x, y));
    }
  }
  return rays;
}

inline AssetBundle bake_ball(const GridShape& shape, std::uint64_t seed, int cams = 6,
                             int res = 24) {
  const FieldModel model = ball_model(shape, seed);
  BakeConfig cfg;
  cfg.march = MarchConfig::for_plane_resolution(shape.plane_res);
  const auto rays = camera_rays(ring_cameras(cams, res, res));
  return bake_scene(model, rays, cfg);
}

inline double mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// Random model and rays for derivative checks: moderate densities so that
// gradients reach deep along each ray.
struct GradientFixture {
  FieldModel model;
  std::vector<TrainingRay> rays;
  FitConfig cfg;
};

inline GradientFixture gradient_fixture(std::uint64_t seed, bool quantization_aware = false) {
  GradientFixture f;
  const GridShape shape{8, 16};
  f.model.raw = RawGrids(shape);
  f.model.mlp = DeferredMlp::random(seed);
  f.model.quantization_aware = quantization_aware;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> density(-0.02, 0.15);
  std::normal_distribution<double> app(0.0, 0.5);
  f.model.raw.for_each_array([&](std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i % kChannels == 0 ? density(rng) : app(rng);
  });
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    const Vec3 dir = normalize(Vec3{g(rng), g(rng), g(rng)});
    const Point3 origin = -2.5 * dir + 0.4 * Vec3{g(rng), g(rng), g(rng)};
    f.rays.push_back({{origin, dir, 0.0, 8.0}, {u(rng), u(rng), u(rng)}});
  }
  f.cfg.quantization_aware = quantization_aware;
  f.cfg.skip_alpha = 0.0;
  MarchConfig march = MarchConfig::for_plane_resolution(shape.plane_res);
  march.termination_transmittance = 0.0;
  f.cfg.march = march;
  return f;
}

struct GradientCheckResult {
  std::vector<double> relative_errors;  // one per checked grid parameter
  double worst = 0.0;
};

// Analytic gradient vs central differences (step h on raw values) at `count`
// random grid parameters that the rays touch.
inline GradientCheckResult gradient_check(std::uint64_t seed, int count = 20, double h = 1e-3) {
  GradientFixture f = gradient_fixture(seed);
  Gradients grad;
  loss_and_gradients(f.model, f.rays, f.cfg, &grad);
  FitConfig photometric_only = f.cfg;
  photometric_only.weight_decay = 0.0;
  Gradients touched;
  loss_and_gradients(f.model, f.rays, photometric_only, &touched);

  struct Slot {
    std::vector<double>* raw;
    const std::vector<double>* grad;
    std::size_t index;
  };
  std::vector<Slot> candidates;
  auto collect = [&](std::vector<double>& raw, const std::vector<double>& g,
                     const std::vector<double>& t) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (std::abs(t[i]) > 1e-7) candidates.push_back({&raw, &g, i});
    }
  };
  collect(f.model.raw.voxel, grad.grid.voxel, touched.grid.voxel);
  for (int a = 0; a < 3; ++a) collect(f.model.raw.planes[a], grad.grid.planes[a], touched.grid.planes[a]);
  std::mt19937_64 rng(seed + 99);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  GradientCheckResult out;
  for (int k = 0; k < count && k < static_cast<int>(candidates.size()); ++k) {
    Slot& s = candidates[k];
    const double saved = (*s.raw)[s.index];
    (*s.raw)[s.index] = saved + h;
    const double lp = loss_and_gradients(f.model, f.rays, f.cfg, nullptr);
    (*s.raw)[s.index] = saved - h;
    const double lm = loss_and_gradients(f.model, f.rays, f.cfg, nullptr);
    (*s.raw)[s.index] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double an = (*s.grad)[s.index];
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-300});
    out.relative_errors.push_back(rel);
    out.worst = std::max(out.worst, rel);
  }
  return out;
}

}  // namespace merf::testing
