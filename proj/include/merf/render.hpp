#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "merf/contraction.hpp"
#include "merf/field.hpp"
#include "merf/mlp.hpp"
#include "merf/occupancy.hpp"
#include "merf/parallel.hpp"

namespace merf {

struct MarchConfig {
  double step_size = (4.0 / 2048) / 2;  // contracted units; half a plane texel
  double termination_transmittance = 2e-4;
  int max_steps = 4 * 2048;

  static MarchConfig for_plane_resolution(int plane_res) {
    MarchConfig cfg;
    cfg.step_size = (4.0 / plane_res) / 2.0;
    cfg.max_steps = 4 * plane_res;
    return cfg;
  }

  void validate() const {
    if (!(step_size > 0.0)) throw std::invalid_argument("step size must be positive");
    if (!(termination_transmittance >= 0.0 && termination_transmittance < 1.0)) {
      throw std::invalid_argument("termination transmittance must lie in [0, 1)");
    }
    if (max_steps < 1) throw std::invalid_argument("max_steps must be positive");
  }
};

struct RayAccumulation {
  Rgb diffuse{};
  std::array<double, kFeatures> feature{};
  double transmittance = 1.0;

  double opacity() const { return 1.0 - transmittance; }
};

inline double alpha_from_density(double density, double delta) {
  return 1.0 - std::exp(-density * delta);
}

// One quadrature step: w = alpha * T, accumulate, then T *= 1 - alpha.
inline RayAccumulation composite_step(RayAccumulation acc, const FieldSample& sample,
                                      double delta) {
  const double alpha = alpha_from_density(sample.density, delta);
  const double w = alpha * acc.transmittance;
  for (int c = 0; c < 3; ++c) acc.diffuse[c] += w * sample.diffuse[c];
  for (int k = 0; k < kFeatures; ++k) acc.feature[k] += w * sample.feature[k];
  acc.transmittance *= 1.0 - alpha;
  return acc;
}

// Walks the uniform sample grid s_k = (k + 1/2) * step of every contracted
// segment. skip(p) may return an empty box containing p; the walk then resumes
// at the first grid position past the box exit. visit(p) returns false to stop.
// Returns false if max_steps ran out.
template <class SkipFn, class VisitFn>
bool walk_samples(const SegmentedRay& ray, const MarchConfig& cfg, SkipFn&& skip,
                  VisitFn&& visit) {
  const double step = cfg.step_size;
  constexpr double kExitSlack = 1e-9;
  int steps = 0;
  for (const RaySegment& seg : ray.segments) {
    std::int64_t k = 0;
    while (true) {
      const double s = (static_cast<double>(k) + 0.5) * step;
      if (s >= seg.length) break;
      if (++steps > cfg.max_steps) return false;
      const Point3 p = seg.contracted_at(s);
      if (const std::optional<std::array<Point3, 2>> box = skip(p)) {
        const auto hit = ray_aabb(seg.contracted_start, seg.contracted_direction, (*box)[0],
                                  (*box)[1]);
        std::int64_t next = k + 1;
        if (hit) {
          const double t_exit = (*hit)[1];
          if (t_exit >= seg.length) break;
          next = std::max(next, static_cast<std::int64_t>(
                                    std::ceil((t_exit - kExitSlack) / step - 0.5)));
        }
        k = next;
        continue;
      }
      if (!visit(p)) return true;
      ++k;
    }
  }
  return true;
}

struct RayResult {
  Rgb color{};
  RayAccumulation accumulation;
  std::size_t field_queries = 0;
  bool max_steps_exceeded = false;
};

// Optional instrumentation, called with every contracted position at which the
// field is read.
using QueryObserver = std::function<void(const Point3&)>;

// Accelerated march: coarse-to-fine occupancy skipping, density-gated
// appearance reads, early termination, then deferred shading.
template <FieldSource S>
RayResult march_ray(const Ray& ray, const S& field, const OccupancyPyramid& occupancy,
                    const DeferredMlp& mlp, const MarchConfig& cfg,
                    const QueryObserver* observer = nullptr) {
  const SegmentedRay segmented = segment_ray(ray);
  RayResult result;
  RayAccumulation& acc = result.accumulation;
  const GridShape shape = field.shape();
  auto skip = [&](const Point3& p) -> std::optional<std::array<Point3, 2>> {
    const OccupancyProbe pr = probe(occupancy, p);
    if (pr.occupied) return std::nullopt;
    return std::array<Point3, 2>{pr.box_min, pr.box_max};
  };
  auto visit = [&](const Point3& p) {
    if (observer) (*observer)(p);
    ++result.field_queries;
    const Stencil st = make_stencil(shape, p);
    const ChannelVector density_only = interpolate(field, st, true);
    const double density = activate_density(density_only[0]);
    const double alpha = alpha_from_density(density, cfg.step_size);
    if (alpha > 0.0) {
      FieldSample sample = activate(interpolate(field, st, false));
      sample.density = density;
      acc = composite_step(acc, sample, cfg.step_size);
    }
    return acc.transmittance >= cfg.termination_transmittance;
  };
  result.max_steps_exceeded = !walk_samples(segmented, cfg, skip, visit);
  result.color = deferred_shade(acc.diffuse, acc.feature, ray.direction, mlp);
  return result;
}

// Oracle march: same sample grid and maths, no skipping and no read gating.
// With an occupancy grid, density outside occupied base cells is zero.
template <FieldSource S>
RayResult march_ray_reference(const Ray& ray, const S& field, const OccupancyPyramid* occupancy,
                              const DeferredMlp& mlp, const MarchConfig& cfg) {
  const SegmentedRay segmented = segment_ray(ray);
  RayResult result;
  RayAccumulation& acc = result.accumulation;
  auto no_skip = [](const Point3&) -> std::optional<std::array<Point3, 2>> {
    return std::nullopt;
  };
  auto visit = [&](const Point3& p) {
    ++result.field_queries;
    FieldSample sample = query_field(field, p);
    if (occupancy && !occupied_at(occupancy->base, p)) sample.density = 0.0;
    acc = composite_step(acc, sample, cfg.step_size);
    return acc.transmittance >= cfg.termination_transmittance;
  };
  result.max_steps_exceeded = !walk_samples(segmented, cfg, no_skip, visit);
  result.color = deferred_shade(acc.diffuse, acc.feature, ray.direction, mlp);
  return result;
}

// Pinhole camera, OpenCV convention: +x right, +y down, +z forward.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 12> camera_to_world{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};  // row-major 3x4
  double near = 0.0;
  double far = 1e3;

  Point3 position() const { return {camera_to_world[3], camera_to_world[7], camera_to_world[11]}; }

  Vec3 rotate(const Vec3& v) const {
    const auto& m = camera_to_world;
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[4] * v.x + m[5] * v.y + m[6] * v.z,
            m[8] * v.x + m[9] * v.y + m[10] * v.z};
  }

  // Ray through the centre of pixel (px, py).
  Ray pixel_ray(int px, int py) const {
    const Vec3 d_cam{(px + 0.5 - cx) / fx, (py + 0.5 - cy) / fy, 1.0};
    return {position(), normalize(rotate(d_cam)), near, far};
  }

  void validate() const {
    if (width < 1 || height < 1) throw std::invalid_argument("camera size must be positive");
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
    if (!(near >= 0.0) || !(near < far) || !std::isfinite(far)) {
      throw std::invalid_argument("camera needs 0 <= near < far < inf");
    }
    for (double v : camera_to_world) {
      if (!std::isfinite(v)) throw std::invalid_argument("camera pose is not finite");
    }
    const auto& m = camera_to_world;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double d = 0.0;
        for (int k = 0; k < 3; ++k) d += m[k * 4 + i] * m[k * 4 + j];
        if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-6) {
          throw std::invalid_argument("camera rotation is not orthonormal");
        }
      }
    }
  }
};

// Linear RGB in [0, 1] plus opacity, row-major.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;
  std::vector<double> alpha;
  std::size_t flagged_pixels = 0;
  std::size_t field_queries = 0;

  FloatImage() = default;
  FloatImage(int w, int h)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0),
        alpha(static_cast<std::size_t>(w) * h, 0.0) {}
};

// 8-bit interleaved raster.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, 0) {}

  friend bool operator==(const Image&, const Image&) = default;
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

inline Image to_image(const FloatImage& f, bool with_alpha = false) {
  const int c = with_alpha ? 4 : 3;
  Image img(f.width, f.height, c);
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) img.pixels[i * c + k] = to_byte(f.rgb[i * 3 + k]);
    if (with_alpha) img.pixels[i * c + 3] = to_byte(f.alpha[i]);
  }
  return img;
}

// Renders every pixel with march(ray) -> RayResult. Rows are split across
// threads; each pixel is independent so the output is thread-count invariant.
template <class MarchFn>
FloatImage render_with(const Camera& camera, MarchFn&& march, int threads) {
  camera.validate();
  FloatImage img(camera.width, camera.height);
  std::vector<std::size_t> flagged(camera.height, 0);
  std::vector<std::size_t> queries(camera.height, 0);
  parallel_for(static_cast<std::size_t>(camera.height), threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < camera.width; ++x) {
      const RayResult r = march(camera.pixel_ray(x, y));
      const std::size_t i = static_cast<std::size_t>(y) * camera.width + x;
      for (int k = 0; k < 3; ++k) img.rgb[i * 3 + k] = r.color[k];
      img.alpha[i] = r.accumulation.opacity();
      flagged[row] += r.max_steps_exceeded ? 1 : 0;
      queries[row] += r.field_queries;
    }
  });
  for (int y = 0; y < camera.height; ++y) {
    img.flagged_pixels += flagged[y];
    img.field_queries += queries[y];
  }
  return img;
}

template <FieldSource S>
FloatImage render_image(const Camera& camera, const S& field, const OccupancyPyramid& occupancy,
                        const DeferredMlp& mlp, const MarchConfig& cfg, int threads = 1) {
  cfg.validate();
  return render_with(
      camera, [&](const Ray& r) { return march_ray(r, field, occupancy, mlp, cfg); }, threads);
}

template <FieldSource S>
FloatImage render_reference(const Camera& camera, const S& field,
                            const OccupancyPyramid* occupancy, const DeferredMlp& mlp,
                            const MarchConfig& cfg, int threads = 1) {
  cfg.validate();
  return render_with(
      camera, [&](const Ray& r) { return march_ray_reference(r, field, occupancy, mlp, cfg); },
      threads);
}

// Peak signal-to-noise ratio on [0, 1]-normalised channels; +inf when equal.
inline double psnr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("psnr needs equally sized, non-empty images");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw std::invalid_argument("psnr: image dimensions differ");
  }
  std::vector<double> fa(a.pixels.size());
  std::vector<double> fb(b.pixels.size());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    fa[i] = a.pixels[i] / 255.0;
    fb[i] = b.pixels[i] / 255.0;
  }
  return psnr(fa, fb);
}

}  // namespace merf
