#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "merf/vec.hpp"

namespace merf {

// The seven regions of the piecewise-projective contraction. Outside the unit
// cube the region is named by the coordinate of largest magnitude and its sign.
enum class Region : std::uint8_t { kCore, kPosX, kNegX, kPosY, kNegY, kPosZ, kNegZ };

inline std::string_view to_string(Region r) {
  switch (r) {
    case Region::kCore: return "CORE";
    case Region::kPosX: return "POS_X";
    case Region::kNegX: return "NEG_X";
    case Region::kPosY: return "POS_Y";
    case Region::kNegY: return "NEG_Y";
    case Region::kPosZ: return "POS_Z";
    case Region::kNegZ: return "NEG_Z";
  }
  return "?";
}

struct Ray {
  Point3 origin;
  Vec3 direction;  // unit length
  double t_near = 0.0;
  double t_far = 0.0;

  Point3 at(double t) const { return origin + t * direction; }
};

inline void validate(const Ray& ray) {
  if (!is_finite(ray.origin) || !is_finite(ray.direction)) {
    throw std::invalid_argument("ray has non-finite origin or direction");
  }
  if (std::abs(norm(ray.direction) - 1.0) > 1e-9) {
    throw std::invalid_argument("ray direction is not unit length");
  }
  if (!(ray.t_near >= 0.0) || !(ray.t_near < ray.t_far) || !std::isfinite(ray.t_far)) {
    throw std::invalid_argument("ray interval must satisfy 0 <= t_near < t_far < inf");
  }
}

namespace detail {

// Axis of largest |x_j|; ties go to the lower axis index.
inline int dominant_axis(const Vec3& x) {
  const double ax = std::abs(x.x);
  const double ay = std::abs(x.y);
  const double az = std::abs(x.z);
  if (ax >= ay && ax >= az) return 0;
  if (ay >= az) return 1;
  return 2;
}

}  // namespace detail

inline Region region_of(const Point3& x) {
  if (inf_norm(x) <= 1.0) return Region::kCore;
  const int axis = detail::dominant_axis(x);
  const bool positive = x[axis] >= 0.0;
  return static_cast<Region>(1 + 2 * axis + (positive ? 0 : 1));
}

// Piecewise-projective contraction of R^3 into (-2, 2)^3. Identity on the unit
// cube; in each outer region the dominant coordinate is mapped to
// sign(x_j) * (2 - 1/|x_j|) and the others are divided by ||x||_inf.
inline Point3 contract_pi(const Point3& x) {
  const double n = inf_norm(x);
  if (n <= 1.0) return x;
  const int axis = detail::dominant_axis(x);
  Point3 out = x / n;
  const double a = std::abs(x[axis]);
  out[axis] = std::copysign(2.0 - 1.0 / a, x[axis]);
  return out;
}

// Evaluates the projective map of a given outer region regardless of which
// region x actually lies in. Used to compare the one-sided limits at a
// region boundary.
inline Point3 contract_pi_in_region(const Point3& x, Region region) {
  if (region == Region::kCore) return x;
  const int axis = (static_cast<int>(region) - 1) / 2;
  const double a = std::abs(x[axis]);
  Point3 out = x / a;
  out[axis] = std::copysign(2.0 - 1.0 / a, x[axis]);
  return out;
}

// Spherical contraction into the radius-2 ball.
inline Point3 contract_spherical(const Point3& x) {
  const double n = norm(x);
  if (n <= 1.0) return x;
  return (2.0 - 1.0 / n) * (x / n);
}

// Slab intersection of the ray origin + t * direction, t >= 0, with a closed
// box. Zero direction components are handled as parallel slabs.
inline std::optional<std::array<double, 2>> ray_aabb(const Point3& origin, const Vec3& direction,
                                                     const Point3& box_min, const Point3& box_max) {
  double t_enter = 0.0;
  double t_exit = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 3; ++j) {
    if (direction[j] == 0.0) {
      if (origin[j] < box_min[j] || origin[j] > box_max[j]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / direction[j];
    double t0 = (box_min[j] - origin[j]) * inv;
    double t1 = (box_max[j] - origin[j]) * inv;
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_exit < t_enter) return std::nullopt;
  }
  return std::array<double, 2>{t_enter, t_exit};
}

// One linear piece of a contracted ray. Contracted positions are parametrised
// by arc length s in [0, length] from contracted_start.
struct RaySegment {
  Region region = Region::kCore;
  double t0 = 0.0;
  double t1 = 0.0;
  Point3 contracted_start;
  Point3 contracted_end;
  Vec3 contracted_direction;
  double length = 0.0;

  Point3 contracted_at(double s) const { return contracted_start + s * contracted_direction; }
};

struct SegmentedRay {
  std::vector<RaySegment> segments;

  double contracted_length() const {
    double sum = 0.0;
    for (const auto& s : segments) sum += s.length;
    return sum;
  }
};

// Splits a world-space ray at every region boundary. Crossings are found
// analytically against the planes |x_j| = 1 and x_i = +-x_j.
inline SegmentedRay segment_ray(const Ray& ray) {
  validate(ray);
  constexpr double kDedupTol = 1e-12;
  const Point3& o = ray.origin;
  const Vec3& d = ray.direction;

  std::vector<double> cuts;
  cuts.reserve(20);
  cuts.push_back(ray.t_near);
  auto add = [&](double t) {
    if (std::isfinite(t) && t > ray.t_near && t < ray.t_far) cuts.push_back(t);
  };
  for (int j = 0; j < 3; ++j) {
    if (d[j] != 0.0) {
      add((1.0 - o[j]) / d[j]);
      add((-1.0 - o[j]) / d[j]);
    }
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (d[i] - d[j] != 0.0) add((o[j] - o[i]) / (d[i] - d[j]));
      if (d[i] + d[j] != 0.0) add((-o[j] - o[i]) / (d[i] + d[j]));
    }
  }
  cuts.push_back(ray.t_far);
  std::sort(cuts.begin(), cuts.end());

  std::vector<double> unique_cuts;
  unique_cuts.reserve(cuts.size());
  for (double t : cuts) {
    if (unique_cuts.empty() || t - unique_cuts.back() > kDedupTol) {
      unique_cuts.push_back(t);
    }
  }
  // The far end must stay exact even if a crossing landed within tolerance of it.
  unique_cuts.back() = ray.t_far;

  SegmentedRay out;
  for (std::size_t k = 0; k + 1 < unique_cuts.size(); ++k) {
    const double t0 = unique_cuts[k];
    const double t1 = unique_cuts[k + 1];
    if (!(t1 - t0 > 0.0)) continue;
    const Region region = region_of(ray.at(0.5 * (t0 + t1)));
    if (!out.segments.empty() && out.segments.back().region == region) {
      out.segments.back().t1 = t1;
    } else {
      RaySegment seg;
      seg.region = region;
      seg.t0 = t0;
      seg.t1 = t1;
      out.segments.push_back(seg);
    }
  }

  for (auto& seg : out.segments) {
    // Evaluate with the segment's own region map so endpoints on a boundary
    // land on the correct side.
    seg.contracted_start = contract_pi_in_region(ray.at(seg.t0), seg.region);
    seg.contracted_end = contract_pi_in_region(ray.at(seg.t1), seg.region);
    const Vec3 delta = seg.contracted_end - seg.contracted_start;
    seg.length = norm(delta);
    seg.contracted_direction = seg.length > 0.0 ? delta / seg.length : Vec3{};
  }
  std::erase_if(out.segments, [](const RaySegment& s) { return !(s.length > 0.0); });
  return out;
}

}  // namespace merf
