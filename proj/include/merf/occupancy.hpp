#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <stdexcept>
#include <vector>

#include "merf/vec.hpp"

namespace merf {

// Packed cubic bit grid over the contracted domain [-2, 2]^3. Bit k of byte n
// is linear index 8n + k; linear index is x-fastest, then y, then z.
class BitGrid {
 public:
  BitGrid() = default;
  explicit BitGrid(int resolution)
      : resolution_(resolution), bytes_((cell_count(resolution) + 7) / 8, 0) {
    if (resolution < 1) throw std::invalid_argument("bit grid resolution must be positive");
  }
  BitGrid(int resolution, std::vector<std::uint8_t> bytes) : resolution_(resolution), bytes_(std::move(bytes)) {
    if (bytes_.size() != (cell_count(resolution) + 7) / 8) {
      throw std::invalid_argument("bit grid payload size does not match its resolution");
    }
  }

  static std::size_t cell_count(int resolution) {
    return static_cast<std::size_t>(resolution) * resolution * resolution;
  }

  int resolution() const { return resolution_; }
  std::size_t size() const { return cell_count(resolution_); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * resolution_ + y) * resolution_ + x;
  }

  bool test(std::size_t i) const { return (bytes_[i >> 3] >> (i & 7)) & 1u; }
  bool test(int x, int y, int z) const { return test(index(x, y, z)); }
  void set(std::size_t i) { bytes_[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7)); }
  void set(int x, int y, int z) { set(index(x, y, z)); }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bytes_) n += static_cast<std::size_t>(std::popcount(b));
    return n;
  }
  double fraction() const { return static_cast<double>(count()) / static_cast<double>(size()); }

  // Cell containing contracted coordinate p along one axis.
  int cell_of(double p) const {
    const int c = static_cast<int>(std::floor((p + 2.0) * 0.25 * resolution_));
    return std::clamp(c, 0, resolution_ - 1);
  }

  Point3 cell_min(int x, int y, int z) const {
    const double h = 4.0 / resolution_;
    return {x * h - 2.0, y * h - 2.0, z * h - 2.0};
  }
  Point3 cell_max(int x, int y, int z) const {
    const double h = 4.0 / resolution_;
    return {(x + 1) * h - 2.0, (y + 1) * h - 2.0, (z + 1) * h - 2.0};
  }

  friend bool operator==(const BitGrid&, const BitGrid&) = default;

 private:
  int resolution_ = 0;
  std::vector<std::uint8_t> bytes_;
};

inline constexpr std::array<int, 3> kPoolingFactors = {16, 32, 128};

// Full-resolution occupancy plus max-pooled coarse levels.
struct OccupancyPyramid {
  BitGrid base;
  std::vector<int> factors;    // pooling factor per level, relative to base
  std::vector<BitGrid> levels;  // same order as factors

  friend bool operator==(const OccupancyPyramid&, const OccupancyPyramid&) = default;
};

inline OccupancyPyramid build_pyramid(const BitGrid& base) {
  const int n = base.resolution();
  OccupancyPyramid pyr;
  pyr.base = base;
  if (n % kPoolingFactors.back() != 0) {
    throw std::invalid_argument("occupancy base resolution must be divisible by " +
                                std::to_string(kPoolingFactors.back()));
  }
  for (int f : kPoolingFactors) {
    pyr.factors.push_back(f);
    pyr.levels.emplace_back(n / f);
  }
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (!base.test(x, y, z)) continue;
        for (std::size_t l = 0; l < pyr.levels.size(); ++l) {
          const int f = pyr.factors[l];
          pyr.levels[l].set(x / f, y / f, z / f);
        }
      }
    }
  }
  return pyr;
}

// Result of a coarse-to-fine occupancy lookup. When empty, box_min/box_max
// bound the largest empty cell that contains the point.
struct OccupancyProbe {
  bool occupied = true;
  Point3 box_min;
  Point3 box_max;
};

inline OccupancyProbe probe(const OccupancyPyramid& pyr, const Point3& p) {
  const BitGrid& base = pyr.base;
  const int bx = base.cell_of(p.x);
  const int by = base.cell_of(p.y);
  const int bz = base.cell_of(p.z);
  for (std::size_t l = pyr.levels.size(); l-- > 0;) {
    const int f = pyr.factors[l];
    const BitGrid& g = pyr.levels[l];
    const int x = bx / f, y = by / f, z = bz / f;
    if (!g.test(x, y, z)) return {false, g.cell_min(x, y, z), g.cell_max(x, y, z)};
  }
  if (!base.test(bx, by, bz)) {
    return {false, base.cell_min(bx, by, bz), base.cell_max(bx, by, bz)};
  }
  return {};
}

inline bool occupied_at(const BitGrid& base, const Point3& p) {
  return base.test(base.cell_of(p.x), base.cell_of(p.y), base.cell_of(p.z));
}

}  // namespace merf
