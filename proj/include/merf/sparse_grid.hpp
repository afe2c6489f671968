#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "merf/field.hpp"
#include "merf/grid.hpp"
#include "merf/occupancy.hpp"
#include "merf/quantization.hpp"

namespace merf {

// Payload byte for cells without stored data: the encoding of raw value 0.
inline const std::uint8_t kEmptyCellByte = encode_cell(0.0);

// Voxel grid stored as (block_size + 1)^3 byte blocks addressed through an
// indirection table. The extra apron layer repeats the first layer of the next
// block, so trilinear lookups never leave a block.
class BlockSparseGrid {
 public:
  static constexpr std::int32_t kEmpty = -1;

  BlockSparseGrid() = default;
  BlockSparseGrid(int voxel_res, int block_size) : voxel_res_(voxel_res), block_size_(block_size) {
    if (block_size < 1 || voxel_res < 2 || voxel_res % block_size != 0) {
      throw std::invalid_argument("voxel resolution must be a positive multiple of block size");
    }
    blocks_per_axis_ = voxel_res / block_size;
    indirection_.assign(static_cast<std::size_t>(blocks_per_axis_) * blocks_per_axis_ *
                            blocks_per_axis_,
                        kEmpty);
  }

  int voxel_res() const { return voxel_res_; }
  int block_size() const { return block_size_; }
  int block_span() const { return block_size_ + 1; }
  int blocks_per_axis() const { return blocks_per_axis_; }
  std::size_t block_voxels() const {
    return static_cast<std::size_t>(block_span()) * block_span() * block_span();
  }
  std::size_t allocated_blocks() const { return block_coords_.size(); }

  std::size_t block_linear(int bx, int by, int bz) const {
    return (static_cast<std::size_t>(bz) * blocks_per_axis_ + by) * blocks_per_axis_ + bx;
  }
  std::int32_t atlas_index(int bx, int by, int bz) const {
    return indirection_[block_linear(bx, by, bz)];
  }

  // Allocation order; atlas index n holds block block_coords()[n].
  const std::vector<std::array<int, 3>>& block_coords() const { return block_coords_; }
  const std::vector<std::uint8_t>& atlas_density() const { return atlas_density_; }
  const std::vector<std::uint8_t>& atlas_appearance() const { return atlas_appearance_; }

  std::size_t local_index(int lx, int ly, int lz) const {
    return (static_cast<std::size_t>(lz) * block_span() + ly) * block_span() + lx;
  }

  // Appends a block and returns its atlas index.
  std::int32_t allocate(int bx, int by, int bz) {
    auto& slot = indirection_[block_linear(bx, by, bz)];
    if (slot != kEmpty) return slot;
    slot = static_cast<std::int32_t>(block_coords_.size());
    block_coords_.push_back({bx, by, bz});
    atlas_density_.resize(atlas_density_.size() + block_voxels(), kEmptyCellByte);
    atlas_appearance_.resize(atlas_appearance_.size() + block_voxels() * kAppearanceChannels,
                             kEmptyCellByte);
    return slot;
  }

  std::uint8_t& density_at(std::int32_t block, std::size_t local) {
    return atlas_density_[static_cast<std::size_t>(block) * block_voxels() + local];
  }
  std::uint8_t* appearance_at(std::int32_t block, std::size_t local) {
    return atlas_appearance_.data() +
           (static_cast<std::size_t>(block) * block_voxels() + local) * kAppearanceChannels;
  }
  std::uint8_t density_at(std::int32_t block, std::size_t local) const {
    return atlas_density_[static_cast<std::size_t>(block) * block_voxels() + local];
  }
  const std::uint8_t* appearance_at(std::int32_t block, std::size_t local) const {
    return atlas_appearance_.data() +
           (static_cast<std::size_t>(block) * block_voxels() + local) * kAppearanceChannels;
  }

  // Rebuilds from serialised parts; validates sizes.
  static BlockSparseGrid from_parts(int voxel_res, int block_size,
                                    std::vector<std::array<int, 3>> coords,
                                    std::vector<std::uint8_t> density,
                                    std::vector<std::uint8_t> appearance) {
    BlockSparseGrid g(voxel_res, block_size);
    if (density.size() != coords.size() * g.block_voxels() ||
        appearance.size() != density.size() * kAppearanceChannels) {
      throw std::invalid_argument("atlas payload size does not match the block count");
    }
    for (std::size_t n = 0; n < coords.size(); ++n) {
      const auto& c = coords[n];
      for (int a = 0; a < 3; ++a) {
        if (c[a] < 0 || c[a] >= g.blocks_per_axis_) {
          throw std::invalid_argument("indirection entry out of range");
        }
      }
      auto& slot = g.indirection_[g.block_linear(c[0], c[1], c[2])];
      if (slot != kEmpty) throw std::invalid_argument("duplicate indirection entry");
      slot = static_cast<std::int32_t>(n);
    }
    g.block_coords_ = std::move(coords);
    g.atlas_density_ = std::move(density);
    g.atlas_appearance_ = std::move(appearance);
    return g;
  }

  friend bool operator==(const BlockSparseGrid&, const BlockSparseGrid&) = default;

 private:
  int voxel_res_ = 0;
  int block_size_ = 8;
  int blocks_per_axis_ = 0;
  std::vector<std::int32_t> indirection_;
  std::vector<std::array<int, 3>> block_coords_;
  std::vector<std::uint8_t> atlas_density_;
  std::vector<std::uint8_t> atlas_appearance_;
};

// Range of voxel cells (lower-corner indices) touched by any point in the
// closed contracted interval [lo, hi].
inline std::array<int, 2> voxel_cell_range(double lo, double hi, int voxel_res) {
  return {lerp_coord(lo, voxel_res).index, lerp_coord(hi, voxel_res).index};
}

// Allocates every block that a query inside an occupied base cell can touch,
// and copies its corner bytes (with apron) from the dense voxel grid.
inline BlockSparseGrid sparsify_voxels(const QuantizedGrids& dense, const BitGrid& occupancy,
                                       int block_size) {
  const int L = dense.shape.voxel_res;
  BlockSparseGrid grid(L, block_size);
  const int nb = grid.blocks_per_axis();
  std::vector<std::uint8_t> wanted(static_cast<std::size_t>(nb) * nb * nb, 0);

  const int B = occupancy.resolution();
  // Per base-cell index, the block range along one axis.
  std::vector<std::array<int, 2>> block_range(B);
  for (int c = 0; c < B; ++c) {
    const Point3 lo = occupancy.cell_min(c, c, c);
    const Point3 hi = occupancy.cell_max(c, c, c);
    const auto cells = voxel_cell_range(lo.x, hi.x, L);
    block_range[c] = {cells[0] / block_size, cells[1] / block_size};
  }
  for (int z = 0; z < B; ++z) {
    for (int y = 0; y < B; ++y) {
      for (int x = 0; x < B; ++x) {
        if (!occupancy.test(x, y, z)) continue;
        for (int bz = block_range[z][0]; bz <= block_range[z][1]; ++bz) {
          for (int by = block_range[y][0]; by <= block_range[y][1]; ++by) {
            for (int bx = block_range[x][0]; bx <= block_range[x][1]; ++bx) {
              wanted[grid.block_linear(bx, by, bz)] = 1;
            }
          }
        }
      }
    }
  }

  const int span = grid.block_span();
  for (int bz = 0; bz < nb; ++bz) {
    for (int by = 0; by < nb; ++by) {
      for (int bx = 0; bx < nb; ++bx) {
        if (!wanted[grid.block_linear(bx, by, bz)]) continue;
        const std::int32_t block = grid.allocate(bx, by, bz);
        for (int lz = 0; lz < span; ++lz) {
          for (int ly = 0; ly < span; ++ly) {
            for (int lx = 0; lx < span; ++lx) {
              const int gx = std::min(bx * block_size + lx, L - 1);
              const int gy = std::min(by * block_size + ly, L - 1);
              const int gz = std::min(bz * block_size + lz, L - 1);
              const std::size_t cell = voxel_index(dense.shape, gx, gy, gz);
              const std::size_t local = grid.local_index(lx, ly, lz);
              grid.density_at(block, local) = dense.voxel_density[cell];
              std::copy_n(dense.voxel_appearance.data() + cell * kAppearanceChannels,
                          kAppearanceChannels, grid.appearance_at(block, local));
            }
          }
        }
      }
    }
  }
  return grid;
}

// The three quantised planes, density and appearance split.
struct QuantizedPlanes {
  int plane_res = 0;
  std::array<std::vector<std::uint8_t>, 3> density;
  std::array<std::vector<std::uint8_t>, 3> appearance;

  static QuantizedPlanes from(const QuantizedGrids& q) {
    return {q.shape.plane_res, q.plane_density, q.plane_appearance};
  }

  friend bool operator==(const QuantizedPlanes&, const QuantizedPlanes&) = default;
};

// Field source over baked data: sparse voxel atlas plus dense planes.
class BakedSource {
 public:
  BakedSource(const BlockSparseGrid& voxels, const QuantizedPlanes& planes,
              const QuantizationSpec& spec)
      : voxels_(&voxels), planes_(&planes), table_(spec) {
    shape_.voxel_res = voxels.voxel_res();
    shape_.plane_res = planes.plane_res;
  }

  const GridShape& shape() const { return shape_; }

  void voxel_corners(int i, int j, int k, std::span<double, 8 * kChannels> out,
                     bool density_only) const {
    const int bs = voxels_->block_size();
    const int bx = i / bs, by = j / bs, bz = k / bs;
    const std::int32_t block = voxels_->atlas_index(bx, by, bz);
    for (int corner = 0; corner < 8; ++corner) {
      std::span<double> dst = out.subspan(corner * kChannels, kChannels);
      if (block == BlockSparseGrid::kEmpty) {
        dst[0] = table_.density[kEmptyCellByte];
        if (!density_only) {
          for (int c = 1; c < kChannels; ++c) dst[c] = table_.appearance[kEmptyCellByte];
        }
        continue;
      }
      const std::size_t local = voxels_->local_index(i - bx * bs + (corner & 1),
                                                     j - by * bs + ((corner >> 1) & 1),
                                                     k - bz * bs + ((corner >> 2) & 1));
      dst[0] = table_.density[voxels_->density_at(block, local)];
      if (density_only) continue;
      const std::uint8_t* app = voxels_->appearance_at(block, local);
      for (int c = 0; c < kAppearanceChannels; ++c) dst[1 + c] = table_.appearance[app[c]];
    }
  }

  void plane_corners(int a, int u, int v, std::span<double, 4 * kChannels> out,
                     bool density_only) const {
    for (int corner = 0; corner < 4; ++corner) {
      const std::size_t cell = plane_index(shape_, u + (corner & 1), v + ((corner >> 1) & 1));
      std::span<double> dst = out.subspan(corner * kChannels, kChannels);
      dst[0] = table_.density[planes_->density[a][cell]];
      if (density_only) continue;
      const std::uint8_t* app = planes_->appearance[a].data() + cell * kAppearanceChannels;
      for (int c = 0; c < kAppearanceChannels; ++c) dst[1 + c] = table_.appearance[app[c]];
    }
  }

 private:
  const BlockSparseGrid* voxels_;
  const QuantizedPlanes* planes_;
  DecodeTable table_;
  GridShape shape_;
};

}  // namespace merf
