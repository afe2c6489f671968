#include <gtest/gtest.h>

#include <random>

#include "merf/occupancy.hpp"

namespace merf {
namespace {

TEST(BitGrid, BitOrderFixture) {
  BitGrid g(4);
  g.set(1, 0, 0);  // linear 1  -> byte 0, bit 1
  g.set(3, 1, 0);  // linear 7  -> byte 0, bit 7
  g.set(2, 3, 2);  // linear 46 -> byte 5, bit 6
  ASSERT_EQ(g.bytes().size(), 8u);
  EXPECT_EQ(g.bytes()[0], 0b10000010);
  EXPECT_EQ(g.bytes()[5], 0b01000000);
  for (std::size_t n : {1u, 2u, 3u, 4u, 6u, 7u}) EXPECT_EQ(g.bytes()[n], 0) << n;
  EXPECT_EQ(g.count(), 3u);
  EXPECT_TRUE(g.test(46));
  EXPECT_FALSE(g.test(45));
}

TEST(BitGrid, PayloadSizeValidated) {
  EXPECT_THROW(BitGrid(4, std::vector<std::uint8_t>(7)), std::invalid_argument);
  EXPECT_NO_THROW(BitGrid(4, std::vector<std::uint8_t>(8)));
}

TEST(Pyramid, EmptyAndSingleBit) {
  const auto empty = build_pyramid(BitGrid(128));
  ASSERT_EQ(empty.levels.size(), 3u);
  EXPECT_EQ(empty.factors, (std::vector<int>{16, 32, 128}));
  for (const auto& l : empty.levels) EXPECT_EQ(l.count(), 0u);
  BitGrid one(128);
  one.set(77, 5, 120);
  const auto pyr = build_pyramid(one);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(pyr.levels[l].count(), 1u);
    const int f = pyr.factors[l];
    EXPECT_TRUE(pyr.levels[l].test(77 / f, 5 / f, 120 / f));
  }
}

TEST(Pyramid, LevelsAreExactMaxPools) {
  std::mt19937_64 rng(51);
  std::bernoulli_distribution bit(0.0005);
  BitGrid base(128);
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (bit(rng)) base.set(i);
  }
  const auto pyr = build_pyramid(base);
  for (std::size_t l = 0; l < pyr.levels.size(); ++l) {
    const int f = pyr.factors[l];
    const int n = 128 / f;
    ASSERT_EQ(pyr.levels[l].resolution(), n);
    for (int z = 0; z < n; ++z) {
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          bool any = false;
          for (int dz = 0; dz < f && !any; ++dz) {
            for (int dy = 0; dy < f && !any; ++dy) {
              for (int dx = 0; dx < f && !any; ++dx) {
                any = base.test(x * f + dx, y * f + dy, z * f + dz);
              }
            }
          }
          EXPECT_EQ(pyr.levels[l].test(x, y, z), any);
        }
      }
    }
  }
}

TEST(Pyramid, RejectsIndivisibleResolution) {
  EXPECT_THROW(build_pyramid(BitGrid(96)), std::invalid_argument);
}

TEST(Probe, EmptyBoxContainsPointAndIsEmpty) {
  BitGrid base(128);
  base.set(64, 64, 64);
  const auto pyr = build_pyramid(base);
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 2000; ++i) {
    const Point3 p{u(rng), u(rng), u(rng)};
    const auto pr = probe(pyr, p);
    if (pr.occupied) {
      EXPECT_TRUE(occupied_at(base, p));
      continue;
    }
    for (int a = 0; a < 3; ++a) {
      EXPECT_LE(pr.box_min[a], p[a]);
      EXPECT_GE(pr.box_max[a], p[a]);
    }
    // No base bit lies inside the returned box.
    const int lo = base.cell_of(pr.box_min.x + 1e-9), hi = base.cell_of(pr.box_max.x - 1e-9);
    const int loy = base.cell_of(pr.box_min.y + 1e-9), hiy = base.cell_of(pr.box_max.y - 1e-9);
    const int loz = base.cell_of(pr.box_min.z + 1e-9), hiz = base.cell_of(pr.box_max.z - 1e-9);
    EXPECT_FALSE(lo <= 64 && 64 <= hi && loy <= 64 && 64 <= hiy && loz <= 64 && 64 <= hiz);
  }
}

}  // namespace
}  // namespace merf
