#include <gtest/gtest.h>

#include <random>
#include <set>

#include "htgc/dmap.hpp"

using namespace htgc;

namespace {

std::vector<std::size_t> gi(const Dmap& m, std::size_t n, Dmap::Pid pid) {
  const std::size_t shape[2] = {n, 1};
  return global_ind(m, shape, 0, pid);
}

Dmap::Pid own(const Dmap& m, std::size_t n, std::size_t i) {
  const std::size_t shape[2] = {n, 1};
  return owner(m, shape, 0, i);
}

using V = std::vector<std::size_t>;

}  // namespace

TEST(GlobalInd, ForcedExamples) {
  EXPECT_EQ(gi(Dmap::column(4), 8, 1), (V{2, 3}));
  EXPECT_EQ(gi(Dmap::column(3, Dist::cyclic()), 7, 2), (V{2, 5}));
  EXPECT_EQ(gi(Dmap::column(2, Dist::block_cyclic(2)), 8, 0), (V{0, 1, 4, 5}));

  const auto m = Dmap::column(4);
  EXPECT_EQ(gi(m, 10, 0), (V{0, 1, 2}));
  EXPECT_EQ(gi(m, 10, 1), (V{3, 4, 5}));
  EXPECT_EQ(gi(m, 10, 2), (V{6, 7, 8}));
  EXPECT_EQ(gi(m, 10, 3), (V{9}));
}

TEST(GlobalInd, FewerIndicesThanProcessors) {
  const auto m = Dmap::column(4);
  EXPECT_EQ(gi(m, 1, 0), (V{0}));
  EXPECT_TRUE(gi(m, 1, 1).empty());
  EXPECT_TRUE(gi(m, 1, 3).empty());
  EXPECT_TRUE(gi(m, 0, 0).empty());
}

TEST(GlobalInd, Errors) {
  const auto m = Dmap::column(2);
  const std::size_t shape[2] = {4, 1};
  EXPECT_THROW(global_ind(m, shape, 0, 7), MapError);
  EXPECT_THROW(global_ind(m, shape, 2, 0), MapError);
  EXPECT_THROW(owner(m, shape, 0, 4), MapError);
}

TEST(Owner, ForcedExamples) {
  EXPECT_EQ(own(Dmap::column(4), 8, 5), 2);
  EXPECT_EQ(own(Dmap::column(3, Dist::cyclic()), 9, 7), 1);
}

TEST(Owner, AgreesWithGlobalIndExhaustively) {
  std::mt19937_64 rng(1);
  for (std::size_t p = 1; p <= 16; ++p) {
    for (int trial = 0; trial < 8; ++trial) {
      const std::size_t n = rng() % 1001;
      const Dist dists[] = {Dist::block(), Dist::cyclic(), Dist::block_cyclic(1 + rng() % 9)};
      const Dist d = dists[trial % 3];
      const auto m = Dmap::column(p, d);
      std::vector<Dmap::Pid> who(n, -1);
      for (auto pid : m.procs())
        for (auto i : gi(m, n, pid)) who[i] = pid;
      for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(own(m, n, i), who[i]) << "n=" << n << " p=" << p;
    }
  }
}

TEST(Dist, BlockAndCyclicAreBlockCyclicSpecialCases) {
  for (std::size_t p = 1; p <= 16; ++p) {
    for (std::size_t n = 0; n <= 1000; n += (n < 40 ? 1 : 37)) {
      const auto block = Dmap::column(p, Dist::block());
      const auto cyc = Dmap::column(p, Dist::cyclic());
      const auto bc1 = Dmap::column(p, Dist::block_cyclic(1));
      const auto bcb = Dmap::column(p, Dist::block_cyclic(std::max<std::size_t>(1, (n + p - 1) / p)));
      for (auto pid : block.procs()) {
        ASSERT_EQ(gi(block, n, pid), gi(bcb, n, pid));
        ASSERT_EQ(gi(cyc, n, pid), gi(bc1, n, pid));
      }
    }
  }
}

TEST(Dmap, ArbitraryProcessorIds) {
  const Dmap m({3, 1}, {}, {10, 42, 7});
  EXPECT_EQ(gi(m, 6, 10), (V{0, 1}));
  EXPECT_EQ(gi(m, 6, 42), (V{2, 3}));
  EXPECT_EQ(gi(m, 6, 7), (V{4, 5}));
  EXPECT_EQ(own(m, 6, 3), 42);
}

TEST(Dmap, ConstructionErrors) {
  EXPECT_THROW(Dmap({2, 1}, {}, {0}), MapError);
  EXPECT_THROW(Dmap({2, 1}, {}, {0, 0}), MapError);
  EXPECT_THROW(Dmap({0, 1}, {}, {}), MapError);
  EXPECT_THROW(Dmap({2, 1}, {Dist::block_overlap()}, {0, 1}), MapError);
  EXPECT_THROW(Dmap({2, 1}, {Dist::block_cyclic(0)}, {0, 1}), MapError);
  EXPECT_THROW(Dmap({2, 1}, {Dist::block(), Dist::block(), Dist::block()}, {0, 1}), MapError);
}

TEST(Dmap, TwoDimensionalGrid) {
  // 2 x 3 grid, first dimension fastest: procs[0..5] at (0,0),(1,0),(0,1),(1,1),(0,2),(1,2)
  const Dmap m({2, 3}, {Dist::block(), Dist::cyclic()}, {0, 1, 2, 3, 4, 5});
  const std::size_t shape[2] = {4, 6};
  EXPECT_EQ(global_ind(m, shape, 0, 3), (V{2, 3}));
  EXPECT_EQ(global_ind(m, shape, 1, 3), (V{1, 4}));
  EXPECT_EQ(global_ind(m, shape, 1, 4), (V{2, 5}));
  EXPECT_EQ(owner(m, shape, 1, 4), 2);
}

TEST(Dist, ParseAndPrint) {
  EXPECT_EQ(parse_dist("block"), Dist::block());
  EXPECT_EQ(parse_dist("cyclic"), Dist::cyclic());
  EXPECT_EQ(parse_dist("blockcyclic:3"), Dist::block_cyclic(3));
  EXPECT_EQ(to_string(Dist::block_cyclic(3)), "blockcyclic:3");
  EXPECT_THROW(parse_dist("blockcyclic:"), MapError);
  EXPECT_THROW(parse_dist("overlap"), MapError);
}
