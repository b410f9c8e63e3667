#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "topolab/skeletonize.hpp"
#include "topolab/volume.hpp"

namespace topolab {
namespace {

BinaryVolume make_volume(std::array<int, 3> dims, std::vector<Voxel> fg) {
  BinaryVolume v;
  v.dims = dims;
  v.foreground = std::move(fg);
  v.normalize();
  return v;
}

// Degree of each voxel within the skeleton under 26-adjacency.
std::vector<int> neighbor_counts(const BinaryVolume& v) {
  std::set<Voxel> fg(v.foreground.begin(), v.foreground.end());
  std::vector<int> counts;
  for (const auto& p : v.foreground) {
    int c = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          if (fg.count({p[0] + dx, p[1] + dy, p[2] + dz})) ++c;
        }
    counts.push_back(c);
  }
  return counts;
}

TEST(ComponentCount, MatchesBruteForceOracle) {
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    BinaryVolume v;
    v.dims = {12, 12, 12};
    std::set<Voxel> fg;
    int n = 5 + static_cast<int>(rng.uniform_int(40));
    for (int i = 0; i < n; ++i)
      fg.insert({static_cast<int>(rng.uniform_int(12)), static_cast<int>(rng.uniform_int(12)),
                 static_cast<int>(rng.uniform_int(12))});
    v.foreground.assign(fg.begin(), fg.end());
    EXPECT_EQ(count_components_26(v), testutil::count_components_26_brute(v.foreground));
  }
}

TEST(Skeletonize, ThinLineIsIdempotent) {
  std::vector<Voxel> line;
  for (int x = 0; x < 20; ++x) line.push_back({x, 5, 5});
  BinaryVolume v = make_volume({24, 12, 12}, line);
  BinaryVolume s = skeletonize(v);
  EXPECT_EQ(s.foreground, v.foreground);
}

TEST(Skeletonize, SolidBarBecomesSinglePath) {
  std::vector<Voxel> bar;
  for (int z = 0; z < 20; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) bar.push_back({x + 4, y + 4, z + 2});
  BinaryVolume v = make_volume({12, 12, 26}, bar);
  BinaryVolume s = skeletonize(v);
  EXPECT_EQ(count_components_26(s), 1);
  EXPECT_GE(static_cast<int>(s.foreground.size()), 18);
  auto counts = neighbor_counts(s);
  int endpoints = 0;
  for (int c : counts) {
    EXPECT_LE(c, 2);
    if (c == 1) ++endpoints;
  }
  EXPECT_EQ(endpoints, 2);
}

TEST(Skeletonize, TwoDisjointBarsKeepTwoComponents) {
  std::vector<Voxel> fg;
  for (int x = 0; x < 10; ++x)
    for (int y = 0; y < 2; ++y) {
      fg.push_back({x, y, 1});
      fg.push_back({x, y + 8, 1});
    }
  BinaryVolume v = make_volume({12, 12, 4}, fg);
  BinaryVolume s = skeletonize(v);
  EXPECT_EQ(count_components_26(s), 2);
}

TEST(Skeletonize, SingleVoxelSurvives) {
  BinaryVolume v = make_volume({4, 4, 4}, {{2, 2, 2}});
  BinaryVolume s = skeletonize(v);
  EXPECT_EQ(s.foreground, v.foreground);
}

TEST(Skeletonize, EmptyMaskThrows) {
  BinaryVolume v;
  v.dims = {4, 4, 4};
  EXPECT_THROW(skeletonize(v), EmptyInputError);
}

TEST(Skeletonize, RandomTubeProperties) {
  Rng rng(202);
  for (int trial = 0; trial < 10; ++trial) {
    BinaryVolume v = testutil::random_tube_volume(rng, {32, 32, 32}, 2.2);
    if (v.foreground.empty()) continue;
    BinaryVolume s = skeletonize(v);
    // Subset of the mask.
    std::set<Voxel> mask(v.foreground.begin(), v.foreground.end());
    for (const auto& p : s.foreground) EXPECT_TRUE(mask.count(p));
    // 26-component count preserved.
    EXPECT_EQ(testutil::count_components_26_brute(s.foreground),
              testutil::count_components_26_brute(v.foreground));
    // Idempotent.
    BinaryVolume s2 = skeletonize(s);
    EXPECT_EQ(s2.foreground, s.foreground);
  }
}

TEST(SimplePoint, MiddleOfThreeVoxelLineNotDeletable) {
  BinaryVolume v = make_volume({5, 5, 5}, {{1, 2, 2}, {2, 2, 2}, {3, 2, 2}});
  EXPECT_FALSE(simple_deletable(v, {2, 2, 2}));
}

TEST(SimplePoint, CornerOfSolidBlockDeletable) {
  std::vector<Voxel> block;
  for (int z = 1; z <= 2; ++z)
    for (int y = 1; y <= 2; ++y)
      for (int x = 1; x <= 2; ++x) block.push_back({x, y, z});
  BinaryVolume v = make_volume({5, 5, 5}, block);
  EXPECT_TRUE(simple_deletable(v, {1, 1, 1}));
}

TEST(ToCenterlineGraph, CollinearVoxels) {
  BinaryVolume s = make_volume({5, 3, 3}, {{0, 1, 1}, {1, 1, 1}, {2, 1, 1}});
  CenterlineGraph g = to_centerline_graph(s);
  EXPECT_EQ(g.positions.size(), 3u);
  EXPECT_EQ(g.edges.size(), 2u);
  g.validate();
}

TEST(ToCenterlineGraph, SingleVoxel) {
  BinaryVolume s = make_volume({3, 3, 3}, {{1, 1, 1}});
  CenterlineGraph g = to_centerline_graph(s);
  EXPECT_EQ(g.positions.size(), 1u);
  EXPECT_TRUE(g.edges.empty());
}

TEST(ToCenterlineGraph, EdgeCountMatchesPairScan) {
  // L-shaped path with a diagonal corner.
  std::vector<Voxel> fg = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 1, 0}, {3, 2, 0}};
  BinaryVolume s = make_volume({6, 6, 2}, fg);
  CenterlineGraph g = to_centerline_graph(s);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < fg.size(); ++i)
    for (std::size_t j = i + 1; j < fg.size(); ++j) {
      int dx = std::abs(fg[i][0] - fg[j][0]);
      int dy = std::abs(fg[i][1] - fg[j][1]);
      int dz = std::abs(fg[i][2] - fg[j][2]);
      if (std::max({dx, dy, dz}) == 1) ++expected;
    }
  EXPECT_EQ(g.edges.size(), expected);
  for (auto [a, b] : g.edges) EXPECT_LT(a, b);
}

TEST(ToCenterlineGraph, PositionsAreWorldCoordinates) {
  BinaryVolume s = make_volume({4, 4, 4}, {{1, 2, 3}});
  s.spacing = {0.5, 1.5, 2.0};
  CenterlineGraph g = to_centerline_graph(s);
  EXPECT_DOUBLE_EQ(g.positions[0].x, 0.5);
  EXPECT_DOUBLE_EQ(g.positions[0].y, 3.0);
  EXPECT_DOUBLE_EQ(g.positions[0].z, 6.0);
}

}  // namespace
}  // namespace topolab
