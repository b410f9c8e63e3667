#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "topolab/volume.hpp"

namespace topolab {
namespace {

TEST(BinaryVolume, NormalizeSortsAndDedups) {
  BinaryVolume v;
  v.dims = {4, 4, 4};
  v.foreground = {{2, 1, 0}, {0, 0, 0}, {2, 1, 0}, {1, 3, 2}};
  v.normalize();
  ASSERT_EQ(v.foreground.size(), 3u);
  EXPECT_EQ(v.foreground[0], (Voxel{0, 0, 0}));
  EXPECT_EQ(v.foreground[1], (Voxel{1, 3, 2}));
  EXPECT_EQ(v.foreground[2], (Voxel{2, 1, 0}));
  EXPECT_NO_THROW(v.validate());
}

TEST(BinaryVolume, ValidateRejectsOutOfBoundsAndDuplicates) {
  BinaryVolume v;
  v.dims = {2, 2, 2};
  v.foreground = {{0, 0, 2}};
  EXPECT_THROW(v.validate(), InputError);
  v.foreground = {{-1, 0, 0}};
  EXPECT_THROW(v.validate(), InputError);
  v.foreground = {{1, 1, 1}, {1, 1, 1}};
  EXPECT_THROW(v.validate(), InputError);
}

TEST(BinaryVolume, WorldUsesSpacing) {
  BinaryVolume v;
  v.dims = {8, 8, 8};
  v.spacing = {0.5, 2.0, 1.25};
  Vec3 w = v.world({3, 1, 4});
  EXPECT_DOUBLE_EQ(w.x, 1.5);
  EXPECT_DOUBLE_EQ(w.y, 2.0);
  EXPECT_DOUBLE_EQ(w.z, 5.0);
}

TEST(IntensityVolume, IndexIsXFastest) {
  IntensityVolume v;
  v.dims = {3, 4, 5};
  v.values.assign(3 * 4 * 5, 0.0);
  EXPECT_EQ(v.index(0, 0, 0), 0u);
  EXPECT_EQ(v.index(1, 0, 0), 1u);
  EXPECT_EQ(v.index(0, 1, 0), 3u);
  EXPECT_EQ(v.index(0, 0, 1), 12u);
  EXPECT_EQ(v.index(2, 3, 4), 2u + 3u * 3u + 12u * 4u);
  v.at(2, 3, 4) = 7.5;
  EXPECT_DOUBLE_EQ(v.values[v.index(2, 3, 4)], 7.5);
}

TEST(IntensityVolume, ValidateChecksCountAndFiniteness) {
  IntensityVolume v;
  v.dims = {2, 2, 2};
  v.values.assign(7, 0.0);
  EXPECT_THROW(v.validate(), InputError);
  v.values.assign(8, 0.0);
  EXPECT_NO_THROW(v.validate());
  v.values[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(v.validate(), InputError);
}

TEST(CenterlineGraph, ValidateRejectsBadEdges) {
  CenterlineGraph g;
  g.positions = {{0, 0, 0}, {1, 0, 0}};
  g.edges = {{0, 2}};
  EXPECT_THROW(g.validate(), InputError);
  g.edges = {{1, 1}};
  EXPECT_THROW(g.validate(), InputError);
  g.edges = {{0, 1}};
  EXPECT_NO_THROW(g.validate());
}

TEST(CenterlineGraph, VoxelBackedEdgesMustBe26Adjacent) {
  CenterlineGraph g;
  g.positions = {{0, 0, 0}, {2, 0, 0}};
  g.voxels = {{0, 0, 0}, {2, 0, 0}};
  g.edges = {{0, 1}};
  EXPECT_THROW(g.validate(), InputError);
  g.voxels[1] = {1, 1, 1};
  EXPECT_NO_THROW(g.validate());
  g.voxels.pop_back();
  EXPECT_THROW(g.validate(), InputError);  // count mismatch
}

}  // namespace
}  // namespace topolab
