#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "curbnet/voxel.hpp"

using namespace curbnet;
using voxel::VoxelGridSpec;

namespace {

// Brute-force bin search: the bin whose half-open interval holds v, the last bin
// also taking its upper edge.
int scan_bin(double v, double lo, double hi, int n) {
  const double w = (hi - lo) / n;
  for (int b = 0; b < n; ++b) {
    if (v >= lo + b * w && (v < lo + (b + 1) * w || b == n - 1)) {
      return b;
    }
  }
  return -1;
}

PointCloud random_cloud(std::uint64_t seed, std::size_t n, double range) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-range, range);
  std::uniform_real_distribution<double> z(-5.0, 3.0);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.push_back({static_cast<float>(u(rng)), static_cast<float>(u(rng)), static_cast<float>(z(rng)), 0.5F});
  }
  return c;
}

}  // namespace

TEST(Voxel, EmptyCloudHasNoCells) {
  const auto t = voxel::voxelize(PointCloud{}, VoxelGridSpec{});
  EXPECT_EQ(t.occupied(), 0U);
  EXPECT_EQ(t.channels, 5U);
}

TEST(Voxel, TwoIdenticalPointsShareOneCell) {
  PointCloud c;
  c.points = {{1.0F, 2.0F, -1.0F, 0.25F}, {1.0F, 2.0F, -1.0F, 0.25F}};
  const auto t = voxel::voxelize(c, VoxelGridSpec{});
  ASSERT_EQ(t.occupied(), 1U);
  const auto r = t.row(0);
  EXPECT_DOUBLE_EQ(r[voxel::kMeanX], 1.0);
  EXPECT_DOUBLE_EQ(r[voxel::kMeanY], 2.0);
  EXPECT_DOUBLE_EQ(r[voxel::kMeanZ], -1.0);
  EXPECT_DOUBLE_EQ(r[voxel::kMeanIntensity], 0.25);
  EXPECT_NEAR(r[voxel::kLogCount], 1.0986122886681098, 1e-12);
}

TEST(Voxel, CylindricalBinOfThreeFourZero) {
  VoxelGridSpec g;
  g.resolution = {50, 180, 16};
  PointCloud c;
  c.points = {{3.0F, 4.0F, 0.0F, 0.0F}};
  const auto t = voxel::voxelize(c, g);
  ASSERT_EQ(t.occupied(), 1U);
  EXPECT_EQ(t.cells[0].h, 5);
  EXPECT_EQ(t.cells[0].h, scan_bin(5.0, 0.0, 50.0, 50));
  EXPECT_EQ(t.cells[0].w, scan_bin(std::atan2(4.0, 3.0), -std::numbers::pi, std::numbers::pi, 180));
  EXPECT_EQ(t.cells[0].d, scan_bin(0.0, -4.0, 2.0, 16));
}

TEST(Voxel, BinningMatchesBruteForceScan) {
  VoxelGridSpec g;
  const auto c = random_cloud(11, 2000, 60.0);
  const auto t = voxel::voxelize(c, g);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Point& p = c.points[i];
    const double rho = std::sqrt(static_cast<double>(p.x) * p.x + static_cast<double>(p.y) * p.y);
    const double phi = std::atan2(static_cast<double>(p.y), static_cast<double>(p.x));
    const bool inside = rho <= 50.0 && p.z >= -4.0F && p.z <= 2.0F;
    if (!inside) {
      EXPECT_EQ(t.point_index[i], voxel::kOutOfRange);
      continue;
    }
    ASSERT_NE(t.point_index[i], voxel::kOutOfRange);
    const auto& cell = t.cells[static_cast<std::size_t>(t.point_index[i])];
    EXPECT_EQ(cell.h, scan_bin(rho, 0.0, 50.0, 240));
    EXPECT_EQ(cell.w, scan_bin(phi, -std::numbers::pi, std::numbers::pi, 180));
    EXPECT_EQ(cell.d, scan_bin(p.z, -4.0, 2.0, 16));
  }
}

TEST(Voxel, PartitionAndDensityProperties) {
  const auto c = random_cloud(5, 3000, 60.0);
  const auto t = voxel::voxelize(c, VoxelGridSpec{});
  std::size_t in_range = 0;
  std::size_t dropped = 0;
  for (auto idx : t.point_index) {
    (idx == voxel::kOutOfRange ? dropped : in_range) += 1;
  }
  EXPECT_EQ(in_range + dropped, c.size());
  EXPECT_GT(dropped, 0U);
  double count = 0.0;
  for (std::size_t s = 0; s < t.occupied(); ++s) {
    count += std::exp(t.row(s)[voxel::kLogCount]) - 1.0;
  }
  EXPECT_NEAR(count, static_cast<double>(in_range), 1e-6);
}

TEST(Voxel, ClampPolicyKeepsEveryPoint) {
  VoxelGridSpec g;
  g.out_of_range = voxel::OutOfRangePolicy::clamp;
  const auto c = random_cloud(6, 500, 90.0);
  const auto t = voxel::voxelize(c, g);
  for (auto idx : t.point_index) {
    EXPECT_NE(idx, voxel::kOutOfRange);
  }
}

TEST(Voxel, ArcWidthGrowsLinearlyWithRange) {
  const VoxelGridSpec g;
  const double w0 = g.lateral_cell_width(0);
  const double dphi = g.cell_size(1);
  const double drho = g.cell_size(0);
  for (int h : {0, 10, 100, 239}) {
    EXPECT_NEAR(g.lateral_cell_width(h), (h + 0.5) * drho * dphi, 1e-12);
    EXPECT_NEAR(g.lateral_cell_width(h) / w0, 2.0 * h + 1.0, 1e-9);
  }
}

TEST(Voxel, DegenerateGridIsConfigError) {
  VoxelGridSpec g;
  g.bounds[2] = {1.0, 1.0};
  EXPECT_THROW(voxel::voxelize(PointCloud{}, g), ConfigError);
  VoxelGridSpec h;
  h.resolution[0] = 0;
  EXPECT_THROW(h.validate(), ConfigError);
}

TEST(Voxel, DevoxelizeSingleCellScores) {
  PointCloud c;
  c.points = {{1.0F, 1.0F, 0.0F, 0.0F}, {1.001F, 1.0F, 0.0F, 0.0F}, {1.0F, 1.001F, 0.0F, 0.0F}};
  auto t = voxel::voxelize(c, VoxelGridSpec{});
  ASSERT_EQ(t.occupied(), 1U);
  t.channels = 4;
  t.features = {0.1, 0.2, 0.3, 0.4};
  const auto per_point = voxel::devoxelize(t, t.point_index);
  for (const auto& s : per_point) {
    EXPECT_EQ(s, (std::array<double, 4>{0.1, 0.2, 0.3, 0.4}));
  }
}

TEST(Voxel, DevoxelizeDroppedPointIsOther) {
  PointCloud c;
  c.points = {{1.0F, 1.0F, 0.0F, 0.0F}, {500.0F, 0.0F, 0.0F, 0.0F}};
  auto t = voxel::voxelize(c, VoxelGridSpec{});
  t.channels = 4;
  t.features = {0.1, 0.2, 0.3, 0.4};
  const auto per_point = voxel::devoxelize(t, t.point_index);
  EXPECT_EQ(per_point[1], (std::array<double, 4>{1.0, 0.0, 0.0, 0.0}));
}

TEST(Voxel, DevoxelizeMatchesRebinningOracle) {
  VoxelGridSpec g;
  g.resolution = {20, 36, 4};
  const auto c = random_cloud(8, 100, 40.0);
  auto t = voxel::voxelize(c, g);
  t.channels = 4;
  t.features.assign(t.occupied() * 4, 0.0);
  // score row encodes the cell coordinates so each point can be checked independently
  for (std::size_t s = 0; s < t.occupied(); ++s) {
    t.features[s * 4 + 0] = t.cells[s].h;
    t.features[s * 4 + 1] = t.cells[s].w;
    t.features[s * 4 + 2] = t.cells[s].d;
    t.features[s * 4 + 3] = 1.0;
  }
  const auto per_point = voxel::devoxelize(t, t.point_index);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Point& p = c.points[i];
    const double rho = std::sqrt(static_cast<double>(p.x) * p.x + static_cast<double>(p.y) * p.y);
    if (rho > 50.0 || p.z < -4.0F || p.z > 2.0F) {
      EXPECT_EQ(per_point[i][0], 1.0);
      EXPECT_EQ(per_point[i][3], 0.0);
      continue;
    }
    EXPECT_EQ(per_point[i][0], scan_bin(rho, 0.0, 50.0, 20));
    EXPECT_EQ(per_point[i][1], scan_bin(std::atan2(static_cast<double>(p.y), static_cast<double>(p.x)),
                                        -std::numbers::pi, std::numbers::pi, 36));
    EXPECT_EQ(per_point[i][2], scan_bin(p.z, -4.0, 2.0, 4));
  }
}

TEST(Voxel, DevoxelizeRejectsBadIndexAndChannels) {
  PointCloud c;
  c.points = {{1.0F, 1.0F, 0.0F, 0.0F}};
  auto t = voxel::voxelize(c, VoxelGridSpec{});
  EXPECT_THROW(voxel::devoxelize(t, t.point_index), ShapeError);
  t.channels = 4;
  t.features = {0.0, 0.0, 0.0, 1.0};
  const std::vector<std::int64_t> bad{7};
  EXPECT_THROW(voxel::devoxelize(t, bad), CorruptionError);
}

TEST(Voxel, CellLabelsMajorityWithLowestClassTies) {
  PointCloud c;
  c.points = {{1.0F, 1.0F, 0.0F, 0.0F}, {1.0F, 1.0F, 0.0F, 0.0F}, {1.0F, 1.0F, 0.0F, 0.0F},
              {20.0F, 0.0F, 0.0F, 0.0F}, {20.0F, 0.0F, 0.0F, 0.0F}};
  const auto t = voxel::voxelize(c, VoxelGridSpec{});
  const std::vector<SemanticClass> cls{SemanticClass::curb, SemanticClass::curb, SemanticClass::road,
                                       SemanticClass::sidewalk, SemanticClass::road};
  const auto labels = voxel::cell_labels(t, cls);
  EXPECT_EQ(labels[static_cast<std::size_t>(t.point_index[0])], SemanticClass::curb);
  EXPECT_EQ(labels[static_cast<std::size_t>(t.point_index[3])], SemanticClass::road);
}

TEST(Voxel, CellsAreSortedByLinearIndex) {
  const auto t = voxel::voxelize(random_cloud(9, 1000, 45.0), VoxelGridSpec{});
  for (std::size_t s = 1; s < t.occupied(); ++s) {
    EXPECT_LT(voxel::linear_index(t.spec, t.cells[s - 1]), voxel::linear_index(t.spec, t.cells[s]));
  }
}
