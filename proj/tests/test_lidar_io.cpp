#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "curbnet/lidar_io.hpp"
#include "oracles/byte_writer.hpp"
#include "support.hpp"

using namespace curbnet;

TEST(LidarIo, EmptyFileGivesEmptyCloud) {
  testutil::TempDir dir("io");
  oracle::dump((dir / "empty.bin").string(), {});
  const auto cloud = io::read_point_cloud(dir / "empty.bin");
  EXPECT_TRUE(cloud.empty());
  EXPECT_EQ(cloud.frame_id, "empty");
}

TEST(LidarIo, IndependentlyWrittenPointRoundTrips) {
  testutil::TempDir dir("io");
  std::vector<unsigned char> bytes;
  for (float v : {1.0F, 2.0F, 3.0F, 0.5F}) {
    oracle::put_f32(bytes, v);
  }
  ASSERT_EQ(bytes.size(), 16U);
  oracle::dump((dir / "one.bin").string(), bytes);
  const auto cloud = io::read_point_cloud(dir / "one.bin");
  ASSERT_EQ(cloud.size(), 1U);
  EXPECT_EQ(cloud.points[0], (Point{1.0F, 2.0F, 3.0F, 0.5F}));
}

TEST(LidarIo, SeventeenBytesIsMalformed) {
  testutil::TempDir dir("io");
  oracle::dump((dir / "bad.bin").string(), std::vector<unsigned char>(17, 0));
  EXPECT_THROW(io::read_point_cloud(dir / "bad.bin"), MalformedFileError);
}

TEST(LidarIo, NonFiniteCoordinateIsMalformedPoint) {
  testutil::TempDir dir("io");
  std::vector<unsigned char> bytes;
  for (float v : {0.0F, std::numeric_limits<float>::quiet_NaN(), 0.0F, 0.0F}) {
    oracle::put_f32(bytes, v);
  }
  oracle::dump((dir / "nan.bin").string(), bytes);
  EXPECT_THROW(io::read_point_cloud(dir / "nan.bin"), MalformedPointError);
}

TEST(LidarIo, MissingFileIsIoError) {
  EXPECT_THROW(io::read_point_cloud("/nonexistent/curbnet/frame.bin"), IoError);
}

TEST(LidarIo, IntensityIsClampedOnLoad) {
  testutil::TempDir dir("io");
  std::vector<unsigned char> bytes;
  for (float v : {0.0F, 0.0F, 0.0F, 7.5F, 0.0F, 0.0F, 0.0F, -2.0F}) {
    oracle::put_f32(bytes, v);
  }
  oracle::dump((dir / "i.bin").string(), bytes);
  const auto cloud = io::read_point_cloud(dir / "i.bin");
  EXPECT_EQ(cloud.points[0].intensity, 1.0F);
  EXPECT_EQ(cloud.points[1].intensity, 0.0F);
}

TEST(LidarIo, WriteReadIsBitExact) {
  testutil::TempDir dir("io");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-80.0F, 80.0F);
  std::uniform_real_distribution<float> i01(0.0F, 1.0F);
  PointCloud c;
  for (int k = 0; k < 500; ++k) {
    c.points.push_back({u(rng), u(rng), u(rng), i01(rng)});
  }
  io::write_point_cloud(c, dir / "rt.bin");
  const auto back = io::read_point_cloud(dir / "rt.bin");
  EXPECT_EQ(back.points, c.points);
}

TEST(LidarIo, LabelLowBitsSelectClass) {
  testutil::TempDir dir("io");
  std::vector<unsigned char> bytes;
  oracle::put_u32(bytes, 0x00000009U);
  oracle::put_u32(bytes, 0x002A0009U);
  oracle::dump((dir / "l.label").string(), bytes);
  io::ClassMap map;
  map.assign(9, SemanticClass::road);
  const auto set = io::read_labels(dir / "l.label", 2, map);
  EXPECT_EQ(set.labels[0], 9);
  EXPECT_EQ(set.labels[1], 9);
  EXPECT_EQ(set.class_of(0), SemanticClass::road);
  EXPECT_EQ(set.class_of(1), SemanticClass::road);
}

TEST(LidarIo, LabelCountMismatchIsAlignmentError) {
  testutil::TempDir dir("io");
  oracle::dump((dir / "z.label").string(), {});
  EXPECT_THROW(io::read_labels(dir / "z.label", 1), AlignmentError);
}

TEST(LidarIo, DefaultMapUsesCurbId20) {
  const auto map = io::ClassMap::semantic_kitti();
  EXPECT_EQ(map.classify(40), SemanticClass::road);
  EXPECT_EQ(map.classify(48), SemanticClass::sidewalk);
  EXPECT_EQ(map.classify(20), SemanticClass::curb);
  EXPECT_EQ(map.classify(10), SemanticClass::other);
  EXPECT_EQ(map.output_id(SemanticClass::curb), 20);
  EXPECT_EQ(io::ClassMap::semantic_kitti(99).classify(99), SemanticClass::curb);
}

TEST(LidarIo, LabelsRoundTripThroughClasses) {
  testutil::TempDir dir("io");
  const std::vector<SemanticClass> cls{SemanticClass::road, SemanticClass::curb, SemanticClass::other,
                                       SemanticClass::sidewalk};
  io::write_labels(io::LabelSet::from_classes(cls), dir / "c.label");
  EXPECT_EQ(io::read_labels(dir / "c.label", 4).classes(), cls);
}

TEST(LidarIo, EmptyPolylinesIsHeaderOnly) {
  testutil::TempDir dir("io");
  io::write_polylines("f", {}, dir / "p.csv");
  std::ifstream in(dir / "p.csv");
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(all, "frame_id,cluster_id,x,y,z\n");
}

TEST(LidarIo, PolylinesRoundTripToMicrometre) {
  testutil::TempDir dir("io");
  CurbCluster c;
  c.cluster_id = 4;
  c.members = {{1.2345678F, -2.5F, 0.125F, 0.0F}, {3.0F, 4.0F, -1.75F, 0.0F}};
  const std::vector<CurbCluster> clusters{c};
  io::write_polylines("000123", clusters, dir / "p.csv");
  const auto rows = io::read_polylines(dir / "p.csv");
  ASSERT_EQ(rows.size(), 2U);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(rows[k].frame_id, "000123");
    EXPECT_EQ(rows[k].cluster_id, 4);
    EXPECT_NEAR(rows[k].x, c.members[k].x, 1e-6);
    EXPECT_NEAR(rows[k].y, c.members[k].y, 1e-6);
    EXPECT_NEAR(rows[k].z, c.members[k].z, 1e-6);
  }
}
