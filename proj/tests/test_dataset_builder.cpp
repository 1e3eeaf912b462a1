#include <cmath>

#include <gtest/gtest.h>

#include "curbnet/dataset_builder.hpp"
#include "curbnet/synthetic.hpp"
#include "support.hpp"

using namespace curbnet;
using namespace curbnet::dataset;

namespace {

using C = SemanticClass;

struct Scene {
  PointCloud cloud;
  std::vector<C> classes;

  void add(double x, double y, double z, C c) {
    cloud.points.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(z), 0.5F});
    classes.push_back(c);
  }

  [[nodiscard]] io::LabelSet labels() const { return io::LabelSet::from_classes(classes); }
};

// Flat road |x| < 3 between sidewalk strips out to |x| = 5, samples at cell centres
// offset by half the 0.1 m spacing so no point sits on a 0.2 m cell edge.
Scene rectangular_road(double y_max = 20.0, double road_half = 3.0, double outer = 5.0) {
  Scene s;
  for (double y = 0.05; y < y_max; y += 0.1) {
    for (double x = -outer + 0.05; x < outer; x += 0.1) {
      s.add(x, y, 0.0, std::abs(x) < road_half ? C::road : C::sidewalk);
    }
  }
  return s;
}

}  // namespace

TEST(GroundPlane, PlanarFloorIsRecoveredExactly) {
  Scene s;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 30; ++j) {
      s.add(0.3 * i - 4.0, 0.3 * j, -1.7, C::road);
    }
  }
  const auto fit = fit_ground_plane(s.cloud);
  EXPECT_NEAR(std::abs(fit.plane.normal.z()), 1.0, 1e-12);
  EXPECT_NEAR(fit.plane.normal.x(), 0.0, 1e-9);
  EXPECT_NEAR(fit.plane.normal.y(), 0.0, 1e-9);
  for (const auto& p : s.cloud.points) {
    EXPECT_NEAR(fit.plane.signed_distance(p), 0.0, 1e-6);
  }
  EXPECT_EQ(fit.inlier_count, s.cloud.size());
}

TEST(GroundPlane, ElevatedClutterIsExcluded) {
  Scene s;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 30; ++j) {
      const bool clutter = (i * 30 + j) % 10 == 0;
      s.add(0.3 * i - 4.0, 0.3 * j, clutter ? -1.7 + 0.5 + 0.01 * j : -1.7, C::other);
    }
  }
  const auto fit = fit_ground_plane(s.cloud);
  ASSERT_EQ(fit.inliers.size(), s.cloud.size());
  for (std::size_t i = 0; i < s.cloud.size(); ++i) {
    // direct distance to the true floor z = -1.7
    const bool expected = std::abs(s.cloud.points[i].z + 1.7) <= 0.15;
    EXPECT_EQ(fit.inliers[i], expected) << i;
  }
}

TEST(GroundPlane, VerticalWallIsInsufficientGround) {
  Scene s;
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 40; ++j) {
      s.add(5.0, 0.25 * i, -2.0 + 0.1 * j, C::other);
    }
  }
  EXPECT_THROW((void)fit_ground_plane(s.cloud), InsufficientGroundError);
}

TEST(GroundPlane, TooFewPointsIsInsufficientGround) {
  Scene s;
  for (int i = 0; i < 10; ++i) {
    s.add(i, 0, 0, C::road);
  }
  EXPECT_THROW((void)fit_ground_plane(s.cloud), InsufficientGroundError);
}

TEST(Proposals, RectangularRoadGivesTwoEdgeBands) {
  const Scene s = rectangular_road();
  const auto prop = propose_curb_labels(s.cloud, s.labels(), Plane{});
  EXPECT_FALSE(prop.warning);
  std::vector<std::size_t> expected;
  for (std::size_t i = 0; i < s.cloud.size(); ++i) {
    const double x = s.cloud.points[i].x;
    // the 0.2 m cells just outside the road edges at x = +-3.0
    if ((x >= 3.0 && x < 3.2) || (x >= -3.2 && x < -3.0)) {
      expected.push_back(i);
    }
  }
  ASSERT_FALSE(expected.empty());
  EXPECT_EQ(prop.indices, expected);
  const auto out = prop.labels.classes();
  for (std::size_t i : expected) {
    EXPECT_EQ(out[i], C::curb);
  }
  EXPECT_NEAR(prop.road_half_width, 2.85, 0.06);
}

TEST(Proposals, StraightEdgeHasFullConfidence) {
  const Scene s = rectangular_road();
  const auto prop = propose_curb_labels(s.cloud, s.labels(), Plane{});
  ASSERT_EQ(prop.confidence.size(), prop.indices.size());
  for (std::size_t k = 0; k < prop.indices.size(); ++k) {
    EXPECT_GE(prop.confidence[k], 0.0);
    EXPECT_LE(prop.confidence[k], 1.0);
    const double y = s.cloud.points[prop.indices[k]].y;
    if (y > 1.0 && y < 19.0) {
      EXPECT_EQ(prop.confidence[k], 1.0);
    }
  }
}

TEST(Proposals, RoadFillingTheWindowGivesNothing) {
  Scene s;
  for (double y = 0.05; y < 10.0; y += 0.1) {
    for (double x = -3.95; x < 4.0; x += 0.1) {
      s.add(x, y, 0.0, C::road);
    }
  }
  const auto prop = propose_curb_labels(s.cloud, s.labels(), Plane{});
  EXPECT_TRUE(prop.indices.empty());
  EXPECT_EQ(prop.labels.labels, s.labels().labels);
}

TEST(Proposals, PointsBeyondForwardRangeAreNeverLabelled) {
  Scene s = rectangular_road(52.0);
  s.add(3.1, 50.0, 0.0, C::sidewalk);
  const auto prop = propose_curb_labels(s.cloud, s.labels(), Plane{});
  ASSERT_FALSE(prop.indices.empty());
  for (std::size_t i : prop.indices) {
    EXPECT_LE(s.cloud.points[i].y, 40.43);
  }
  EXPECT_NE(prop.labels.classes().back(), C::curb);
}

TEST(Proposals, HeightGateExcludesRaisedPoints) {
  Scene s = rectangular_road();
  s.add(3.1, 5.05, 1.0, C::other);
  const auto prop = propose_curb_labels(s.cloud, s.labels(), Plane{});
  EXPECT_NE(prop.labels.classes().back(), C::curb);
}

TEST(Proposals, InvariantsOnSyntheticScenes) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto sc = synthetic::road_scene(seed);
    const auto labels = io::LabelSet::from_classes(sc.classes);
    const auto fit = fit_ground_plane(sc.cloud);
    const auto a = propose_curb_labels(sc.cloud, labels, fit.plane);
    const auto b = propose_curb_labels(sc.cloud, labels, fit.plane);
    EXPECT_EQ(a.indices, b.indices);
    EXPECT_EQ(a.labels.labels, b.labels.labels);
    EXPECT_FALSE(a.indices.empty());
    const auto out = a.labels.classes();
    for (std::size_t i = 0; i < sc.cloud.size(); ++i) {
      if (sc.classes[i] == C::road) {
        EXPECT_EQ(out[i], C::road);
      }
    }
    for (std::size_t i : a.indices) {
      const auto& p = sc.cloud.points[i];
      EXPECT_LE(std::abs(p.x), 1.3 * a.road_half_width);
      EXPECT_GE(p.y, 0.0);
      EXPECT_LE(p.y, 40.43);
    }
  }
}

TEST(Proposals, NoRoadGivesWarningAndUnchangedLabels) {
  Scene s;
  for (int i = 0; i < 20; ++i) {
    s.add(i * 0.1, 1.0, 0.0, C::sidewalk);
  }
  const auto prop = propose_curb_labels(s.cloud, s.labels(), Plane{});
  ASSERT_TRUE(prop.warning);
  EXPECT_TRUE(prop.indices.empty());
  EXPECT_EQ(prop.labels.labels, s.labels().labels);
}

TEST(Proposals, LabelCountMismatchIsAlignmentError) {
  Scene s = rectangular_road(2.0);
  auto labels = s.labels();
  labels.labels.pop_back();
  EXPECT_THROW((void)propose_curb_labels(s.cloud, labels, Plane{}), AlignmentError);
}

TEST(Proposals, ReviewFileListsEveryProposal) {
  testutil::TempDir dir("review");
  Scene s = rectangular_road(2.0);
  s.cloud.frame_id = "000042";
  const auto prop = propose_curb_labels(s.cloud, s.labels(), Plane{});
  write_review_csv(s.cloud, prop, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kReviewHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.rfind("000042,", 0), 0U);
    ++rows;
  }
  EXPECT_EQ(rows, prop.indices.size());
}
