// Automatic curb-label proposals from road labels: ground plane fit, road
// boundary band on a BEV occupancy grid, height gate and forward/lateral crop.
#ifndef CURBNET_DATASET_BUILDER_HPP
#define CURBNET_DATASET_BUILDER_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "curbnet/core.hpp"
#include "curbnet/lidar_io.hpp"

namespace curbnet::dataset {

struct CropSpec {
  double forward_range = 40.43;  ///< metres along +y
  double lateral_factor = 1.3;   ///< multiple of the measured road half-width

  void validate() const {
    if (!(forward_range > 0.0) || !(lateral_factor > 0.0)) {
      throw ConfigError("crop: forward_range and lateral_factor must be positive");
    }
  }
};

struct GroundFitConfig {
  std::size_t iterations = 3;
  std::size_t lowest_points = 20;  ///< points averaged into the lowest-point representative
  double seed_height = 0.4;        ///< seeds lie below LPR + seed_height
  double inlier_distance = 0.15;
  std::size_t min_points = 50;
  double max_tilt_deg = 30.0;
};

/// n . p + offset = 0 with n a unit normal pointing up (+z).
struct Plane {
  Eigen::Vector3d normal{0.0, 0.0, 1.0};
  double offset = 0.0;

  [[nodiscard]] double signed_distance(const Point& p) const {
    return normal.x() * p.x + normal.y() * p.y + normal.z() * p.z + offset;
  }
};

struct GroundFit {
  Plane plane;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

namespace detail {
inline Plane plane_through(const std::vector<const Point*>& pts) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const Point* p : pts) {
    c += Eigen::Vector3d(p->x, p->y, p->z);
  }
  c /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Point* p : pts) {
    const Eigen::Vector3d d = Eigen::Vector3d(p->x, p->y, p->z) - c;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Plane pl;
  pl.normal = es.eigenvectors().col(0).normalized();
  if (pl.normal.z() < 0.0) {
    pl.normal = -pl.normal;
  }
  pl.offset = -pl.normal.dot(c);
  return pl;
}
}  // namespace detail

/// Iterative plane fit seeded by the lowest points of the cloud.
inline GroundFit fit_ground_plane(const PointCloud& cloud, const GroundFitConfig& cfg = {}) {
  const std::size_t n = cloud.size();
  if (n < cfg.min_points) {
    throw InsufficientGroundError("ground fit: " + std::to_string(n) + " points in " + cloud.frame_id);
  }
  std::vector<float> z(n);
  std::transform(cloud.points.begin(), cloud.points.end(), z.begin(), [](const Point& p) { return p.z; });
  std::sort(z.begin(), z.end());
  const std::size_t k = std::min(cfg.lowest_points, n);
  double lpr = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    lpr += z[i];
  }
  lpr /= static_cast<double>(k);

  std::vector<const Point*> ground;
  for (const Point& p : cloud.points) {
    if (p.z < lpr + cfg.seed_height) {
      ground.push_back(&p);
    }
  }
  if (ground.size() < cfg.min_points) {
    throw InsufficientGroundError("ground fit: only " + std::to_string(ground.size()) + " seed points");
  }
  GroundFit fit;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    fit.plane = detail::plane_through(ground);
    ground.clear();
    for (const Point& p : cloud.points) {
      if (std::abs(fit.plane.signed_distance(p)) <= cfg.inlier_distance) {
        ground.push_back(&p);
      }
    }
    if (ground.size() < cfg.min_points) {
      throw InsufficientGroundError("ground fit: only " + std::to_string(ground.size()) + " inliers");
    }
  }
  const double tilt = std::acos(std::clamp(fit.plane.normal.z(), -1.0, 1.0)) * 180.0 / std::numbers::pi;
  if (tilt > cfg.max_tilt_deg) {
    throw InsufficientGroundError("ground fit: plane tilted " + std::to_string(tilt) + " degrees");
  }
  fit.inliers.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    fit.inliers[i] = std::abs(fit.plane.signed_distance(cloud.points[i])) <= cfg.inlier_distance;
    fit.inlier_count += static_cast<std::size_t>(fit.inliers[i]);
  }
  return fit;
}

struct ProposalConfig {
  CropSpec crop;
  double cell_size = 0.2;     ///< BEV grid resolution, metres
  double max_height = 0.25;   ///< above the plane
  double min_height = -0.15;  ///< below the plane (ground inlier band)
};

struct Proposal {
  io::LabelSet labels;               ///< input labels with curb proposals applied
  std::vector<std::size_t> indices;  ///< relabelled points, ascending
  std::vector<double> heights;       ///< above the plane, parallel to indices
  std::vector<double> confidence;    ///< in [0, 1], parallel to indices
  double road_half_width = 0.0;
  std::optional<std::string> warning;
};

/// Median over 1 m longitudinal slices of the 95th percentile of |x| of road points.
inline double road_half_width(const PointCloud& cloud, std::span<const SemanticClass> classes) {
  std::map<long, std::vector<double>> slices;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (classes[i] == SemanticClass::road) {
      const Point& p = cloud.points[i];
      slices[static_cast<long>(std::floor(p.y))].push_back(std::abs(static_cast<double>(p.x)));
    }
  }
  if (slices.empty()) {
    return 0.0;
  }
  std::vector<double> p95;
  for (auto& [key, xs] : slices) {
    std::sort(xs.begin(), xs.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(xs.size())));
    p95.push_back(xs[std::max<std::size_t>(rank, 1) - 1]);
  }
  std::sort(p95.begin(), p95.end());
  const std::size_t m = p95.size();
  return m % 2 == 1 ? p95[m / 2] : 0.5 * (p95[m / 2 - 1] + p95[m / 2]);
}

/// Relabels as curb the non-road, near-ground points whose BEV cell is outside
/// the road region but 8-adjacent to it, within the crop window.
inline Proposal propose_curb_labels(const PointCloud& cloud, const io::LabelSet& labels, const Plane& plane,
                                    const ProposalConfig& cfg = {}) {
  cfg.crop.validate();
  if (!(cfg.cell_size > 0.0)) {
    throw ConfigError("proposal: cell_size must be positive");
  }
  if (labels.size() != cloud.size()) {
    throw AlignmentError("proposal: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(cloud.size()) + " points");
  }
  Proposal out;
  out.labels = labels;
  const auto classes = labels.classes();
  out.road_half_width = road_half_width(cloud, classes);
  if (std::none_of(classes.begin(), classes.end(), [](SemanticClass c) { return c == SemanticClass::road; })) {
    out.warning = "frame " + cloud.frame_id + " has no road points; no curb proposals";
    return out;
  }

  auto cell_of = [&](const Point& p) {
    return std::pair<long, long>{static_cast<long>(std::floor(p.x / cfg.cell_size)),
                                 static_cast<long>(std::floor(p.y / cfg.cell_size))};
  };
  auto key = [](long cx, long cy) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(cx)) << 32) |
           static_cast<std::uint32_t>(cy);
  };
  std::unordered_set<std::uint64_t> road;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (classes[i] == SemanticClass::road) {
      const auto [cx, cy] = cell_of(cloud.points[i]);
      road.insert(key(cx, cy));
    }
  }
  const std::uint16_t curb_id = labels.class_map.output_id(SemanticClass::curb);
  const double lateral = cfg.crop.lateral_factor * out.road_half_width;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (classes[i] == SemanticClass::road) {
      continue;
    }
    const Point& p = cloud.points[i];
    if (p.y < 0.0 || p.y > cfg.crop.forward_range || std::abs(p.x) > lateral) {
      continue;
    }
    const double h = plane.signed_distance(p);
    if (h < cfg.min_height || h > cfg.max_height) {
      continue;
    }
    const auto [cx, cy] = cell_of(p);
    if (road.contains(key(cx, cy))) {
      continue;
    }
    int neighbours = 0;
    for (long dx = -1; dx <= 1; ++dx) {
      for (long dy = -1; dy <= 1; ++dy) {
        neighbours += static_cast<int>((dx != 0 || dy != 0) && road.contains(key(cx + dx, cy + dy)));
      }
    }
    if (neighbours == 0) {
      continue;
    }
    out.labels.labels[i] = curb_id;
    out.indices.push_back(i);
    out.heights.push_back(h);
    // a straight road edge touches three road cells
    out.confidence.push_back(std::min(1.0, neighbours / 3.0));
  }
  return out;
}

inline constexpr const char* kReviewHeader = "frame_id,index,x,y,z,height,confidence";

/// Review file listing every proposal for manual inspection.
inline void write_review_csv(const PointCloud& cloud, const Proposal& prop, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << kReviewHeader << '\n';
  char buf[192];
  for (std::size_t k = 0; k < prop.indices.size(); ++k) {
    const Point& p = cloud.points[prop.indices[k]];
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f,%.6f,%.4f\n", cloud.frame_id.c_str(), prop.indices[k],
                  static_cast<double>(p.x), static_cast<double>(p.y), static_cast<double>(p.z), prop.heights[k],
                  prop.confidence[k]);
    out << buf;
  }
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

}  // namespace curbnet::dataset

#endif  // CURBNET_DATASET_BUILDER_HPP
