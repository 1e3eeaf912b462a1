// Multi-cluster curve-fitting refinement of predicted curb points:
// DBSCAN in the ground plane, a least-squares polynomial per cluster, and
// removal of points whose residual to their cluster's curve exceeds a threshold.
#ifndef CURBNET_POSTPROCESS_HPP
#define CURBNET_POSTPROCESS_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "curbnet/core.hpp"
#include "curbnet/kdtree.hpp"

namespace curbnet::post {

struct DbscanConfig {
  double eps = 1.0;
  std::size_t min_pts = 5;

  void validate() const {
    if (!(eps > 0.0) || min_pts < 1) {
      throw ConfigError("dbscan: eps must be > 0 and min_pts >= 1");
    }
  }
};

struct DbscanResult {
  std::vector<int> labels;  ///< cluster id per point, CurbCluster::kNoise for noise
  std::vector<bool> core;
  int cluster_count = 0;
};

/// DBSCAN with eps-neighbourhoods that include the query point. Clusters are
/// numbered in order of their lowest-index core point; a border point joins the
/// lowest-numbered cluster among its core neighbours.
inline DbscanResult dbscan(std::span<const Point2> points, const DbscanConfig& cfg) {
  cfg.validate();
  const std::size_t n = points.size();
  DbscanResult res;
  res.labels.assign(n, CurbCluster::kNoise);
  res.core.assign(n, false);
  if (n == 0) {
    return res;
  }
  const KdTree2 tree(points);
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i) {
    nbrs[i] = tree.radius_search(points[i], cfg.eps);
    res.core[i] = nbrs[i].size() >= cfg.min_pts;
  }
  // grow clusters over core points only; borders are attached afterwards
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!res.core[seed] || res.labels[seed] != CurbCluster::kNoise) {
      continue;
    }
    const int id = res.cluster_count++;
    res.labels[seed] = id;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      for (std::size_t q : nbrs[p]) {
        if (res.core[q] && res.labels[q] == CurbCluster::kNoise) {
          res.labels[q] = id;
          queue.push_back(q);
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (res.core[i]) {
      continue;
    }
    int best = CurbCluster::kNoise;
    for (std::size_t q : nbrs[i]) {
      if (res.core[q] && (best == CurbCluster::kNoise || res.labels[q] < best)) {
        best = res.labels[q];
      }
    }
    res.labels[i] = best;
  }
  return res;
}

/// Coordinate frame of a fit: u runs along `axis`, v along its left normal,
/// both measured from `origin`.
struct FitFrame {
  Point2 origin{0.0, 0.0};
  Point2 axis{1.0, 0.0};

  [[nodiscard]] Point2 to_local(const Point2& p) const {
    const double dx = p.x - origin.x;
    const double dy = p.y - origin.y;
    return {dx * axis.x + dy * axis.y, -dx * axis.y + dy * axis.x};
  }

  static FitFrame identity() { return {}; }
};

enum class FrameChoice {
  principal_axis,  ///< independent variable along the direction of maximal variance
  as_given,        ///< fit y = f(x) in the input coordinates
};

/// Polynomial v = sum_k coefficients[k] * u^k in `frame`.
struct CurveModel {
  std::vector<double> coefficients;
  FitFrame frame;

  [[nodiscard]] std::size_t degree() const { return coefficients.empty() ? 0 : coefficients.size() - 1; }

  [[nodiscard]] double evaluate(double u) const {
    double v = 0.0;
    for (std::size_t k = coefficients.size(); k-- > 0;) {
      v = v * u + coefficients[k];
    }
    return v;
  }
};

/// Unit direction of maximal variance (eigenvector of the 2x2 covariance).
/// Returns nullopt when the points have no spread.
inline std::optional<std::pair<Point2, Point2>> principal_axis(std::span<const Point2> pts) {
  if (pts.empty()) {
    return std::nullopt;
  }
  Point2 mean{0.0, 0.0};
  for (const auto& p : pts) {
    mean.x += p.x;
    mean.y += p.y;
  }
  mean.x /= static_cast<double>(pts.size());
  mean.y /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d d(p.x - mean.x, p.y - mean.y);
    cov += d * d.transpose();
  }
  if (cov.trace() <= 1e-18) {
    return std::nullopt;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Eigen::Vector2d a = es.eigenvectors().col(1);
  return std::make_pair(mean, Point2{a.x(), a.y()});
}

/// Least-squares polynomial of `degree` through the points. Returns nullopt
/// (skip-fit) when there are fewer than degree + 1 points or the design is
/// degenerate.
inline std::optional<CurveModel> fit_curve(std::span<const Point2> pts, std::size_t degree,
                                           FrameChoice choice = FrameChoice::principal_axis) {
  if (degree < 1) {
    throw ConfigError("fit_curve: degree must be >= 1");
  }
  if (pts.size() < degree + 1) {
    return std::nullopt;
  }
  CurveModel model;
  if (choice == FrameChoice::principal_axis) {
    const auto pa = principal_axis(pts);
    if (!pa) {
      return std::nullopt;
    }
    model.frame = {pa->first, pa->second};
  }
  const auto n = static_cast<Eigen::Index>(pts.size());
  const auto m = static_cast<Eigen::Index>(degree + 1);
  Eigen::MatrixXd design(n, m);
  Eigen::VectorXd rhs(n);
  double umin = 0.0;
  double umax = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point2 l = model.frame.to_local(pts[static_cast<std::size_t>(i)]);
    umin = i == 0 ? l.x : std::min(umin, l.x);
    umax = i == 0 ? l.x : std::max(umax, l.x);
    double pw = 1.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      design(i, k) = pw;
      pw *= l.x;
    }
    rhs(i) = l.y;
  }
  if (umax - umin <= 1e-12) {
    return std::nullopt;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < m) {
    return std::nullopt;
  }
  const Eigen::VectorXd c = qr.solve(rhs);
  if (!c.allFinite()) {
    return std::nullopt;
  }
  model.coefficients.assign(c.data(), c.data() + c.size());
  return model;
}

/// |v - f(u)| with (u, v) the point in the model's frame.
inline double point_curve_distance(const Point2& p, const CurveModel& model) {
  const Point2 l = model.frame.to_local(p);
  return std::abs(l.y - model.evaluate(l.x));
}

struct RefineConfig {
  DbscanConfig dbscan;
  std::size_t degree = 3;
  double delta_dist = 0.3;
};

struct RefineResult {
  std::vector<std::size_t> kept;     ///< indices into the input, ascending
  std::vector<std::size_t> removed;  ///< indices into the input, ascending
  std::vector<CurbCluster> clusters;  ///< surviving members per cluster
  std::vector<std::optional<CurveModel>> models;  ///< fit per cluster, nullopt when skipped
};

/// Clusters predicted curb points, fits a curve per cluster and drops DBSCAN noise
/// and points farther than delta_dist from their cluster's curve. Clusters too
/// small or too degenerate to fit are kept unfiltered.
inline RefineResult refine(std::span<const Point> curb_points, const RefineConfig& cfg) {
  if (!(cfg.delta_dist >= 0.0)) {
    throw ConfigError("refine: delta_dist must be >= 0");
  }
  RefineResult res;
  std::vector<Point2> plane(curb_points.size());
  std::transform(curb_points.begin(), curb_points.end(), plane.begin(), ground_projection);
  const DbscanResult db = dbscan(plane, cfg.dbscan);

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(db.cluster_count));
  std::vector<bool> keep(curb_points.size(), false);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    if (db.labels[i] != CurbCluster::kNoise) {
      members[static_cast<std::size_t>(db.labels[i])].push_back(i);
    }
  }
  res.models.resize(members.size());
  res.clusters.resize(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    std::vector<Point2> pts;
    pts.reserve(members[c].size());
    for (std::size_t i : members[c]) {
      pts.push_back(plane[i]);
    }
    const std::size_t degree = std::min(cfg.degree, pts.size() - 1);
    if (degree >= 1) {
      res.models[c] = fit_curve(pts, degree);
    }
    CurbCluster& cl = res.clusters[c];
    cl.cluster_id = static_cast<int>(c);
    if (res.models[c]) {
      cl.principal_axis = res.models[c]->frame.axis;
    } else if (auto pa = principal_axis(pts)) {
      cl.principal_axis = pa->second;
    }
    for (std::size_t i : members[c]) {
      if (!res.models[c] || point_curve_distance(plane[i], *res.models[c]) <= cfg.delta_dist) {
        keep[i] = true;
        cl.indices.push_back(i);
        cl.members.push_back(curb_points[i]);
      }
    }
  }
  for (std::size_t i = 0; i < keep.size(); ++i) {
    (keep[i] ? res.kept : res.removed).push_back(i);
  }
  return res;
}

}  // namespace curbnet::post

#endif  // CURBNET_POSTPROCESS_HPP
