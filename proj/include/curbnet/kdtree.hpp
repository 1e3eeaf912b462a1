// Static 2-D k-d tree for fixed-radius neighbourhood queries in the ground plane.
#ifndef CURBNET_KDTREE_HPP
#define CURBNET_KDTREE_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "curbnet/core.hpp"

namespace curbnet {

class KdTree2 {
 public:
  KdTree2() = default;

  explicit KdTree2(std::span<const Point2> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(points_.size());
    if (!points_.empty()) {
      root_ = build(0, order_.size(), 0);
    }
  }

  [[nodiscard]] std::size_t size() const { return points_.size(); }

  /// Indices of all points with Euclidean distance <= radius, ascending.
  [[nodiscard]] std::vector<std::size_t> radius_search(const Point2& q, double radius) const {
    std::vector<std::size_t> out;
    if (root_ >= 0) {
      search(root_, q, radius * radius, out);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// True when at least one point lies within `radius` of q.
  [[nodiscard]] bool any_within(const Point2& q, double radius) const {
    return root_ >= 0 && any(root_, q, radius * radius);
  }

 private:
  struct Node {
    std::size_t point = 0;
    int axis = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };

  static double coord(const Point2& p, int axis) { return axis == 0 ? p.x : p.y; }

  static double dist2(const Point2& a, const Point2& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
  }

  std::int32_t build(std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) {
      return -1;
    }
    const int axis = depth % 2;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(hi),
                     [&](std::size_t a, std::size_t b) {
                       const double ca = coord(points_[a], axis);
                       const double cb = coord(points_[b], axis);
                       return ca < cb || (ca == cb && a < b);
                     });
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({order_[mid], axis, -1, -1});
    const std::int32_t l = build(lo, mid, depth + 1);
    const std::int32_t r = build(mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  void search(std::int32_t id, const Point2& q, double r2, std::vector<std::size_t>& out) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Point2& p = points_[n.point];
    if (dist2(p, q) <= r2) {
      out.push_back(n.point);
    }
    const double diff = coord(q, n.axis) - coord(p, n.axis);
    const std::int32_t near = diff <= 0 ? n.left : n.right;
    const std::int32_t far = diff <= 0 ? n.right : n.left;
    if (near >= 0) {
      search(near, q, r2, out);
    }
    if (far >= 0 && diff * diff <= r2) {
      search(far, q, r2, out);
    }
  }

  [[nodiscard]] bool any(std::int32_t id, const Point2& q, double r2) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Point2& p = points_[n.point];
    if (dist2(p, q) <= r2) {
      return true;
    }
    const double diff = coord(q, n.axis) - coord(p, n.axis);
    const std::int32_t near = diff <= 0 ? n.left : n.right;
    const std::int32_t far = diff <= 0 ? n.right : n.left;
    if (near >= 0 && any(near, q, r2)) {
      return true;
    }
    return far >= 0 && diff * diff <= r2 && any(far, q, r2);
  }

  std::vector<Point2> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace curbnet

#endif  // CURBNET_KDTREE_HPP
