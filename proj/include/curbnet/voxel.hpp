// Distance-aware voxelization of a point cloud and the inverse scatter of cell scores.
#ifndef CURBNET_VOXEL_HPP
#define CURBNET_VOXEL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "curbnet/core.hpp"

namespace curbnet::voxel {

enum class GridMode { cylindrical, cartesian };
enum class OutOfRangePolicy { drop, clamp };

struct AxisRange {
  double min = 0.0;
  double max = 1.0;

  friend bool operator==(const AxisRange&, const AxisRange&) = default;
};

/// Grid layout. Axis 0 is rho (or x), axis 1 is phi (or y), axis 2 is z.
struct VoxelGridSpec {
  GridMode mode = GridMode::cylindrical;
  std::array<AxisRange, 3> bounds{AxisRange{0.0, 50.0}, AxisRange{-std::numbers::pi, std::numbers::pi},
                                  AxisRange{-4.0, 2.0}};
  std::array<int, 3> resolution{240, 180, 16};
  OutOfRangePolicy out_of_range = OutOfRangePolicy::drop;

  void validate() const {
    for (std::size_t a = 0; a < 3; ++a) {
      if (resolution[a] < 1) {
        throw ConfigError("voxel grid: resolution must be >= 1 on every axis");
      }
      if (!std::isfinite(bounds[a].min) || !std::isfinite(bounds[a].max) ||
          !(bounds[a].min < bounds[a].max)) {
        throw ConfigError("voxel grid: axis " + std::to_string(a) + " has a degenerate range");
      }
    }
  }

  [[nodiscard]] double cell_size(std::size_t axis) const {
    return (bounds[axis].max - bounds[axis].min) / resolution[axis];
  }

  [[nodiscard]] std::size_t cell_count() const {
    return static_cast<std::size_t>(resolution[0]) * static_cast<std::size_t>(resolution[1]) *
           static_cast<std::size_t>(resolution[2]);
  }

  /// Grid-frame coordinates of a point: (rho, phi, z) or (x, y, z).
  [[nodiscard]] std::array<double, 3> grid_coords(const Point& p) const {
    const double x = p.x;
    const double y = p.y;
    if (mode == GridMode::cylindrical) {
      return {std::sqrt(x * x + y * y), std::atan2(y, x), static_cast<double>(p.z)};
    }
    return {x, y, static_cast<double>(p.z)};
  }

  /// Width of a cell along axis 1 measured at the cell's axis-0 centre (arc length
  /// for cylindrical grids).
  [[nodiscard]] double lateral_cell_width(int h) const {
    if (mode == GridMode::cartesian) {
      return cell_size(1);
    }
    const double rho_centre = bounds[0].min + (h + 0.5) * cell_size(0);
    return rho_centre * cell_size(1);
  }

  friend bool operator==(const VoxelGridSpec&, const VoxelGridSpec&) = default;
};

struct CellIndex {
  int h = 0;
  int w = 0;
  int d = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

inline constexpr std::int64_t kOutOfRange = -1;

/// Occupied cells in linear-index order with an F-wide feature row per cell.
struct SparseVoxelTensor {
  VoxelGridSpec spec;
  std::size_t channels = 0;
  std::vector<CellIndex> cells;
  std::vector<double> features;          ///< cells.size() x channels, row-major
  std::vector<std::int64_t> point_index;  ///< per source point: cell slot or kOutOfRange

  [[nodiscard]] std::size_t occupied() const { return cells.size(); }

  [[nodiscard]] std::span<const double> row(std::size_t cell) const {
    return {features.data() + cell * channels, channels};
  }
  [[nodiscard]] std::span<double> row(std::size_t cell) {
    return {features.data() + cell * channels, channels};
  }
};

/// Feature layout produced by voxelize().
enum VoxelFeature : std::size_t {
  kMeanX = 0,
  kMeanY = 1,
  kMeanZ = 2,
  kMeanIntensity = 3,
  kLogCount = 4,
  kNumVoxelFeatures = 5,
};

namespace detail {

inline int bin_of(double v, const AxisRange& r, int n) {
  const auto b = static_cast<int>(std::floor((v - r.min) * n / (r.max - r.min)));
  return std::clamp(b, 0, n - 1);
}

inline bool in_range(double v, const AxisRange& r) { return v >= r.min && v <= r.max; }

}  // namespace detail

/// Bins a point; returns false when the point is outside the grid and the policy drops it.
inline bool locate(const VoxelGridSpec& spec, const Point& p, CellIndex& out) {
  const auto g = spec.grid_coords(p);
  if (spec.out_of_range == OutOfRangePolicy::drop) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (!detail::in_range(g[a], spec.bounds[a])) {
        return false;
      }
    }
  }
  out = {detail::bin_of(g[0], spec.bounds[0], spec.resolution[0]),
         detail::bin_of(g[1], spec.bounds[1], spec.resolution[1]),
         detail::bin_of(g[2], spec.bounds[2], spec.resolution[2])};
  return true;
}

inline std::int64_t linear_index(const VoxelGridSpec& spec, const CellIndex& c) {
  return (static_cast<std::int64_t>(c.h) * spec.resolution[1] + c.w) * spec.resolution[2] + c.d;
}

/// Bins every point and pools per-cell features
/// [mean x, mean y, mean z, mean intensity, log(1 + count)].
inline SparseVoxelTensor voxelize(const PointCloud& cloud, const VoxelGridSpec& spec) {
  spec.validate();
  SparseVoxelTensor t;
  t.spec = spec;
  t.channels = kNumVoxelFeatures;
  t.point_index.assign(cloud.size(), kOutOfRange);

  std::vector<std::int64_t> keys(cloud.size(), -1);
  std::vector<CellIndex> located(cloud.size());
  std::vector<std::int64_t> distinct;
  distinct.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (locate(spec, cloud.points[i], located[i])) {
      keys[i] = linear_index(spec, located[i]);
      distinct.push_back(keys[i]);
    }
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::unordered_map<std::int64_t, std::size_t> slot;
  slot.reserve(distinct.size());
  for (std::size_t s = 0; s < distinct.size(); ++s) {
    slot.emplace(distinct[s], s);
  }
  t.cells.resize(distinct.size());
  t.features.assign(distinct.size() * t.channels, 0.0);
  std::vector<std::size_t> counts(distinct.size(), 0);

  // Accumulation runs in point order so the means are reproducible bit for bit.
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (keys[i] < 0) {
      continue;
    }
    const std::size_t s = slot.at(keys[i]);
    t.point_index[i] = static_cast<std::int64_t>(s);
    t.cells[s] = located[i];
    const Point& p = cloud.points[i];
    auto r = t.row(s);
    r[kMeanX] += p.x;
    r[kMeanY] += p.y;
    r[kMeanZ] += p.z;
    r[kMeanIntensity] += p.intensity;
    ++counts[s];
  }
  for (std::size_t s = 0; s < distinct.size(); ++s) {
    auto r = t.row(s);
    const auto n = static_cast<double>(counts[s]);
    for (std::size_t f = 0; f < kLogCount; ++f) {
      r[f] /= n;
    }
    r[kLogCount] = std::log1p(n);
  }
  return t;
}

/// Per-point class scores gathered from the scored cells. Points outside the grid
/// get a one-hot `other`.
inline std::vector<std::array<double, kNumClasses>> devoxelize(
    const SparseVoxelTensor& scores, std::span<const std::int64_t> point_index) {
  if (scores.channels != kNumClasses) {
    throw ShapeError("devoxelize: score tensor must have " + std::to_string(kNumClasses) +
                     " channels");
  }
  std::vector<std::array<double, kNumClasses>> out(point_index.size());
  for (std::size_t i = 0; i < point_index.size(); ++i) {
    const std::int64_t s = point_index[i];
    if (s == kOutOfRange) {
      out[i] = {};
      out[i][class_index(SemanticClass::other)] = 1.0;
      continue;
    }
    if (s < 0 || static_cast<std::size_t>(s) >= scores.occupied()) {
      throw CorruptionError("devoxelize: point " + std::to_string(i) + " refers to cell " +
                            std::to_string(s) + " of " + std::to_string(scores.occupied()));
    }
    const auto r = scores.row(static_cast<std::size_t>(s));
    std::copy(r.begin(), r.end(), out[i].begin());
  }
  return out;
}

/// Majority label per occupied cell; ties go to the lowest class index.
inline std::vector<SemanticClass> cell_labels(const SparseVoxelTensor& t,
                                              std::span<const SemanticClass> point_classes) {
  if (point_classes.size() != t.point_index.size()) {
    throw ShapeError("cell_labels: label count differs from point count");
  }
  std::vector<std::array<std::size_t, kNumClasses>> votes(t.occupied());
  for (std::size_t i = 0; i < point_classes.size(); ++i) {
    if (t.point_index[i] != kOutOfRange) {
      ++votes[static_cast<std::size_t>(t.point_index[i])][class_index(point_classes[i])];
    }
  }
  std::vector<SemanticClass> out(t.occupied());
  for (std::size_t s = 0; s < votes.size(); ++s) {
    const auto it = std::max_element(votes[s].begin(), votes[s].end());
    out[s] = static_cast<SemanticClass>(std::distance(votes[s].begin(), it));
  }
  return out;
}

}  // namespace curbnet::voxel

#endif  // CURBNET_VOXEL_HPP
