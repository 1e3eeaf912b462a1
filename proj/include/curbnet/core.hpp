// Core value types and error hierarchy shared by every curbnet module.
#ifndef CURBNET_CORE_HPP
#define CURBNET_CORE_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace curbnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File contents violate the container format.
class MalformedFileError : public Error {
 public:
  using Error::Error;
};

/// A point record holds a non-finite coordinate.
class MalformedPointError : public Error {
 public:
  using Error::Error;
};

/// Label and point files disagree on the number of points.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (grid ranges, loss constants, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes or channel counts do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was called in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Internal index data is inconsistent with the tensor it refers to.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Ground plane fitting found too few ground candidates.
class InsufficientGroundError : public Error {
 public:
  using Error::Error;
};

/// Pipeline classes. Ordering is the channel order of every score tensor.
enum class SemanticClass : std::uint8_t { other = 0, road = 1, sidewalk = 2, curb = 3 };

inline constexpr std::size_t kNumClasses = 4;

inline constexpr std::array<const char*, kNumClasses> kClassNames{"other", "road", "sidewalk",
                                                                  "curb"};

inline constexpr std::size_t class_index(SemanticClass c) { return static_cast<std::size_t>(c); }

struct Point {
  float x = 0.0F;
  float y = 0.0F;
  float z = 0.0F;
  float intensity = 0.0F;

  friend bool operator==(const Point&, const Point&) = default;
};

/// One LiDAR frame. Immutable after load by convention.
struct PointCloud {
  std::string frame_id;
  std::vector<Point> points;

  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] bool empty() const { return points.empty(); }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 ground_projection(const Point& p) {
  return {static_cast<double>(p.x), static_cast<double>(p.y)};
}

/// Density-connected group of predicted curb points.
struct CurbCluster {
  static constexpr int kNoise = -1;

  int cluster_id = kNoise;
  std::vector<std::size_t> indices;  ///< positions in the source point list
  std::vector<Point> members;
  Point2 principal_axis{1.0, 0.0};  ///< unit vector in the ground plane
};

}  // namespace curbnet

#endif  // CURBNET_CORE_HPP
