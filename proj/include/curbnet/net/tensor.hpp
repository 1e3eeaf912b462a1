// Sparse feature tensors: an F-channel block over an H x W x D grid, stored only at
// occupied cells.
#ifndef CURBNET_NET_TENSOR_HPP
#define CURBNET_NET_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "curbnet/core.hpp"

namespace curbnet::net {

struct Coord {
  int x = 0;
  int y = 0;
  int z = 0;

  friend bool operator==(const Coord&, const Coord&) = default;
};

struct Extent {
  int x = 1;
  int y = 1;
  int z = 1;

  [[nodiscard]] bool contains(const Coord& c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < x && c.y < y && c.z < z;
  }
  [[nodiscard]] std::int64_t linear(const Coord& c) const {
    return (static_cast<std::int64_t>(c.x) * y + c.y) * z + c.z;
  }
  [[nodiscard]] std::int64_t volume() const { return static_cast<std::int64_t>(x) * y * z; }

  friend bool operator==(const Extent&, const Extent&) = default;
};

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

/// Occupied cells of a grid, sorted by linear index.
class CoordSet {
 public:
  CoordSet(Extent extent, std::vector<Coord> coords) : extent_(extent), coords_(std::move(coords)) {
    for (const Coord& c : coords_) {
      if (!extent_.contains(c)) {
        throw ShapeError("coordinate outside grid extent");
      }
    }
    std::sort(coords_.begin(), coords_.end(), [this](const Coord& a, const Coord& b) {
      return extent_.linear(a) < extent_.linear(b);
    });
    coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
    lookup_.reserve(coords_.size());
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      lookup_.emplace(extent_.linear(coords_[i]), i);
    }
  }

  /// Every cell of the grid.
  static std::shared_ptr<const CoordSet> full(Extent extent) {
    std::vector<Coord> all;
    all.reserve(static_cast<std::size_t>(extent.volume()));
    for (int x = 0; x < extent.x; ++x) {
      for (int y = 0; y < extent.y; ++y) {
        for (int z = 0; z < extent.z; ++z) {
          all.push_back({x, y, z});
        }
      }
    }
    return std::make_shared<const CoordSet>(extent, std::move(all));
  }

  [[nodiscard]] const Extent& extent() const { return extent_; }
  [[nodiscard]] std::size_t size() const { return coords_.size(); }
  [[nodiscard]] const Coord& operator[](std::size_t i) const { return coords_[i]; }
  [[nodiscard]] std::span<const Coord> coords() const { return coords_; }

  [[nodiscard]] std::optional<std::size_t> find(const Coord& c) const {
    if (!extent_.contains(c)) {
      return std::nullopt;
    }
    auto it = lookup_.find(extent_.linear(c));
    if (it == lookup_.end()) {
      return std::nullopt;
    }
    return it->second;
  }

 private:
  Extent extent_;
  std::vector<Coord> coords_;
  std::unordered_map<std::int64_t, std::size_t> lookup_;
};

using GeometryPtr = std::shared_ptr<const CoordSet>;

/// F x H x W x D feature block realized over the occupied cells of `geometry`.
/// Unoccupied cells are implicitly zero.
struct BlockTensor {
  GeometryPtr geometry;
  std::size_t channels = 0;
  std::vector<double> data;  ///< geometry->size() x channels, row-major

  BlockTensor() = default;
  BlockTensor(GeometryPtr g, std::size_t c)
      : geometry(std::move(g)), channels(c), data(geometry->size() * c, 0.0) {}

  [[nodiscard]] std::size_t rows() const { return geometry ? geometry->size() : 0; }

  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {data.data() + i * channels, channels};
  }
  [[nodiscard]] std::span<double> row(std::size_t i) { return {data.data() + i * channels, channels}; }

  double& at(std::size_t i, std::size_t c) { return data[i * channels + c]; }
  [[nodiscard]] double at(std::size_t i, std::size_t c) const { return data[i * channels + c]; }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }

  [[nodiscard]] BlockTensor zeros_like() const { return BlockTensor(geometry, channels); }

  BlockTensor& operator+=(const BlockTensor& o) {
    if (o.geometry != geometry || o.channels != channels) {
      throw ShapeError("tensor addition: operands differ in geometry or channels");
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
      data[k] += o.data[k];
    }
    return *this;
  }
};

}  // namespace curbnet::net

#endif  // CURBNET_NET_TENSOR_HPP
