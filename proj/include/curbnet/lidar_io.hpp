// KITTI-style point/label containers and the polyline CSV writer.
#ifndef CURBNET_LIDAR_IO_HPP
#define CURBNET_LIDAR_IO_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "curbnet/core.hpp"

namespace curbnet::io {

namespace detail {

inline std::uint32_t load_le32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void store_le32(std::uint32_t v, unsigned char* b) {
  b[0] = static_cast<unsigned char>(v & 0xFFU);
  b[1] = static_cast<unsigned char>((v >> 8) & 0xFFU);
  b[2] = static_cast<unsigned char>((v >> 16) & 0xFFU);
  b[3] = static_cast<unsigned char>((v >> 24) & 0xFFU);
}

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_all(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

}  // namespace detail

inline constexpr std::size_t kPointStride = 16;
inline constexpr std::size_t kLabelStride = 4;

/// Semantic-id to pipeline-class mapping. Unmapped ids fall back to `other`.
class ClassMap {
 public:
  /// SemanticKITTI ids for road (40) and sidewalk (48); curb uses the unused id 20.
  static ClassMap semantic_kitti(std::uint16_t curb_id = 20) {
    ClassMap m;
    m.assign(40, SemanticClass::road);
    m.assign(48, SemanticClass::sidewalk);
    m.assign(curb_id, SemanticClass::curb);
    m.set_output_id(SemanticClass::other, 0);
    return m;
  }

  /// Maps `id` to `cls`. The first id assigned to a class becomes its output id.
  void assign(std::uint16_t id, SemanticClass cls) {
    table_[id] = cls;
    if (!has_output_[class_index(cls)]) {
      set_output_id(cls, id);
    }
  }

  void set_output_id(SemanticClass cls, std::uint16_t id) {
    output_[class_index(cls)] = id;
    has_output_[class_index(cls)] = true;
  }

  [[nodiscard]] SemanticClass classify(std::uint16_t id) const {
    auto it = table_.find(id);
    return it == table_.end() ? SemanticClass::other : it->second;
  }

  /// Semantic id written for a pipeline class.
  [[nodiscard]] std::uint16_t output_id(SemanticClass cls) const {
    return output_[class_index(cls)];
  }

 private:
  std::map<std::uint16_t, SemanticClass> table_;
  std::array<std::uint16_t, kNumClasses> output_{};
  std::array<bool, kNumClasses> has_output_{};
};

struct LabelSet {
  std::vector<std::uint16_t> labels;
  ClassMap class_map = ClassMap::semantic_kitti();

  [[nodiscard]] std::size_t size() const { return labels.size(); }

  [[nodiscard]] SemanticClass class_of(std::size_t i) const {
    return class_map.classify(labels.at(i));
  }

  [[nodiscard]] std::vector<SemanticClass> classes() const {
    std::vector<SemanticClass> out(labels.size());
    std::transform(labels.begin(), labels.end(), out.begin(),
                   [this](std::uint16_t id) { return class_map.classify(id); });
    return out;
  }

  static LabelSet from_classes(std::span<const SemanticClass> classes,
                               ClassMap map = ClassMap::semantic_kitti()) {
    LabelSet set;
    set.class_map = std::move(map);
    set.labels.reserve(classes.size());
    for (SemanticClass c : classes) {
      set.labels.push_back(set.class_map.output_id(c));
    }
    return set;
  }
};

/// Reads `<frame>.bin`: little-endian float32 quadruples (x, y, z, intensity).
/// Intensity is clamped into [0, 1].
inline PointCloud read_point_cloud(const std::filesystem::path& path) {
  const auto bytes = detail::read_all(path);
  if (bytes.size() % kPointStride != 0) {
    throw MalformedFileError(path.string() + ": size " + std::to_string(bytes.size()) +
                             " is not a multiple of 16");
  }
  PointCloud cloud;
  cloud.frame_id = path.stem().string();
  const std::size_t n = bytes.size() / kPointStride;
  cloud.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<float, 4> v{};
    for (std::size_t k = 0; k < 4; ++k) {
      v[k] = std::bit_cast<float>(detail::load_le32(&bytes[i * kPointStride + k * 4]));
      if (!std::isfinite(v[k])) {
        throw MalformedPointError(path.string() + ": non-finite value in point " +
                                  std::to_string(i));
      }
    }
    cloud.points[i] = {v[0], v[1], v[2], std::clamp(v[3], 0.0F, 1.0F)};
  }
  return cloud;
}

inline void write_point_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(cloud.size() * kPointStride);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud.points[i];
    const std::array<float, 4> v{p.x, p.y, p.z, p.intensity};
    for (std::size_t k = 0; k < 4; ++k) {
      detail::store_le32(std::bit_cast<std::uint32_t>(v[k]), &bytes[i * kPointStride + k * 4]);
    }
  }
  detail::write_all(path, bytes);
}

/// Reads `<frame>.label`: one little-endian uint32 per point; the low 16 bits are
/// the semantic id, the instance id in the high half is discarded.
inline LabelSet read_labels(const std::filesystem::path& path, std::size_t n_points,
                            ClassMap map = ClassMap::semantic_kitti()) {
  const auto bytes = detail::read_all(path);
  if (bytes.size() != kLabelStride * n_points) {
    throw AlignmentError(path.string() + ": expected " + std::to_string(n_points) +
                         " labels, file holds " + std::to_string(bytes.size()) + " bytes");
  }
  LabelSet set;
  set.class_map = std::move(map);
  set.labels.resize(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    set.labels[i] = static_cast<std::uint16_t>(detail::load_le32(&bytes[i * 4]) & 0xFFFFU);
  }
  return set;
}

inline void write_labels(const LabelSet& set, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(set.size() * kLabelStride);
  for (std::size_t i = 0; i < set.size(); ++i) {
    detail::store_le32(set.labels[i], &bytes[i * 4]);
  }
  detail::write_all(path, bytes);
}

inline constexpr const char* kPolylineHeader = "frame_id,cluster_id,x,y,z";

/// Writes clusters as CSV rows (frame_id, cluster_id, x, y, z), six fractional digits.
inline void write_polylines(const std::string& frame_id, std::span<const CurbCluster> clusters,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << kPolylineHeader << '\n';
  std::array<char, 160> buf{};
  for (const CurbCluster& c : clusters) {
    for (const Point& p : c.members) {
      std::snprintf(buf.data(), buf.size(), "%s,%d,%.6f,%.6f,%.6f\n", frame_id.c_str(),
                    c.cluster_id, static_cast<double>(p.x), static_cast<double>(p.y),
                    static_cast<double>(p.z));
      out << buf.data();
    }
  }
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

struct PolylineRow {
  std::string frame_id;
  int cluster_id = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline std::vector<PolylineRow> read_polylines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line != kPolylineHeader) {
    throw MalformedFileError(path.string() + ": missing polyline header");
  }
  std::vector<PolylineRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::stringstream ss(line);
    PolylineRow r;
    std::string field;
    std::getline(ss, r.frame_id, ',');
    std::getline(ss, field, ',');
    r.cluster_id = std::stoi(field);
    std::getline(ss, field, ',');
    r.x = std::stod(field);
    std::getline(ss, field, ',');
    r.y = std::stod(field);
    std::getline(ss, field, ',');
    r.z = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace curbnet::io

#endif  // CURBNET_LIDAR_IO_HPP
