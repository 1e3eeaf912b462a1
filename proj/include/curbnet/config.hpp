// Pipeline configuration as a flat `key = value` document.
#ifndef CURBNET_CONFIG_HPP
#define CURBNET_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "curbnet/core.hpp"
#include "curbnet/dataset_builder.hpp"
#include "curbnet/eval.hpp"
#include "curbnet/net/network.hpp"
#include "curbnet/net/train.hpp"
#include "curbnet/postprocess.hpp"

namespace curbnet {

struct PipelineConfig {
  net::NetConfig net;      ///< includes the voxel grid
  net::TrainConfig train;  ///< includes the loss constants
  post::RefineConfig post;
  eval::ToleranceSpec tol;
  eval::MetricFloor floor;
  dataset::ProposalConfig labels;
  std::uint16_t curb_id = 20;
  std::uint64_t seed = 7;
  std::string data_dir;
  std::string out_dir;
  std::string checkpoint;

  void validate() const {
    net.validate();
    train.loss.validate();
    if (train.batch_size == 0) {
      throw ConfigError("train.batch_size must be >= 1");
    }
    if (!(train.learning_rate > 0.0) || !(train.max_grad_norm >= 0.0)) {
      throw ConfigError("train.learning_rate must be > 0 and train.max_grad_norm >= 0");
    }
    post.dbscan.validate();
    if (post.degree < 1 || !(post.delta_dist >= 0.0)) {
      throw ConfigError("post.degree must be >= 1 and post.delta_dist >= 0");
    }
    tol.validate();
    labels.crop.validate();
  }

  [[nodiscard]] io::ClassMap class_map() const { return io::ClassMap::semantic_kitti(curb_id); }

  /// Applies one `key = value` assignment. Throws ConfigError on unknown keys or
  /// unparsable values.
  void set(std::string_view key, std::string_view value);

  /// Canonical serialisation; parse(to_text()) reproduces the configuration.
  [[nodiscard]] std::string to_text() const;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> words(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::vector<std::string> out;
  for (std::string w; in >> w;) {
    out.push_back(w);
  }
  return out;
}

template <class T>
T number(std::string_view key, std::string_view text) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError("config: bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return v;
}

template <class T>
T scalar(std::string_view key, std::string_view value) {
  const auto w = words(value);
  if (w.size() != 1) {
    throw ConfigError("config: " + std::string(key) + " takes exactly one value");
  }
  return number<T>(key, w[0]);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace config_detail

inline void PipelineConfig::set(std::string_view key, std::string_view value) {
  using namespace config_detail;
  const std::string k(key);
  if (k == "seed") {
    seed = scalar<std::uint64_t>(k, value);
    net.seed = seed;
    train.seed = seed;
  } else if (k == "grid.mode") {
    const auto v = trim(value);
    if (v != "cylindrical" && v != "cartesian") {
      throw ConfigError("config: grid.mode must be cylindrical or cartesian");
    }
    net.grid.mode = v == "cartesian" ? voxel::GridMode::cartesian : voxel::GridMode::cylindrical;
  } else if (k == "grid.axis0" || k == "grid.axis1" || k == "grid.axis2") {
    const auto w = words(value);
    if (w.size() != 3) {
      throw ConfigError("config: " + k + " takes 'min max cells'");
    }
    const auto a = static_cast<std::size_t>(k.back() - '0');
    net.grid.bounds[a] = {number<double>(k, w[0]), number<double>(k, w[1])};
    net.grid.resolution[a] = number<int>(k, w[2]);
  } else if (k == "grid.out_of_range") {
    const auto v = trim(value);
    if (v != "drop" && v != "clamp") {
      throw ConfigError("config: grid.out_of_range must be drop or clamp");
    }
    net.grid.out_of_range = v == "clamp" ? voxel::OutOfRangePolicy::clamp : voxel::OutOfRangePolicy::drop;
  } else if (k == "net.widths") {
    const auto w = words(value);
    if (w.size() != net::kLevels) {
      throw ConfigError("config: net.widths takes " + std::to_string(net::kLevels) + " values");
    }
    for (std::size_t l = 0; l < net::kLevels; ++l) {
      net.widths[l] = number<std::size_t>(k, w[l]);
    }
  } else if (k == "train.epochs") {
    train.epochs = scalar<std::size_t>(k, value);
  } else if (k == "train.learning_rate") {
    train.learning_rate = scalar<double>(k, value);
  } else if (k == "train.batch_size") {
    train.batch_size = scalar<std::size_t>(k, value);
  } else if (k == "train.max_grad_norm") {
    train.max_grad_norm = scalar<double>(k, value);
  } else if (k == "loss.alpha_t") {
    train.loss.alpha_t = scalar<double>(k, value);
  } else if (k == "loss.gamma_a") {
    train.loss.gamma_a = scalar<double>(k, value);
  } else if (k == "loss.scale_s") {
    train.loss.scale_s = scalar<double>(k, value);
  } else if (k == "loss.delta_log") {
    train.loss.delta_log = scalar<double>(k, value);
  } else if (k == "loss.lambda_iou") {
    train.loss.lambda_iou = scalar<double>(k, value);
  } else if (k == "dbscan.eps") {
    post.dbscan.eps = scalar<double>(k, value);
  } else if (k == "dbscan.min_pts") {
    post.dbscan.min_pts = scalar<std::size_t>(k, value);
  } else if (k == "post.degree") {
    post.degree = scalar<std::size_t>(k, value);
  } else if (k == "post.delta_dist") {
    post.delta_dist = scalar<double>(k, value);
  } else if (k == "eval.taus") {
    tol.taus.clear();
    for (const auto& w : words(value)) {
      tol.taus.push_back(number<double>(k, w));
    }
  } else if (k == "eval.min_precision") {
    floor.precision = scalar<double>(k, value);
  } else if (k == "eval.min_recall") {
    floor.recall = scalar<double>(k, value);
  } else if (k == "eval.min_f1") {
    floor.f1 = scalar<double>(k, value);
  } else if (k == "crop.forward_range") {
    labels.crop.forward_range = scalar<double>(k, value);
  } else if (k == "crop.lateral_factor") {
    labels.crop.lateral_factor = scalar<double>(k, value);
  } else if (k == "labels.curb_id") {
    curb_id = scalar<std::uint16_t>(k, value);
  } else if (k == "paths.data") {
    data_dir = trim(value);
  } else if (k == "paths.out") {
    out_dir = trim(value);
  } else if (k == "paths.checkpoint") {
    checkpoint = trim(value);
  } else {
    throw ConfigError("config: unknown key '" + k + "'");
  }
}

inline std::string PipelineConfig::to_text() const {
  using config_detail::fmt;
  std::ostringstream os;
  os << "seed = " << seed << '\n';
  os << "grid.mode = " << (net.grid.mode == voxel::GridMode::cartesian ? "cartesian" : "cylindrical") << '\n';
  for (std::size_t a = 0; a < 3; ++a) {
    os << "grid.axis" << a << " = " << fmt(net.grid.bounds[a].min) << ' ' << fmt(net.grid.bounds[a].max) << ' '
       << net.grid.resolution[a] << '\n';
  }
  os << "grid.out_of_range = " << (net.grid.out_of_range == voxel::OutOfRangePolicy::clamp ? "clamp" : "drop")
     << '\n';
  os << "net.widths =";
  for (std::size_t w : net.widths) {
    os << ' ' << w;
  }
  os << '\n';
  os << "train.epochs = " << train.epochs << '\n';
  os << "train.learning_rate = " << fmt(train.learning_rate) << '\n';
  os << "train.batch_size = " << train.batch_size << '\n';
  os << "train.max_grad_norm = " << fmt(train.max_grad_norm) << '\n';
  os << "loss.alpha_t = " << fmt(train.loss.alpha_t) << '\n';
  os << "loss.gamma_a = " << fmt(train.loss.gamma_a) << '\n';
  os << "loss.scale_s = " << fmt(train.loss.scale_s) << '\n';
  os << "loss.delta_log = " << fmt(train.loss.delta_log) << '\n';
  os << "loss.lambda_iou = " << fmt(train.loss.lambda_iou) << '\n';
  os << "dbscan.eps = " << fmt(post.dbscan.eps) << '\n';
  os << "dbscan.min_pts = " << post.dbscan.min_pts << '\n';
  os << "post.degree = " << post.degree << '\n';
  os << "post.delta_dist = " << fmt(post.delta_dist) << '\n';
  os << "eval.taus =";
  for (double t : tol.taus) {
    os << ' ' << fmt(t);
  }
  os << '\n';
  if (floor.precision) {
    os << "eval.min_precision = " << fmt(*floor.precision) << '\n';
  }
  if (floor.recall) {
    os << "eval.min_recall = " << fmt(*floor.recall) << '\n';
  }
  if (floor.f1) {
    os << "eval.min_f1 = " << fmt(*floor.f1) << '\n';
  }
  os << "crop.forward_range = " << fmt(labels.crop.forward_range) << '\n';
  os << "crop.lateral_factor = " << fmt(labels.crop.lateral_factor) << '\n';
  os << "labels.curb_id = " << curb_id << '\n';
  return os.str();
}

/// Applies `key = value` lines on top of `base`. Blank lines and lines starting
/// with '#' are ignored.
inline PipelineConfig parse_config(std::string_view text, PipelineConfig base = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = config_detail::trim(line);
    if (t.empty() || t.front() == '#') {
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    base.set(config_detail::trim(std::string_view(t).substr(0, eq)),
             config_detail::trim(std::string_view(t).substr(eq + 1)));
  }
  base.validate();
  return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace curbnet

#endif  // CURBNET_CONFIG_HPP
