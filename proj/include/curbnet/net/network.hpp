// Five-level sparse encoder-decoder with MSCA blocks and a 4-class segmentation head.
#ifndef CURBNET_NET_NETWORK_HPP
#define CURBNET_NET_NETWORK_HPP

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "curbnet/net/msca.hpp"
#include "curbnet/voxel.hpp"

namespace curbnet::net {

inline constexpr std::size_t kLevels = 5;
/// Spatial extents are padded to a multiple of 2^(levels-1).
inline constexpr int kPadMultiple = 1 << (kLevels - 1);

struct NetConfig {
  voxel::VoxelGridSpec grid;
  std::size_t in_channels = voxel::kNumVoxelFeatures;
  std::array<std::size_t, kLevels> widths{8, 8, 8, 8, 8};
  std::uint64_t seed = 7;
  bool zero_init_bias = true;

  [[nodiscard]] Extent padded_extent() const {
    auto pad = [](int n) { return ceil_div(n, kPadMultiple) * kPadMultiple; };
    return {pad(grid.resolution[0]), pad(grid.resolution[1]), pad(grid.resolution[2])};
  }

  [[nodiscard]] Extent level_extent(std::size_t level) const {
    Extent e = padded_extent();
    for (std::size_t l = 0; l < level; ++l) {
      e = {ceil_div(e.x, 2), ceil_div(e.y, 2), ceil_div(e.z, 2)};
    }
    return e;
  }

  void validate() const {
    grid.validate();
    if (in_channels == 0) {
      throw ConfigError("network: input channel count must be >= 1");
    }
    for (std::size_t w : widths) {
      if (w == 0) {
        throw ConfigError("network: level widths must be >= 1");
      }
    }
  }

  /// key = value description stored in checkpoints.
  [[nodiscard]] std::string to_metadata() const {
    std::ostringstream os;
    os.precision(17);
    os << "grid.mode = " << (grid.mode == voxel::GridMode::cylindrical ? "cylindrical" : "cartesian")
       << '\n';
    for (std::size_t a = 0; a < 3; ++a) {
      os << "grid.axis" << a << " = " << grid.bounds[a].min << ' ' << grid.bounds[a].max << ' '
         << grid.resolution[a] << '\n';
    }
    os << "grid.out_of_range = " << (grid.out_of_range == voxel::OutOfRangePolicy::drop ? "drop" : "clamp")
       << '\n';
    os << "net.in_channels = " << in_channels << '\n';
    os << "net.widths =";
    for (std::size_t w : widths) {
      os << ' ' << w;
    }
    os << '\n';
    return os.str();
  }

  static NetConfig from_metadata(const std::string& text) {
    NetConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        continue;
      }
      std::string key = line.substr(0, eq);
      key.erase(key.find_last_not_of(' ') + 1);
      std::istringstream val(line.substr(eq + 1));
      if (key == "grid.mode") {
        std::string m;
        val >> m;
        cfg.grid.mode = m == "cartesian" ? voxel::GridMode::cartesian : voxel::GridMode::cylindrical;
      } else if (key.rfind("grid.axis", 0) == 0) {
        const auto a = static_cast<std::size_t>(std::stoi(key.substr(9)));
        if (a > 2) {
          throw MalformedFileError("checkpoint metadata: bad axis " + key);
        }
        val >> cfg.grid.bounds[a].min >> cfg.grid.bounds[a].max >> cfg.grid.resolution[a];
      } else if (key == "grid.out_of_range") {
        std::string p;
        val >> p;
        cfg.grid.out_of_range = p == "clamp" ? voxel::OutOfRangePolicy::clamp : voxel::OutOfRangePolicy::drop;
      } else if (key == "net.in_channels") {
        val >> cfg.in_channels;
      } else if (key == "net.widths") {
        for (auto& w : cfg.widths) {
          val >> w;
        }
      } else {
        throw MalformedFileError("checkpoint metadata: unknown key " + key);
      }
      if (val.fail()) {
        throw MalformedFileError("checkpoint metadata: bad value for " + key);
      }
    }
    cfg.validate();
    return cfg;
  }
};

/// Coordinate sets and rulebooks of every level for one input geometry.
struct Hierarchy {
  std::array<GeometryPtr, kLevels> level;
  std::array<std::optional<MscaPlans>, kLevels> msca;
  std::array<ConvPlan, kLevels> point;
  std::array<ConvPlan, kLevels> down;  ///< down[l] maps level l-1 to l (l >= 1)
  std::array<UpsamplePlan, kLevels> unpool;  ///< unpool[l] maps level l+1 to l (l < 4)

  explicit Hierarchy(GeometryPtr g0) {
    level[0] = std::move(g0);
    for (std::size_t l = 1; l < kLevels; ++l) {
      down[l] = make_conv_plan(level[l - 1], {2, 2, 2}, 2);
      level[l] = down[l].out;
    }
    for (std::size_t l = 0; l < kLevels; ++l) {
      msca[l].emplace(level[l], level[l]->extent().z);
      point[l] = make_conv_plan(level[l], {1, 1, 1}, 1);
      if (l + 1 < kLevels) {
        unpool[l] = make_upsample_plan(level[l], level[l + 1], 2);
      }
    }
  }
};

struct NetworkTrace {
  std::shared_ptr<const Hierarchy> hierarchy;
  BlockTensor input;
  BlockTensor stem;
  std::array<BlockTensor, kLevels> down_pre;  ///< before activation, l >= 1
  std::array<BlockTensor, kLevels> down_act;
  std::array<MscaTrace, kLevels> enc;
  std::array<BlockTensor, kLevels> x;  ///< encoder outputs
  std::array<BlockTensor, kLevels> up;  ///< unpooled decoder input, l < 4
  std::array<BlockTensor, kLevels> fused;  ///< projection + skip, l < 4
  std::array<MscaTrace, kLevels> dec;
  std::array<BlockTensor, kLevels> y;  ///< decoder outputs (y[4] = x[4])
  BlockTensor agg_pre;
  BlockTensor agg;
  BlockTensor logits;
};

namespace detail {

inline BlockTensor apply_silu(const BlockTensor& pre) {
  BlockTensor out = pre;
  for (double& v : out.data) {
    v = silu(v);
  }
  return out;
}

inline BlockTensor silu_backward(const BlockTensor& pre, const BlockTensor& dout) {
  BlockTensor d = dout;
  for (std::size_t k = 0; k < d.data.size(); ++k) {
    d.data[k] *= silu_grad(pre.data[k]);
  }
  return d;
}

}  // namespace detail

class Network {
 public:
  explicit Network(const NetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    build(rng);
  }

  /// Rebuilds the architecture and adopts `params`, which must match it name for name.
  Network(const NetConfig& cfg, const ParamStore& params) : Network(cfg) {
    if (params.size() != params_.size()) {
      throw ShapeError("checkpoint holds " + std::to_string(params.size()) +
                       " tensors, architecture expects " + std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name != params_[i].name || params[i].shape != params_[i].shape) {
        throw ShapeError("checkpoint tensor " + params[i].name + " does not match " +
                         params_[i].name);
      }
      params_[i].value = params[i].value;
    }
  }

  [[nodiscard]] const NetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  [[nodiscard]] const ParamStore& params() const { return params_; }

  /// Level-0 geometry of a voxelized frame on the padded grid.
  [[nodiscard]] std::shared_ptr<const Hierarchy> prepare(const voxel::SparseVoxelTensor& v) const {
    check_grid(v);
    std::vector<Coord> coords;
    coords.reserve(v.occupied());
    for (const auto& c : v.cells) {
      coords.push_back({c.h, c.w, c.d});
    }
    return std::make_shared<const Hierarchy>(
        std::make_shared<const CoordSet>(cfg_.padded_extent(), std::move(coords)));
  }

  /// Scaled voxel features placed on the hierarchy's level-0 grid.
  [[nodiscard]] BlockTensor encode_input(const Hierarchy& h, const voxel::SparseVoxelTensor& v) const {
    check_grid(v);
    if (v.channels != cfg_.in_channels) {
      throw ShapeError("network expects " + std::to_string(cfg_.in_channels) +
                       " input channels, voxel tensor has " + std::to_string(v.channels));
    }
    BlockTensor in(h.level[0], v.channels);
    const auto scale = feature_scale();
    for (std::size_t s = 0; s < v.occupied(); ++s) {
      const auto& c = v.cells[s];
      const auto slot = h.level[0]->find({c.h, c.w, c.d});
      if (!slot) {
        throw CorruptionError("voxel cell missing from hierarchy");
      }
      const auto src = v.row(s);
      auto dst = in.row(*slot);
      for (std::size_t f = 0; f < v.channels; ++f) {
        dst[f] = (src[f] - scale[f].first) / scale[f].second;
      }
    }
    return in;
  }

  /// Per-cell logits for a voxelized frame, ordered like v.cells.
  [[nodiscard]] BlockTensor forward(const voxel::SparseVoxelTensor& v) {
    auto h = prepare(v);
    return forward(h, encode_input(*h, v));
  }

  BlockTensor forward(std::shared_ptr<const Hierarchy> h, const BlockTensor& input) {
    if (input.geometry != h->level[0] || input.channels != cfg_.in_channels) {
      throw ShapeError("network input does not conform to the hierarchy");
    }
    NetworkTrace t;
    t.hierarchy = h;
    t.input = input;
    const ParamStore& p = params_;
    t.stem = stem_.forward(h->point[0], input, p);
    t.enc[0] = enc_[0].forward(*h->msca[0], t.stem, p);
    t.x[0] = detail::apply_silu(t.enc[0].output);
    for (std::size_t l = 1; l < kLevels; ++l) {
      t.down_pre[l] = down_[l].forward(h->down[l], t.x[l - 1], p);
      t.down_act[l] = detail::apply_silu(t.down_pre[l]);
      t.enc[l] = enc_[l].forward(*h->msca[l], t.down_act[l], p);
      t.x[l] = detail::apply_silu(t.enc[l].output);
    }
    t.y[kLevels - 1] = t.x[kLevels - 1];
    for (std::size_t l = kLevels - 1; l-- > 0;) {
      t.up[l] = upsample_forward(h->unpool[l], t.y[l + 1]);
      t.fused[l] = proj_[l].forward(h->point[l], t.up[l], p);
      t.fused[l] += t.x[l];
      t.dec[l] = dec_[l].forward(*h->msca[l], t.fused[l], p);
      t.y[l] = detail::apply_silu(t.dec[l].output);
    }
    t.agg_pre = agg_.forward(h->point[0], t.y[0], p);
    t.agg = detail::apply_silu(t.agg_pre);
    t.logits = head_.forward(h->point[0], t.agg, p);
    trace_ = std::move(t);
    return trace_->logits;
  }

  /// Reverse pass of the last forward; accumulates into params().grad.
  void backward(const BlockTensor& dlogits) {
    if (!trace_) {
      throw StateError("network backward called without a recorded forward pass");
    }
    const NetworkTrace& t = *trace_;
    if (dlogits.geometry != t.logits.geometry || dlogits.channels != t.logits.channels) {
      throw ShapeError("logit gradient does not match the recorded output");
    }
    const Hierarchy& h = *t.hierarchy;
    ParamStore& p = params_;

    BlockTensor dagg = head_.backward(h.point[0], t.agg, dlogits, p);
    BlockTensor dy0 = agg_.backward(h.point[0], t.y[0], detail::silu_backward(t.agg_pre, dagg), p);

    std::array<BlockTensor, kLevels> dx;
    for (std::size_t l = 0; l < kLevels; ++l) {
      dx[l] = t.x[l].zeros_like();
    }
    BlockTensor dy = std::move(dy0);
    for (std::size_t l = 0; l + 1 < kLevels; ++l) {
      BlockTensor dfused =
          dec_[l].backward(*h.msca[l], t.dec[l], detail::silu_backward(t.dec[l].output, dy), p);
      dx[l] += dfused;
      BlockTensor dup = proj_[l].backward(h.point[l], t.up[l], dfused, p);
      dy = upsample_backward(h.unpool[l], dup);
    }
    dx[kLevels - 1] += dy;

    for (std::size_t l = kLevels; l-- > 1;) {
      BlockTensor dact =
          enc_[l].backward(*h.msca[l], t.enc[l], detail::silu_backward(t.enc[l].output, dx[l]), p);
      BlockTensor dprev = down_[l].backward(h.down[l], t.x[l - 1],
                                            detail::silu_backward(t.down_pre[l], dact), p);
      dx[l - 1] += dprev;
    }
    BlockTensor dstem =
        enc_[0].backward(*h.msca[0], t.enc[0], detail::silu_backward(t.enc[0].output, dx[0]), p);
    stem_.backward(h.point[0], t.input, dstem, p);
  }

  [[nodiscard]] bool has_trace() const { return trace_.has_value(); }
  [[nodiscard]] const NetworkTrace& trace() const {
    if (!trace_) {
      throw StateError("no forward pass recorded");
    }
    return *trace_;
  }
  void clear_trace() { trace_.reset(); }

 private:
  void build(std::mt19937_64& rng) {
    const auto& w = cfg_.widths;
    const bool zb = cfg_.zero_init_bias;
    stem_ = SparseConv::create(params_, "stem", {1, 1, 1}, 1, cfg_.in_channels, w[0], rng, zb);
    for (std::size_t l = 0; l < kLevels; ++l) {
      if (l > 0) {
        down_[l] = SparseConv::create(params_, "enc" + std::to_string(l) + ".down", {2, 2, 2}, 2,
                                      w[l - 1], w[l], rng, zb);
      }
      enc_[l] = Msca(params_, "enc" + std::to_string(l) + ".msca",
                     {w[l], cfg_.level_extent(l).z, zb}, rng);
    }
    for (std::size_t l = kLevels - 1; l-- > 0;) {
      proj_[l] = SparseConv::create(params_, "dec" + std::to_string(l) + ".proj", {1, 1, 1}, 1,
                                    w[l + 1], w[l], rng, zb);
      dec_[l] = Msca(params_, "dec" + std::to_string(l) + ".msca",
                     {w[l], cfg_.level_extent(l).z, zb}, rng);
    }
    agg_ = SparseConv::create(params_, "agg", {1, 1, 1}, 1, w[0], w[0], rng, zb);
    head_ = SparseConv::create(params_, "head", {1, 1, 1}, 1, w[0], kNumClasses, rng, zb);
  }

  void check_grid(const voxel::SparseVoxelTensor& v) const {
    if (v.spec.resolution != cfg_.grid.resolution) {
      throw ShapeError("voxel grid resolution differs from the network's grid");
    }
  }

  /// (offset, scale) per input feature so that coordinates land roughly in [-1, 1].
  [[nodiscard]] std::vector<std::pair<double, double>> feature_scale() const {
    std::vector<std::pair<double, double>> s(cfg_.in_channels, {0.0, 1.0});
    const auto& b = cfg_.grid.bounds;
    if (cfg_.in_channels >= voxel::kNumVoxelFeatures) {
      auto half = [](const voxel::AxisRange& r) {
        return std::max({std::abs(r.min), std::abs(r.max), 1e-9});
      };
      if (cfg_.grid.mode == voxel::GridMode::cylindrical) {
        s[voxel::kMeanX] = {0.0, half(b[0])};
        s[voxel::kMeanY] = {0.0, half(b[0])};
      } else {
        s[voxel::kMeanX] = {0.0, half(b[0])};
        s[voxel::kMeanY] = {0.0, half(b[1])};
      }
      s[voxel::kMeanZ] = {0.5 * (b[2].min + b[2].max), 0.5 * (b[2].max - b[2].min)};
    }
    return s;
  }

  NetConfig cfg_;
  ParamStore params_;
  SparseConv stem_{};
  std::array<SparseConv, kLevels> down_{};
  std::array<Msca, kLevels> enc_{};
  std::array<SparseConv, kLevels> proj_{};
  std::array<Msca, kLevels> dec_{};
  SparseConv agg_{};
  SparseConv head_{};
  std::optional<NetworkTrace> trace_;
};

/// Copies per-cell rows of a level-0 tensor into voxel-cell order.
inline voxel::SparseVoxelTensor to_voxel_scores(const voxel::SparseVoxelTensor& v,
                                                const BlockTensor& logits) {
  voxel::SparseVoxelTensor out;
  out.spec = v.spec;
  out.channels = logits.channels;
  out.cells = v.cells;
  out.point_index = v.point_index;
  out.features.resize(v.occupied() * logits.channels);
  for (std::size_t s = 0; s < v.occupied(); ++s) {
    const auto& c = v.cells[s];
    const auto slot = logits.geometry->find({c.h, c.w, c.d});
    if (!slot) {
      throw CorruptionError("logit tensor lacks a voxel cell");
    }
    const auto src = logits.row(*slot);
    std::copy(src.begin(), src.end(), out.row(s).begin());
  }
  return out;
}

}  // namespace curbnet::net

#endif  // CURBNET_NET_NETWORK_HPP
