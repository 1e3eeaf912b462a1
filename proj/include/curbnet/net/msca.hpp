// Multi-scale and channel attention block.
//
// Multi-scale fusion: three branches with strides 1, 3 and 5. Each branch is a
// stride-s downsampling conv (kernel s x s x s) followed by the asymmetric triple
// 3x3x1 (xy), 3x1x3 (xz), 1x3x3 (yz) and a nearest upsample back to the input grid.
// The three maps are concatenated and fused by a 1x1x1 conv:
//   X_ms = Fuse([X_s1, X_s3, X_s5])
// Channel attention:
//   C = SConv_1x1xD(X);  C_dec = Dec(silu(Enc(C)));
//   W = softmax over channels(C_dec);  C_conv = SConv_1x1xD(C_dec);  X_ch = W * C_conv
// Output: X_ms + X_ch.
#ifndef CURBNET_NET_MSCA_HPP
#define CURBNET_NET_MSCA_HPP

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "curbnet/net/sparse_conv.hpp"

namespace curbnet::net {

inline constexpr std::array<int, 3> kMscaStrides{1, 3, 5};
inline constexpr std::array<KernelShape, 3> kAsymmetricKernels{KernelShape{3, 3, 1},
                                                               KernelShape{3, 1, 3},
                                                               KernelShape{1, 3, 3}};

struct MscaConfig {
  std::size_t channels = 8;
  int depth_kernel = 1;  ///< D of the 1x1xD channel convolutions
  bool zero_init_bias = true;

  [[nodiscard]] std::size_t hidden() const { return std::max<std::size_t>(channels / 2, 1); }
};

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }
inline double silu_grad(double v) {
  const double s = 1.0 / (1.0 + std::exp(-v));
  return s * (1.0 + v * (1.0 - s));
}

/// Geometry-dependent rulebooks for one MSCA application.
struct MscaPlans {
  std::array<ConvPlan, 3> down;
  std::array<std::array<ConvPlan, 3>, 3> asym;
  std::array<UpsamplePlan, 3> up;
  ConvPlan point;
  ConvPlan depth;

  MscaPlans(const GeometryPtr& g, int depth_kernel)
      : point(make_conv_plan(g, {1, 1, 1}, 1)), depth(make_conv_plan(g, {1, 1, depth_kernel}, 1)) {
    for (std::size_t b = 0; b < 3; ++b) {
      const int s = kMscaStrides[b];
      down[b] = make_conv_plan(g, {s, s, s}, s);
      for (std::size_t k = 0; k < 3; ++k) {
        asym[b][k] = make_conv_plan(down[b].out, kAsymmetricKernels[k], 1);
      }
      up[b] = make_upsample_plan(g, down[b].out, s);
    }
  }
};

/// Intermediate activations recorded by the forward pass.
struct MscaTrace {
  BlockTensor input;
  std::array<BlockTensor, 3> down;
  std::array<std::array<BlockTensor, 3>, 3> asym;
  std::array<BlockTensor, 3> scale;  ///< X_s1, X_s3, X_s5 on the input grid
  BlockTensor concat;
  BlockTensor multiscale;  ///< X_ms
  BlockTensor c;           ///< C
  BlockTensor enc_pre;
  BlockTensor enc;         ///< C_encoded
  BlockTensor dec;         ///< C_decoded
  BlockTensor weights;     ///< W_channel
  BlockTensor c_conv;      ///< C_conv
  BlockTensor channel;     ///< X_channel
  BlockTensor output;
};

class Msca {
 public:
  Msca() = default;

  Msca(ParamStore& store, const std::string& name, const MscaConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg) {
    const std::size_t f = cfg.channels;
    for (std::size_t b = 0; b < 3; ++b) {
      const int s = kMscaStrides[b];
      const std::string pre = name + ".s" + std::to_string(s);
      down_[b] = SparseConv::create(store, pre + ".down", {s, s, s}, s, f, f, rng, cfg.zero_init_bias);
      for (std::size_t k = 0; k < 3; ++k) {
        asym_[b][k] = SparseConv::create(store, pre + ".asym" + std::to_string(k),
                                         kAsymmetricKernels[k], 1, f, f, rng, cfg.zero_init_bias);
      }
    }
    fuse_ = SparseConv::create(store, name + ".fuse", {1, 1, 1}, 1, 3 * f, f, rng, cfg.zero_init_bias);
    ch_in_ = SparseConv::create(store, name + ".channel_in", {1, 1, cfg.depth_kernel}, 1, f, f, rng,
                                cfg.zero_init_bias);
    enc_ = SparseConv::create(store, name + ".mlp_enc", {1, 1, 1}, 1, f, cfg.hidden(), rng,
                              cfg.zero_init_bias);
    dec_ = SparseConv::create(store, name + ".mlp_dec", {1, 1, 1}, 1, cfg.hidden(), f, rng,
                              cfg.zero_init_bias);
    ch_out_ = SparseConv::create(store, name + ".channel_out", {1, 1, cfg.depth_kernel}, 1, f, f,
                                 rng, cfg.zero_init_bias);
  }

  [[nodiscard]] const MscaConfig& config() const { return cfg_; }

  [[nodiscard]] MscaTrace forward(const MscaPlans& plans, const BlockTensor& x,
                                  const ParamStore& store) const {
    if (x.channels != cfg_.channels) {
      throw ShapeError("msca: expected " + std::to_string(cfg_.channels) + " channels, got " +
                       std::to_string(x.channels));
    }
    MscaTrace t;
    t.input = x;
    const std::size_t f = cfg_.channels;

    t.concat = BlockTensor(x.geometry, 3 * f);
    for (std::size_t b = 0; b < 3; ++b) {
      t.down[b] = down_[b].forward(plans.down[b], x, store);
      const BlockTensor* prev = &t.down[b];
      for (std::size_t k = 0; k < 3; ++k) {
        t.asym[b][k] = asym_[b][k].forward(plans.asym[b][k], *prev, store);
        prev = &t.asym[b][k];
      }
      t.scale[b] = upsample_forward(plans.up[b], *prev);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto src = t.scale[b].row(i);
        std::copy(src.begin(), src.end(), t.concat.row(i).begin() + static_cast<std::ptrdiff_t>(b * f));
      }
    }
    t.multiscale = fuse_.forward(plans.point, t.concat, store);

    t.c = ch_in_.forward(plans.depth, x, store);
    t.enc_pre = enc_.forward(plans.point, t.c, store);
    t.enc = t.enc_pre;
    for (double& v : t.enc.data) {
      v = silu(v);
    }
    t.dec = dec_.forward(plans.point, t.enc, store);
    t.weights = t.dec.zeros_like();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto z = t.dec.row(i);
      auto w = t.weights.row(i);
      const double m = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (std::size_t c = 0; c < f; ++c) {
        w[c] = std::exp(z[c] - m);
        s += w[c];
      }
      for (std::size_t c = 0; c < f; ++c) {
        w[c] /= s;
      }
    }
    t.c_conv = ch_out_.forward(plans.depth, t.dec, store);
    t.channel = t.c_conv.zeros_like();
    for (std::size_t k = 0; k < t.channel.data.size(); ++k) {
      t.channel.data[k] = t.weights.data[k] * t.c_conv.data[k];
    }

    t.output = t.multiscale;
    t.output += t.channel;
    return t;
  }

  /// Accumulates parameter gradients; returns d input.
  BlockTensor backward(const MscaPlans& plans, const MscaTrace& t, const BlockTensor& dout,
                       ParamStore& store) const {
    const std::size_t f = cfg_.channels;
    BlockTensor dx = t.input.zeros_like();

    // channel branch
    BlockTensor dweights = t.weights.zeros_like();
    BlockTensor dc_conv = t.c_conv.zeros_like();
    for (std::size_t k = 0; k < dout.data.size(); ++k) {
      dweights.data[k] = dout.data[k] * t.c_conv.data[k];
      dc_conv.data[k] = dout.data[k] * t.weights.data[k];
    }
    BlockTensor ddec = ch_out_.backward(plans.depth, t.dec, dc_conv, store);
    for (std::size_t i = 0; i < ddec.rows(); ++i) {
      const auto w = t.weights.row(i);
      const auto g = dweights.row(i);
      double dot = 0.0;
      for (std::size_t c = 0; c < f; ++c) {
        dot += w[c] * g[c];
      }
      auto d = ddec.row(i);
      for (std::size_t c = 0; c < f; ++c) {
        d[c] += w[c] * (g[c] - dot);
      }
    }
    BlockTensor denc = dec_.backward(plans.point, t.enc, ddec, store);
    for (std::size_t k = 0; k < denc.data.size(); ++k) {
      denc.data[k] *= silu_grad(t.enc_pre.data[k]);
    }
    BlockTensor dc = enc_.backward(plans.point, t.c, denc, store);
    dx += ch_in_.backward(plans.depth, t.input, dc, store);

    // multi-scale branch
    BlockTensor dconcat = fuse_.backward(plans.point, t.concat, dout, store);
    for (std::size_t b = 0; b < 3; ++b) {
      BlockTensor dscale(t.input.geometry, f);
      for (std::size_t i = 0; i < dscale.rows(); ++i) {
        const auto src = dconcat.row(i).subspan(b * f, f);
        std::copy(src.begin(), src.end(), dscale.row(i).begin());
      }
      BlockTensor g = upsample_backward(plans.up[b], dscale);
      for (std::size_t k = 3; k-- > 0;) {
        const BlockTensor& in = k == 0 ? t.down[b] : t.asym[b][k - 1];
        g = asym_[b][k].backward(plans.asym[b][k], in, g, store);
      }
      dx += down_[b].backward(plans.down[b], t.input, g, store);
    }
    return dx;
  }

 private:
  MscaConfig cfg_;
  std::array<SparseConv, 3> down_{};
  std::array<std::array<SparseConv, 3>, 3> asym_{};
  SparseConv fuse_{};
  SparseConv ch_in_{};
  SparseConv enc_{};
  SparseConv dec_{};
  SparseConv ch_out_{};
};

}  // namespace curbnet::net

#endif  // CURBNET_NET_MSCA_HPP
