// Sparse 3-D convolution over occupied cells, with rulebook-based forward and
// reverse passes, and nearest-neighbour upsampling between grids.
#ifndef CURBNET_NET_SPARSE_CONV_HPP
#define CURBNET_NET_SPARSE_CONV_HPP

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "curbnet/net/params.hpp"
#include "curbnet/net/tensor.hpp"

namespace curbnet::net {

struct KernelShape {
  int x = 1;
  int y = 1;
  int z = 1;

  [[nodiscard]] int volume() const { return x * y * z; }

  friend bool operator==(const KernelShape&, const KernelShape&) = default;
};

/// Input/output index pairs for every kernel tap.
///
/// Stride 1 is submanifold: output cells are exactly the input cells, and the
/// kernel is centred with offsets [-(k-1)/2, k/2] per axis (zero padding keeps the
/// spatial shape). Stride s > 1 maps output cell o to inputs o*s + t - pad for
/// t in [0, k), pad = max(k - s, 0) / 2, over a grid of extent ceil(n / s); an
/// output cell is occupied when any of its inputs is.
struct ConvPlan {
  GeometryPtr in;
  GeometryPtr out;
  KernelShape kernel;
  int stride = 1;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> taps;
};

namespace detail {

inline int tap_origin(int k, int stride) { return stride == 1 ? (k - 1) / 2 : std::max(k - stride, 0) / 2; }

inline std::size_t tap_index(const KernelShape& k, int tx, int ty, int tz) {
  return static_cast<std::size_t>((tx * k.y + ty) * k.z + tz);
}

}  // namespace detail

inline ConvPlan make_conv_plan(const GeometryPtr& in, KernelShape kernel, int stride) {
  if (stride < 1 || kernel.x < 1 || kernel.y < 1 || kernel.z < 1) {
    throw ConfigError("sparse conv: kernel extents and stride must be >= 1");
  }
  ConvPlan plan;
  plan.in = in;
  plan.kernel = kernel;
  plan.stride = stride;
  plan.taps.resize(static_cast<std::size_t>(kernel.volume()));
  const int ox = detail::tap_origin(kernel.x, stride);
  const int oy = detail::tap_origin(kernel.y, stride);
  const int oz = detail::tap_origin(kernel.z, stride);

  if (stride == 1) {
    plan.out = in;
    for (std::size_t o = 0; o < in->size(); ++o) {
      const Coord c = (*in)[o];
      for (int tx = 0; tx < kernel.x; ++tx) {
        for (int ty = 0; ty < kernel.y; ++ty) {
          for (int tz = 0; tz < kernel.z; ++tz) {
            const Coord src{c.x + tx - ox, c.y + ty - oy, c.z + tz - oz};
            if (auto i = in->find(src)) {
              plan.taps[detail::tap_index(kernel, tx, ty, tz)].emplace_back(
                  static_cast<std::uint32_t>(*i), static_cast<std::uint32_t>(o));
            }
          }
        }
      }
    }
    return plan;
  }

  const Extent ie = in->extent();
  const Extent oe{ceil_div(ie.x, stride), ceil_div(ie.y, stride), ceil_div(ie.z, stride)};
  // input i feeds output o through tap t when i = o*s + t - pad
  auto for_each_link = [&](auto&& fn) {
    for (std::size_t i = 0; i < in->size(); ++i) {
      const Coord c = (*in)[i];
      for (int tx = 0; tx < kernel.x; ++tx) {
        const int nx = c.x + ox - tx;
        if (nx < 0 || nx % stride != 0 || nx / stride >= oe.x) {
          continue;
        }
        for (int ty = 0; ty < kernel.y; ++ty) {
          const int ny = c.y + oy - ty;
          if (ny < 0 || ny % stride != 0 || ny / stride >= oe.y) {
            continue;
          }
          for (int tz = 0; tz < kernel.z; ++tz) {
            const int nz = c.z + oz - tz;
            if (nz < 0 || nz % stride != 0 || nz / stride >= oe.z) {
              continue;
            }
            fn(i, Coord{nx / stride, ny / stride, nz / stride}, detail::tap_index(kernel, tx, ty, tz));
          }
        }
      }
    }
  };
  std::vector<Coord> out_coords;
  for_each_link([&](std::size_t, const Coord& o, std::size_t) { out_coords.push_back(o); });
  plan.out = std::make_shared<const CoordSet>(oe, std::move(out_coords));
  for_each_link([&](std::size_t i, const Coord& o, std::size_t tap) {
    plan.taps[tap].emplace_back(static_cast<std::uint32_t>(i),
                                static_cast<std::uint32_t>(*plan.out->find(o)));
  });
  return plan;
}

/// out = bias + sum over taps of in[i] * W[tap] ; W laid out [tap][cin][cout].
inline BlockTensor conv_forward(const ConvPlan& plan, const BlockTensor& in,
                                std::span<const double> weight, std::span<const double> bias,
                                std::size_t cout) {
  if (in.geometry != plan.in) {
    throw ShapeError("sparse conv: input geometry differs from the plan");
  }
  const std::size_t cin = in.channels;
  if (weight.size() != static_cast<std::size_t>(plan.kernel.volume()) * cin * cout ||
      bias.size() != cout) {
    throw ShapeError("sparse conv: channel mismatch between input and kernel");
  }
  BlockTensor out(plan.out, cout);
  for (std::size_t o = 0; o < out.rows(); ++o) {
    std::copy(bias.begin(), bias.end(), out.row(o).begin());
  }
  for (std::size_t t = 0; t < plan.taps.size(); ++t) {
    const double* w = weight.data() + t * cin * cout;
    for (const auto& [i, o] : plan.taps[t]) {
      const double* x = in.data.data() + static_cast<std::size_t>(i) * cin;
      double* y = out.data.data() + static_cast<std::size_t>(o) * cout;
      for (std::size_t a = 0; a < cin; ++a) {
        const double xa = x[a];
        if (xa == 0.0) {
          continue;
        }
        const double* wa = w + a * cout;
        for (std::size_t b = 0; b < cout; ++b) {
          y[b] += xa * wa[b];
        }
      }
    }
  }
  return out;
}

/// Accumulates dW and db, returns d in.
inline BlockTensor conv_backward(const ConvPlan& plan, const BlockTensor& in,
                                 const BlockTensor& dout, std::span<const double> weight,
                                 std::span<double> dweight, std::span<double> dbias) {
  const std::size_t cin = in.channels;
  const std::size_t cout = dout.channels;
  BlockTensor din = in.zeros_like();
  for (std::size_t o = 0; o < dout.rows(); ++o) {
    const auto g = dout.row(o);
    for (std::size_t b = 0; b < cout; ++b) {
      dbias[b] += g[b];
    }
  }
  for (std::size_t t = 0; t < plan.taps.size(); ++t) {
    const double* w = weight.data() + t * cin * cout;
    double* dw = dweight.data() + t * cin * cout;
    for (const auto& [i, o] : plan.taps[t]) {
      const double* x = in.data.data() + static_cast<std::size_t>(i) * cin;
      double* dx = din.data.data() + static_cast<std::size_t>(i) * cin;
      const double* g = dout.data.data() + static_cast<std::size_t>(o) * cout;
      for (std::size_t a = 0; a < cin; ++a) {
        const double* wa = w + a * cout;
        double* dwa = dw + a * cout;
        double acc = 0.0;
        for (std::size_t b = 0; b < cout; ++b) {
          acc += wa[b] * g[b];
          dwa[b] += x[a] * g[b];
        }
        dx[a] += acc;
      }
    }
  }
  return din;
}

/// A convolution layer whose weights live in a ParamStore.
struct SparseConv {
  KernelShape kernel;
  int stride = 1;
  std::size_t cin = 0;
  std::size_t cout = 0;
  std::size_t weight_slot = 0;
  std::size_t bias_slot = 0;

  static SparseConv create(ParamStore& store, const std::string& name, KernelShape kernel,
                           int stride, std::size_t cin, std::size_t cout, std::mt19937_64& rng,
                           bool zero_bias = true) {
    SparseConv c{kernel, stride, cin, cout, 0, 0};
    const auto taps = static_cast<std::size_t>(kernel.volume());
    c.weight_slot = store.add(name + ".weight", {taps, cin, cout},
                              init_uniform(taps * cin * cout, taps * cin, rng));
    c.bias_slot = store.add(name + ".bias", {cout},
                            zero_bias ? std::vector<double>(cout, 0.0) : init_uniform(cout, cin, rng));
    return c;
  }

  [[nodiscard]] BlockTensor forward(const ConvPlan& plan, const BlockTensor& in,
                                    const ParamStore& store) const {
    if (in.channels != cin) {
      throw ShapeError("sparse conv: expected " + std::to_string(cin) + " input channels, got " +
                       std::to_string(in.channels));
    }
    return conv_forward(plan, in, store[weight_slot].value, store[bias_slot].value, cout);
  }

  BlockTensor backward(const ConvPlan& plan, const BlockTensor& in, const BlockTensor& dout,
                       ParamStore& store) const {
    return conv_backward(plan, in, dout, store[weight_slot].value, store[weight_slot].grad,
                         store[bias_slot].grad);
  }
};

/// Free-standing convolution with an explicit kernel; builds its own plan.
inline BlockTensor sparse_conv(const BlockTensor& x, KernelShape kernel, int stride,
                               std::span<const double> weight, std::span<const double> bias,
                               std::size_t cout) {
  const ConvPlan plan = make_conv_plan(x.geometry, kernel, stride);
  return conv_forward(plan, x, weight, bias, cout);
}

/// Fine-to-coarse parent map: fine cell c takes the value of coarse cell c / factor.
struct UpsamplePlan {
  GeometryPtr fine;
  GeometryPtr coarse;
  std::vector<std::uint32_t> parent;
};

inline UpsamplePlan make_upsample_plan(const GeometryPtr& fine, const GeometryPtr& coarse,
                                       int factor) {
  UpsamplePlan p{fine, coarse, std::vector<std::uint32_t>(fine->size())};
  for (std::size_t i = 0; i < fine->size(); ++i) {
    const Coord c = (*fine)[i];
    auto j = coarse->find({c.x / factor, c.y / factor, c.z / factor});
    if (!j) {
      throw CorruptionError("upsample: coarse grid lacks the parent of an occupied fine cell");
    }
    p.parent[i] = static_cast<std::uint32_t>(*j);
  }
  return p;
}

inline BlockTensor upsample_forward(const UpsamplePlan& plan, const BlockTensor& coarse) {
  BlockTensor out(plan.fine, coarse.channels);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const auto src = coarse.row(plan.parent[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline BlockTensor upsample_backward(const UpsamplePlan& plan, const BlockTensor& dfine) {
  BlockTensor dc(plan.coarse, dfine.channels);
  for (std::size_t i = 0; i < dfine.rows(); ++i) {
    auto dst = dc.row(plan.parent[i]);
    const auto src = dfine.row(i);
    for (std::size_t c = 0; c < dfine.channels; ++c) {
      dst[c] += src[c];
    }
  }
  return dc;
}

}  // namespace curbnet::net

#endif  // CURBNET_NET_SPARSE_CONV_HPP
