// Ordered named parameter tensors and the versioned checkpoint format.
#ifndef CURBNET_NET_PARAMS_HPP
#define CURBNET_NET_PARAMS_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "curbnet/core.hpp"

namespace curbnet::net {

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  [[nodiscard]] std::size_t size() const { return value.size(); }
};

/// Parameters in creation order. Layers refer to tensors by slot index.
class ParamStore {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape, std::vector<double> value) {
    std::size_t n = 1;
    for (std::size_t s : shape) {
      n *= s;
    }
    if (value.size() != n) {
      throw ShapeError("parameter " + name + ": value size does not match shape");
    }
    ParamTensor t{std::move(name), std::move(shape), std::move(value), {}};
    t.grad.assign(t.value.size(), 0.0);
    tensors_.push_back(std::move(t));
    return tensors_.size() - 1;
  }

  ParamTensor& operator[](std::size_t i) { return tensors_[i]; }
  const ParamTensor& operator[](std::size_t i) const { return tensors_[i]; }
  [[nodiscard]] std::size_t size() const { return tensors_.size(); }

  /// Tensor called `name`; throws StateError when absent.
  [[nodiscard]] const ParamTensor& by_name(const std::string& name) const {
    for (const auto& t : tensors_) {
      if (t.name == name) {
        return t;
      }
    }
    throw StateError("no parameter named " + name);
  }
  [[nodiscard]] auto begin() { return tensors_.begin(); }
  [[nodiscard]] auto end() { return tensors_.end(); }
  [[nodiscard]] auto begin() const { return tensors_.begin(); }
  [[nodiscard]] auto end() const { return tensors_.end(); }

  [[nodiscard]] std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) {
      n += t.size();
    }
    return n;
  }

  void zero_grad() {
    for (auto& t : tensors_) {
      std::fill(t.grad.begin(), t.grad.end(), 0.0);
    }
  }

  void scale_grad(double s) {
    for (auto& t : tensors_) {
      for (double& g : t.grad) {
        g *= s;
      }
    }
  }

  [[nodiscard]] double grad_norm() const {
    double s = 0.0;
    for (const auto& t : tensors_) {
      for (double g : t.grad) {
        s += g * g;
      }
    }
    return std::sqrt(s);
  }

  /// value -= lr * grad
  void sgd_step(double lr) {
    for (auto& t : tensors_) {
      for (std::size_t k = 0; k < t.value.size(); ++k) {
        t.value[k] -= lr * t.grad[k];
      }
    }
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& t : tensors_) {
      for (double v : t.value) {
        if (!std::isfinite(v)) {
          return false;
        }
      }
    }
    return true;
  }

 private:
  std::vector<ParamTensor> tensors_;
};

/// Uniform(-a, a) with a = sqrt(3 / fan_in), i.e. unit-variance preserving.
inline std::vector<double> init_uniform(std::size_t n, std::size_t fan_in, std::mt19937_64& rng) {
  const double a = std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> v(n);
  for (double& x : v) {
    x = dist(rng);
  }
  return v;
}

// Checkpoint layout (little-endian):
//   magic "CNCK", u32 version, u32 metadata length, metadata bytes,
//   u32 tensor count, then per tensor:
//   u32 name length, name, u32 rank, u64 dims[rank], f64 values[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'C', 'N', 'C', 'K'};

namespace detail {

template <typename T>
void put(std::string& buf, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw MalformedFileError("checkpoint truncated");
    }
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

struct Checkpoint {
  std::string metadata;  ///< key = value lines describing the architecture
  ParamStore params;
};

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::string buf(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(buf, kCheckpointVersion);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.metadata.size()));
  buf += ck.metadata;
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.params.size()));
  for (const ParamTensor& t : ck.params) {
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.name.size()));
    buf += t.name;
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) {
      detail::put<std::uint64_t>(buf, d);
    }
    for (double v : t.value) {
      detail::put<double>(buf, v);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write checkpoint " + path.string());
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint " + path.string());
  }
  detail::Reader r(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  if (r.get_string(4) != std::string(kCheckpointMagic, 4)) {
    throw MalformedFileError(path.string() + ": not a curbnet checkpoint");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw MalformedFileError(path.string() + ": unsupported checkpoint version " +
                             std::to_string(version));
  }
  Checkpoint ck;
  ck.metadata = r.get_string(r.get<std::uint32_t>());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>());
      n *= d;
    }
    std::vector<double> value(n);
    for (double& v : value) {
      v = r.get<double>();
    }
    ck.params.add(std::move(name), std::move(shape), std::move(value));
  }
  if (!r.done()) {
    throw MalformedFileError(path.string() + ": trailing bytes after last tensor");
  }
  return ck;
}

}  // namespace curbnet::net

#endif  // CURBNET_NET_PARAMS_HPP
