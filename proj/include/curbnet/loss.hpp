// Class-imbalance aware segmentation losses: cross-entropy, focal, adaptive
// cross-entropy (ACE) and Lovasz-Softmax, plus their weighted combination.
#ifndef CURBNET_LOSS_HPP
#define CURBNET_LOSS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "curbnet/core.hpp"

namespace curbnet::loss {

inline constexpr double kProbFloor = 1e-12;

inline double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0); }

/// Per-class point counts over a training split.
struct ClassHistogram {
  std::array<std::size_t, kNumClasses> counts{};

  [[nodiscard]] std::size_t total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  }

  /// eta_i = N_i / N (0 for an empty histogram).
  [[nodiscard]] double frequency(std::size_t cls) const {
    const std::size_t n = total();
    return n == 0 ? 0.0 : static_cast<double>(counts[cls]) / static_cast<double>(n);
  }

  void add(SemanticClass c, std::size_t n = 1) { counts[class_index(c)] += n; }

  static ClassHistogram of(std::span<const SemanticClass> labels) {
    ClassHistogram h;
    for (SemanticClass c : labels) {
      h.add(c);
    }
    return h;
  }
};

struct LossConfig {
  double alpha_t = 1.0;
  double gamma_a = 2.0;
  double scale_s = 2.0;    ///< upper limit of the class-specific focusing term
  double delta_log = 1.02;  ///< additive constant inside the class-weight logarithm
  double lambda_iou = 1.0;

  void validate() const {
    if (!(gamma_a >= 0.0) || !(scale_s >= 0.0) || !(lambda_iou >= 0.0) ||
        !std::isfinite(alpha_t) || !std::isfinite(delta_log)) {
      throw ConfigError("loss config: gamma_a, s and lambda_iou must be >= 0");
    }
  }
};

/// Resolved per-class focusing exponent gamma^i and weight omega^i.
struct ClassWeights {
  std::array<double, kNumClasses> gamma{};
  std::array<double, kNumClasses> omega{};

  static ClassWeights uniform(double gamma, double omega = 1.0) {
    ClassWeights w;
    w.gamma.fill(gamma);
    w.omega.fill(omega);
    return w;
  }
};

/// gamma^i = gamma_a + s (1 - eta^i);  omega^i = 1 / ln(delta + eta^i).
inline ClassWeights class_weights(const ClassHistogram& hist, const LossConfig& cfg) {
  cfg.validate();
  ClassWeights w;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double eta = hist.frequency(c);
    const double arg = cfg.delta_log + eta;
    const double lg = arg > 0.0 ? std::log(arg) : -1.0;
    if (!(arg > 0.0) || !(lg > 1e-12)) {
      throw ConfigError("loss config: delta_log + eta must exceed 1 so that class weight for " +
                        std::string(kClassNames[c]) + " stays positive");
    }
    w.gamma[c] = cfg.gamma_a + cfg.scale_s * (1.0 - eta);
    w.omega[c] = 1.0 / lg;
  }
  return w;
}

inline double ce_loss(double p_t) { return -std::log(clamp_prob(p_t)); }

inline double focal_loss(double p_t, double alpha_t, double gamma) {
  const double p = clamp_prob(p_t);
  return -alpha_t * std::pow(1.0 - p, gamma) * std::log(p);
}

/// d focal / d p_t.
inline double focal_loss_dp(double p_t, double alpha_t, double gamma) {
  const double p = clamp_prob(p_t);
  const double q = 1.0 - p;
  const double lg = std::log(p);
  double d = -std::pow(q, gamma) / p;
  if (gamma != 0.0 && q > 0.0) {
    d += gamma * std::pow(q, gamma - 1.0) * lg;
  }
  return alpha_t * d;
}

/// Mean ACE loss over points; `classes[i]` is the true class of point i with
/// predicted probability `p_t[i]`.
inline double ace_loss(std::span<const double> p_t, std::span<const SemanticClass> classes,
                       const ClassWeights& w, double alpha_t) {
  if (p_t.size() != classes.size()) {
    throw ShapeError("ace_loss: probability and label counts differ");
  }
  if (p_t.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p_t.size(); ++i) {
    const std::size_t c = class_index(classes[i]);
    sum += w.omega[c] * focal_loss(p_t[i], alpha_t, w.gamma[c]);
  }
  return sum / static_cast<double>(p_t.size());
}

inline double ace_loss(std::span<const double> p_t, std::span<const SemanticClass> classes,
                       const ClassHistogram& hist, const LossConfig& cfg) {
  return ace_loss(p_t, classes, class_weights(hist, cfg), cfg.alpha_t);
}

/// Row-major n x kNumClasses matrix.
using ClassMatrix = std::vector<double>;

inline ClassMatrix softmax_rows(std::span<const double> logits) {
  ClassMatrix p(logits.size());
  for (std::size_t r = 0; r * kNumClasses < logits.size(); ++r) {
    const double* z = logits.data() + r * kNumClasses;
    const double m = *std::max_element(z, z + kNumClasses);
    double s = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      p[r * kNumClasses + c] = std::exp(z[c] - m);
      s += p[r * kNumClasses + c];
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      p[r * kNumClasses + c] /= s;
    }
  }
  return p;
}

struct LovaszResult {
  double loss = 0.0;
  std::array<double, kNumClasses> per_class{};
  std::array<bool, kNumClasses> present{};
  ClassMatrix grad;  ///< d loss / d probabilities
};

namespace detail {

/// Gradient of the Lovasz extension of the Jaccard loss at the sorted errors.
inline std::vector<double> lovasz_grad(std::span<const char> fg_sorted) {
  const std::size_t n = fg_sorted.size();
  double gts = 0.0;
  for (char f : fg_sorted) {
    gts += f;
  }
  std::vector<double> jaccard(n);
  double cum_fg = 0.0;
  double cum_bg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum_fg += fg_sorted[i];
    cum_bg += 1 - fg_sorted[i];
    const double inter = gts - cum_fg;
    const double uni = gts + cum_bg;
    jaccard[i] = 1.0 - inter / uni;
  }
  for (std::size_t i = n; i-- > 1;) {
    jaccard[i] -= jaccard[i - 1];
  }
  return jaccard;
}

}  // namespace detail

/// Lovasz-Softmax averaged over the classes present in `labels`.
/// `probs` is n x kNumClasses, rows summing to one.
inline LovaszResult lovasz_softmax(std::span<const double> probs,
                                   std::span<const SemanticClass> labels) {
  const std::size_t n = labels.size();
  if (probs.size() != n * kNumClasses) {
    throw ShapeError("lovasz_softmax: probability matrix does not match label count");
  }
  LovaszResult res;
  res.grad.assign(probs.size(), 0.0);
  if (n == 0) {
    return res;
  }
  std::size_t n_present = 0;
  std::vector<double> errors(n);
  std::vector<std::size_t> order(n);
  std::vector<char> fg_sorted(n);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      const bool fg = class_index(labels[i]) == c;
      any = any || fg;
      errors[i] = std::abs((fg ? 1.0 : 0.0) - probs[i * kNumClasses + c]);
    }
    if (!any) {
      continue;
    }
    res.present[c] = true;
    ++n_present;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });
    for (std::size_t k = 0; k < n; ++k) {
      fg_sorted[k] = class_index(labels[order[k]]) == c ? 1 : 0;
    }
    const auto g = detail::lovasz_grad(fg_sorted);
    double term = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      term += errors[i] * g[k];
      // error = 1 - p for foreground points, p otherwise
      res.grad[i * kNumClasses + c] = fg_sorted[k] ? -g[k] : g[k];
    }
    res.per_class[c] = term;
    res.loss += term;
  }
  const double inv = 1.0 / static_cast<double>(n_present);
  res.loss *= inv;
  for (double& g : res.grad) {
    g *= inv;
  }
  return res;
}

struct LossGroupResult {
  double total = 0.0;
  double ace = 0.0;
  double iou = 0.0;
  ClassMatrix grad;  ///< d total / d logits, n x kNumClasses
};

/// total = ACE + lambda_iou * Lovasz-Softmax on softmax(logits).
inline LossGroupResult loss_group(std::span<const double> logits,
                                  std::span<const SemanticClass> labels,
                                  const ClassWeights& weights, const LossConfig& cfg) {
  const std::size_t n = labels.size();
  if (logits.size() != n * kNumClasses) {
    throw ShapeError("loss_group: logits do not match label count");
  }
  LossGroupResult out;
  out.grad.assign(logits.size(), 0.0);
  if (n == 0) {
    return out;
  }
  const ClassMatrix probs = softmax_rows(logits);

  // d loss / d probabilities, then chained through the softmax Jacobian.
  ClassMatrix dprob(probs.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = class_index(labels[i]);
    const double p = probs[i * kNumClasses + c];
    out.ace += weights.omega[c] * focal_loss(p, cfg.alpha_t, weights.gamma[c]);
    if (p > kProbFloor) {
      dprob[i * kNumClasses + c] =
          inv_n * weights.omega[c] * focal_loss_dp(p, cfg.alpha_t, weights.gamma[c]);
    }
  }
  out.ace *= inv_n;

  if (cfg.lambda_iou != 0.0) {
    const LovaszResult lv = lovasz_softmax(probs, labels);
    out.iou = lv.loss;
    for (std::size_t k = 0; k < dprob.size(); ++k) {
      dprob[k] += cfg.lambda_iou * lv.grad[k];
    }
  }
  out.total = out.ace + cfg.lambda_iou * out.iou;

  for (std::size_t i = 0; i < n; ++i) {
    const double* p = probs.data() + i * kNumClasses;
    const double* dp = dprob.data() + i * kNumClasses;
    double dot = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      dot += p[c] * dp[c];
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      out.grad[i * kNumClasses + c] = p[c] * (dp[c] - dot);
    }
  }
  return out;
}

inline LossGroupResult loss_group(std::span<const double> logits,
                                  std::span<const SemanticClass> labels,
                                  const ClassHistogram& hist, const LossConfig& cfg) {
  return loss_group(logits, labels, class_weights(hist, cfg), cfg);
}

}  // namespace curbnet::loss

#endif  // CURBNET_LOSS_HPP
