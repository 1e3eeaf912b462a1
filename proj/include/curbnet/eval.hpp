// Point-level curb metrics (strict and tolerance-band) and stage timing.
#ifndef CURBNET_EVAL_HPP
#define CURBNET_EVAL_HPP

#include <chrono>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "curbnet/core.hpp"
#include "curbnet/kdtree.hpp"

namespace curbnet::eval {

/// TP/FP/FN tallies with the derived ratios. Empty denominators give 1.0.
struct Metrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  [[nodiscard]] double precision() const {
    return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  [[nodiscard]] double recall() const {
    return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  [[nodiscard]] double f1() const {
    const double p = precision();
    const double r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  Metrics& operator+=(const Metrics& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct ToleranceSpec {
  std::vector<double> taus{0.05, 0.10, 0.15, 0.20};

  void validate() const {
    for (std::size_t i = 0; i < taus.size(); ++i) {
      if (!(taus[i] > 0.0) || (i > 0 && !(taus[i] > taus[i - 1]))) {
        throw ConfigError("tolerances must be positive and strictly increasing");
      }
    }
  }
};

struct EvalReport {
  std::string frame_id;  ///< empty for an aggregate
  Metrics strict;
  std::vector<double> taus;
  std::vector<Metrics> tolerance;  ///< parallel to taus

  EvalReport& operator+=(const EvalReport& o) {
    if (o.taus != taus) {
      throw ShapeError("eval: cannot merge reports with different tolerance sets");
    }
    strict += o.strict;
    for (std::size_t i = 0; i < tolerance.size(); ++i) {
      tolerance[i] += o.tolerance[i];
    }
    return *this;
  }
};

/// Exact per-point tallies for the curb class.
inline Metrics strict_metrics(std::span<const SemanticClass> pred, std::span<const SemanticClass> truth) {
  if (pred.size() != truth.size()) {
    throw AlignmentError("strict_metrics: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " truth labels");
  }
  Metrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == SemanticClass::curb;
    const bool t = truth[i] == SemanticClass::curb;
    m.tp += static_cast<std::size_t>(p && t);
    m.fp += static_cast<std::size_t>(p && !t);
    m.fn += static_cast<std::size_t>(!p && t);
  }
  return m;
}

/// Many-to-one matching in the ground plane: a prediction is TP when any true
/// point lies within tau, and a true point is FN when no prediction does.
inline Metrics tolerance_metrics(std::span<const Point2> pred, std::span<const Point2> truth, double tau) {
  Metrics m;
  const KdTree2 truth_tree(truth);
  for (const auto& p : pred) {
    (truth_tree.any_within(p, tau) ? m.tp : m.fp) += 1;
  }
  const KdTree2 pred_tree(pred);
  for (const auto& t : truth) {
    m.fn += static_cast<std::size_t>(!pred_tree.any_within(t, tau));
  }
  return m;
}

inline std::vector<Metrics> tolerance_metrics(std::span<const Point2> pred, std::span<const Point2> truth,
                                              const ToleranceSpec& spec) {
  spec.validate();
  std::vector<Metrics> out;
  out.reserve(spec.taus.size());
  for (double tau : spec.taus) {
    out.push_back(tolerance_metrics(pred, truth, tau));
  }
  return out;
}

/// Full report for one frame given per-point predictions and truth.
inline EvalReport evaluate_frame(const PointCloud& cloud, std::span<const SemanticClass> pred,
                                 std::span<const SemanticClass> truth, const ToleranceSpec& spec) {
  EvalReport r;
  r.frame_id = cloud.frame_id;
  r.strict = strict_metrics(pred, truth);
  if (pred.size() != cloud.size()) {
    throw AlignmentError("evaluate_frame: labels do not match the cloud of " + cloud.frame_id);
  }
  std::vector<Point2> p;
  std::vector<Point2> t;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (pred[i] == SemanticClass::curb) {
      p.push_back(ground_projection(cloud.points[i]));
    }
    if (truth[i] == SemanticClass::curb) {
      t.push_back(ground_projection(cloud.points[i]));
    }
  }
  r.taus = spec.taus;
  r.tolerance = tolerance_metrics(p, t, spec);
  return r;
}

/// Sums the tallies of all frames (micro average).
inline EvalReport aggregate(std::span<const EvalReport> frames, const ToleranceSpec& spec) {
  EvalReport total;
  total.taus = spec.taus;
  total.tolerance.assign(spec.taus.size(), Metrics{});
  for (const auto& f : frames) {
    total += f;
  }
  return total;
}

/// Optional lower bounds checked against the aggregate strict metrics.
struct MetricFloor {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  /// Human-readable list of violated floors, empty when all hold.
  [[nodiscard]] std::vector<std::string> violations(const Metrics& m) const {
    std::vector<std::string> out;
    auto check = [&](const char* name, const std::optional<double>& floor, double v) {
      if (floor && v < *floor) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s %.6f below floor %.6f", name, v, *floor);
        out.emplace_back(buf);
      }
    };
    check("precision", precision, m.precision());
    check("recall", recall, m.recall());
    check("f1", f1, m.f1());
    return out;
  }
};

namespace detail {
inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline void csv_row(std::ostringstream& os, const std::string& scope, const std::string& frame,
                    const std::string& tau, const Metrics& m) {
  os << scope << ',' << frame << ',' << tau << ',' << m.tp << ',' << m.fp << ',' << m.fn << ','
     << fmt("%.6f", m.precision()) << ',' << fmt("%.6f", m.recall()) << ',' << fmt("%.6f", m.f1())
     << '\n';
}
}  // namespace detail

inline constexpr const char* kReportHeader = "scope,frame_id,tau,tp,fp,fn,precision,recall,f1";

/// CSV with one row per (frame, tolerance) followed by the aggregate rows.
/// tau is "strict" for exact point labels.
inline std::string report_csv(std::span<const EvalReport> frames, const EvalReport& total) {
  std::ostringstream os;
  os << kReportHeader << '\n';
  auto emit = [&](const std::string& scope, const EvalReport& r) {
    detail::csv_row(os, scope, r.frame_id, "strict", r.strict);
    for (std::size_t i = 0; i < r.taus.size(); ++i) {
      detail::csv_row(os, scope, r.frame_id, detail::fmt("%.2f", r.taus[i]), r.tolerance[i]);
    }
  };
  for (const auto& f : frames) {
    emit("frame", f);
  }
  emit("total", total);
  return os.str();
}

/// Aligned text table of the aggregate report.
inline std::string report_table(const EvalReport& total) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %9s %9s %9s %8s %8s %8s\n", "tolerance", "precision", "recall",
                "f1", "tp", "fp", "fn");
  os << line;
  auto row = [&](const std::string& name, const Metrics& m) {
    std::snprintf(line, sizeof line, "%-10s %9.4f %9.4f %9.4f %8zu %8zu %8zu\n", name.c_str(),
                  m.precision(), m.recall(), m.f1(), m.tp, m.fp, m.fn);
    os << line;
  };
  row("strict", total.strict);
  for (std::size_t i = 0; i < total.taus.size(); ++i) {
    row(detail::fmt("%.2f m", total.taus[i]), total.tolerance[i]);
  }
  return os.str();
}

struct Throughput {
  double ms_per_frame = 0.0;
  double fps = 0.0;
  std::size_t frames = 0;
};

inline constexpr std::size_t kMinTimedFrames = 10;
inline constexpr std::size_t kWarmupFrames = 3;

/// Calls run(i) for i in [0, frames): the first kWarmupFrames calls are untimed
/// warm-up on frames 0, 1, 2 (cycled), then every frame is timed once.
template <class Run>
Throughput measure_throughput(std::size_t frames, Run&& run) {
  if (frames < kMinTimedFrames) {
    throw ConfigError("measure_throughput: need at least " + std::to_string(kMinTimedFrames) +
                      " frames, got " + std::to_string(frames));
  }
  for (std::size_t w = 0; w < kWarmupFrames; ++w) {
    run(w % frames);
  }
  using clock = std::chrono::steady_clock;
  double total_ms = 0.0;
  for (std::size_t i = 0; i < frames; ++i) {
    const auto t0 = clock::now();
    run(i);
    total_ms += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  }
  Throughput t;
  t.frames = frames;
  t.ms_per_frame = total_ms / static_cast<double>(frames);
  t.fps = t.ms_per_frame > 0.0 ? 1000.0 / t.ms_per_frame : 0.0;
  return t;
}

/// Two-row stage timing table in "FPS/ms" form.
inline std::string throughput_table(const Throughput& inference, const Throughput& postprocess) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-16s %s\n", "Stage", "FPS/ms");
  os << line;
  std::snprintf(line, sizeof line, "%-16s %.6g/%.6g\n", "Model Inference", inference.fps,
                inference.ms_per_frame);
  os << line;
  std::snprintf(line, sizeof line, "%-16s %.6g/%.6g\n", "Post-Processing", postprocess.fps,
                postprocess.ms_per_frame);
  os << line;
  return os.str();
}

}  // namespace curbnet::eval

#endif  // CURBNET_EVAL_HPP
