// End-to-end commands behind the curbnet binary. Each command reads its inputs,
// writes every output plus a manifest under the output directory and returns
// the process exit code (0 ok, 1 metric floor violated). Usage and I/O problems
// surface as curbnet::Error.
#ifndef CURBNET_PIPELINE_HPP
#define CURBNET_PIPELINE_HPP

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "curbnet/config.hpp"
#include "curbnet/dataset_builder.hpp"
#include "curbnet/eval.hpp"
#include "curbnet/lidar_io.hpp"
#include "curbnet/net/train.hpp"
#include "curbnet/postprocess.hpp"
#include "curbnet/synthetic.hpp"

namespace curbnet::pipeline {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitMetricFloor = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kCheckpointName = "checkpoint.cnck";
inline constexpr const char* kManifestName = "manifest.txt";

/// Frame id -> file for every `*<ext>` in `dir`, ordered by id.
inline std::map<std::string, fs::path> list_frames(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) {
      out.emplace(e.path().stem().string(), e.path());
    }
  }
  return out;
}

/// A single `.bin` file or every `.bin` in a directory.
inline std::map<std::string, fs::path> resolve_frames(const fs::path& p) {
  if (fs::is_regular_file(p)) {
    return {{p.stem().string(), p}};
  }
  return list_frames(p, ".bin");
}

inline PointCloud load_cloud(const std::string& id, const fs::path& bin) {
  PointCloud c = io::read_point_cloud(bin);
  c.frame_id = id;
  return c;
}

/// Cloud plus labels read from `<id>.label` next to the `.bin`.
inline net::LabeledFrame load_labeled(const std::string& id, const fs::path& bin, const io::ClassMap& map) {
  net::LabeledFrame f;
  f.cloud = load_cloud(id, bin);
  fs::path label = bin;
  label.replace_extension(".label");
  f.classes = io::read_labels(label, f.cloud.size(), map).classes();
  return f;
}

/// Records every regular file of `out` (except the manifest) with its size.
inline void write_manifest(const fs::path& out, const std::string& command) {
  std::vector<std::pair<std::string, std::uintmax_t>> files;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.is_regular_file() && e.path().filename() != kManifestName) {
      files.emplace_back(e.path().filename().string(), e.file_size());
    }
  }
  std::sort(files.begin(), files.end());
  std::ofstream m(out / kManifestName, std::ios::trunc);
  if (!m) {
    throw IoError("cannot write manifest in " + out.string());
  }
  m << "command = " << command << '\n';
  for (const auto& [name, size] : files) {
    m << "file = " << name << ' ' << size << '\n';
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) {
    throw IoError("cannot write " + path.string());
  }
  f << text;
  if (!f) {
    throw IoError("short write to " + path.string());
  }
}

inline fs::path prepare_out(const std::string& out, const PipelineConfig& cfg) {
  if (out.empty()) {
    throw ConfigError("an output directory is required (--out or paths.out)");
  }
  fs::create_directories(out);
  write_text(fs::path(out) / "config.txt", cfg.to_text());
  return out;
}

inline net::Network load_network(const fs::path& checkpoint) {
  const auto ck = net::load_checkpoint(checkpoint);
  return net::Network(net::NetConfig::from_metadata(ck.metadata), ck.params);
}

/// Trains on every labelled frame of `data_dir`; writes the checkpoint and loss curve.
inline int cmd_train(const PipelineConfig& cfg, const std::string& data_dir, const std::string& out_dir,
                     std::ostream& log) {
  cfg.validate();
  const auto frames_on_disk = list_frames(data_dir, ".bin");
  if (frames_on_disk.empty()) {
    throw IoError("no .bin frames in " + data_dir);
  }
  std::vector<net::LabeledFrame> frames;
  for (const auto& [id, bin] : frames_on_disk) {
    frames.push_back(load_labeled(id, bin, cfg.class_map()));
  }
  const fs::path out = prepare_out(out_dir, cfg);
  net::Network model(cfg.net);
  const auto result = net::train_toy(model, frames, cfg.train);
  net::save_checkpoint({cfg.net.to_metadata(), result.params}, out / kCheckpointName);
  std::string curve = "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, result.loss_curve[e]);
    curve += buf;
  }
  write_text(out / "loss_curve.csv", curve);
  write_manifest(out, "train");
  log << "trained " << frames.size() << " frames for " << cfg.train.epochs << " epochs, final loss "
      << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << '\n';
  return kExitOk;
}

/// Per-point classes after refinement: predicted curb points removed by the
/// post-processing pass become `other`.
struct RefinedFrame {
  std::vector<SemanticClass> classes;
  post::RefineResult refine;
};

inline RefinedFrame refine_predictions(const PointCloud& cloud, std::vector<SemanticClass> classes,
                                       const post::RefineConfig& cfg) {
  std::vector<std::size_t> curb_idx;
  std::vector<Point> curb_pts;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == SemanticClass::curb) {
      curb_idx.push_back(i);
      curb_pts.push_back(cloud.points[i]);
    }
  }
  RefinedFrame out;
  out.refine = post::refine(curb_pts, cfg);
  for (std::size_t r : out.refine.removed) {
    classes[curb_idx[r]] = SemanticClass::other;
  }
  for (auto& cl : out.refine.clusters) {
    for (auto& i : cl.indices) {
      i = curb_idx[i];
    }
  }
  out.classes = std::move(classes);
  return out;
}

/// Writes `<id>.label` per frame and, with `post`, the refined labels plus
/// `<id>.polylines.csv`.
inline int cmd_infer(const PipelineConfig& cfg, const std::string& checkpoint, const std::string& frames_path,
                     const std::string& out_dir, bool post, std::ostream& log) {
  cfg.validate();
  net::Network model = load_network(checkpoint);
  const auto frames = resolve_frames(frames_path);
  const fs::path out = prepare_out(out_dir, cfg);
  const auto map = cfg.class_map();
  for (const auto& [id, bin] : frames) {
    const PointCloud cloud = load_cloud(id, bin);
    auto classes = net::predict(model, cloud);
    if (post) {
      auto refined = refine_predictions(cloud, std::move(classes), cfg.post);
      classes = std::move(refined.classes);
      io::write_polylines(id, refined.refine.clusters, out / (id + ".polylines.csv"));
    }
    io::write_labels(io::LabelSet::from_classes(classes, map), out / (id + ".label"));
    log << id << ": " << std::count(classes.begin(), classes.end(), SemanticClass::curb) << " curb of "
        << classes.size() << " points\n";
  }
  write_manifest(out, post ? "infer --post" : "infer");
  return kExitOk;
}

/// Refines existing per-point predictions (`<id>.bin` + `<id>.label`).
inline int cmd_post(const PipelineConfig& cfg, const std::string& frames_dir, const std::string& out_dir,
                    std::ostream& log) {
  cfg.validate();
  const auto frames = list_frames(frames_dir, ".bin");
  const fs::path out = prepare_out(out_dir, cfg);
  const auto map = cfg.class_map();
  std::string summary = "frame_id,curb_points,kept,removed,clusters\n";
  for (const auto& [id, bin] : frames) {
    auto f = load_labeled(id, bin, map);
    const auto refined = refine_predictions(f.cloud, f.classes, cfg.post);
    io::write_labels(io::LabelSet::from_classes(refined.classes, map), out / (id + ".label"));
    io::write_polylines(id, refined.refine.clusters, out / (id + ".polylines.csv"));
    summary += id + ',' + std::to_string(refined.refine.kept.size() + refined.refine.removed.size()) + ',' +
               std::to_string(refined.refine.kept.size()) + ',' + std::to_string(refined.refine.removed.size()) +
               ',' + std::to_string(refined.refine.clusters.size()) + '\n';
    log << id << ": removed " << refined.refine.removed.size() << " of "
        << refined.refine.kept.size() + refined.refine.removed.size() << " curb points\n";
  }
  write_text(out / "post_summary.csv", summary);
  write_manifest(out, "post");
  return kExitOk;
}

/// Compares `<id>.label` predictions against `<id>.bin` + `<id>.label` truth.
inline int cmd_eval(const PipelineConfig& cfg, const std::string& pred_dir, const std::string& truth_dir,
                    const std::string& out_dir, std::ostream& log) {
  cfg.validate();
  const auto preds = list_frames(pred_dir, ".label");
  const auto truths = list_frames(truth_dir, ".bin");
  std::string missing;
  for (const auto& [id, p] : preds) {
    if (!truths.contains(id)) {
      missing += " " + id + " (no truth)";
    }
  }
  for (const auto& [id, p] : truths) {
    if (!preds.contains(id)) {
      missing += " " + id + " (no prediction)";
    }
  }
  if (!missing.empty()) {
    throw AlignmentError("eval: frame sets differ:" + missing);
  }
  if (truths.empty()) {
    throw IoError("eval: no frames in " + truth_dir);
  }
  const fs::path out = prepare_out(out_dir, cfg);
  const auto map = cfg.class_map();
  std::vector<eval::EvalReport> reports;
  for (const auto& [id, bin] : truths) {
    const auto truth = load_labeled(id, bin, map);
    const auto pred = io::read_labels(preds.at(id), truth.cloud.size(), map).classes();
    reports.push_back(eval::evaluate_frame(truth.cloud, pred, truth.classes, cfg.tol));
  }
  const auto total = eval::aggregate(reports, cfg.tol);
  write_text(out / "report.csv", eval::report_csv(reports, total));
  const std::string table = eval::report_table(total);
  write_text(out / "report.txt", table);
  write_manifest(out, "eval");
  log << table;
  const auto violated = cfg.floor.violations(total.strict);
  for (const auto& v : violated) {
    log << "metric floor violated: " << v << '\n';
  }
  return violated.empty() ? kExitOk : kExitMetricFloor;
}

/// Proposes curb labels for `<id>.bin` + `<id>.label` frames carrying road labels.
inline int cmd_build_labels(const PipelineConfig& cfg, const std::string& data_dir, const std::string& out_dir,
                            std::ostream& log) {
  cfg.validate();
  const auto frames = list_frames(data_dir, ".bin");
  const fs::path out = prepare_out(out_dir, cfg);
  const auto map = cfg.class_map();
  for (const auto& [id, bin] : frames) {
    const PointCloud cloud = load_cloud(id, bin);
    fs::path label = bin;
    label.replace_extension(".label");
    io::LabelSet labels = io::read_labels(label, cloud.size(), map);
    dataset::Proposal prop;
    try {
      const auto ground = dataset::fit_ground_plane(cloud);
      prop = dataset::propose_curb_labels(cloud, labels, ground.plane, cfg.labels);
    } catch (const InsufficientGroundError& e) {
      prop.labels = labels;
      prop.warning = e.what();
    }
    if (prop.warning) {
      log << "warning: " << id << ": " << *prop.warning << '\n';
    }
    io::write_labels(prop.labels, out / (id + ".label"));
    dataset::write_review_csv(cloud, prop, out / (id + ".review.csv"));
    log << id << ": " << prop.indices.size() << " curb proposals\n";
  }
  write_manifest(out, "build-labels");
  return kExitOk;
}

/// Times inference and post-processing per frame and prints the FPS/ms table.
inline int cmd_bench(const PipelineConfig& cfg, const std::string& checkpoint, const std::string& frames_path,
                     const std::string& out_dir, std::ostream& log) {
  cfg.validate();
  net::Network model = load_network(checkpoint);
  const auto listed = resolve_frames(frames_path);
  if (listed.size() < eval::kMinTimedFrames) {
    throw ConfigError("bench: need at least " + std::to_string(eval::kMinTimedFrames) + " frames, found " +
                      std::to_string(listed.size()));
  }
  std::vector<PointCloud> clouds;
  for (const auto& [id, bin] : listed) {
    clouds.push_back(load_cloud(id, bin));
  }
  const fs::path out = prepare_out(out_dir, cfg);
  std::vector<std::vector<SemanticClass>> preds(clouds.size());
  const auto infer = eval::measure_throughput(clouds.size(), [&](std::size_t i) {
    preds[i] = net::predict(model, clouds[i]);
  });
  const auto postp = eval::measure_throughput(clouds.size(), [&](std::size_t i) {
    (void)refine_predictions(clouds[i], preds[i], cfg.post);
  });
  const std::string table = eval::throughput_table(infer, postp);
  write_text(out / "bench.txt", table);
  write_manifest(out, "bench");
  log << table;
  return kExitOk;
}

/// Writes `count` labelled synthetic road frames for demos and smoke runs.
inline int cmd_synth(const PipelineConfig& cfg, std::size_t count, const std::string& out_dir, std::ostream& log) {
  cfg.validate();
  const fs::path out = prepare_out(out_dir, cfg);
  const auto map = cfg.class_map();
  for (std::size_t k = 0; k < count; ++k) {
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", k);
    const auto scene = synthetic::road_scene(cfg.seed * 1000003ULL + k, {}, id);
    io::write_point_cloud(scene.cloud, out / (std::string(id) + ".bin"));
    io::write_labels(io::LabelSet::from_classes(scene.classes, map), out / (std::string(id) + ".label"));
  }
  write_manifest(out, "synth");
  log << "wrote " << count << " synthetic frames to " << out.string() << '\n';
  return kExitOk;
}

}  // namespace curbnet::pipeline

#endif  // CURBNET_PIPELINE_HPP
