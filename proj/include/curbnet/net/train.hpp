// Mini-batch SGD on the loss group, plus inference helpers.
#ifndef CURBNET_NET_TRAIN_HPP
#define CURBNET_NET_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "curbnet/lidar_io.hpp"
#include "curbnet/loss.hpp"
#include "curbnet/net/network.hpp"
#include "curbnet/voxel.hpp"

namespace curbnet::net {

struct LabeledFrame {
  PointCloud cloud;
  std::vector<SemanticClass> classes;  ///< one per point
};

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 0.001;
  std::size_t batch_size = 6;
  std::uint64_t seed = 7;
  double max_grad_norm = 5.0;  ///< global L2 clip, 0 disables
  loss::LossConfig loss;
};

struct TrainResult {
  ParamStore params;
  std::vector<double> loss_curve;  ///< mean frame loss per epoch
};

/// Voxelized frame with its cached hierarchy and per-cell targets.
struct PreparedFrame {
  voxel::SparseVoxelTensor voxels;
  std::shared_ptr<const Hierarchy> hierarchy;
  BlockTensor input;
  std::vector<SemanticClass> cell_labels;  ///< in level-0 row order
};

inline PreparedFrame prepare_frame(const Network& net, const LabeledFrame& frame) {
  PreparedFrame p;
  p.voxels = voxel::voxelize(frame.cloud, net.config().grid);
  p.hierarchy = net.prepare(p.voxels);
  p.input = net.encode_input(*p.hierarchy, p.voxels);
  const auto by_cell = voxel::cell_labels(p.voxels, frame.classes);
  p.cell_labels.assign(p.hierarchy->level[0]->size(), SemanticClass::other);
  for (std::size_t s = 0; s < by_cell.size(); ++s) {
    const auto& c = p.voxels.cells[s];
    p.cell_labels[*p.hierarchy->level[0]->find({c.h, c.w, c.d})] = by_cell[s];
  }
  return p;
}

/// One forward/backward pass; returns the loss and accumulates gradients.
inline loss::LossGroupResult accumulate_frame(Network& net, const PreparedFrame& f,
                                              const loss::ClassWeights& weights,
                                              const loss::LossConfig& cfg) {
  const BlockTensor logits = net.forward(f.hierarchy, f.input);
  loss::LossGroupResult r = loss::loss_group(logits.data, f.cell_labels, weights, cfg);
  BlockTensor dlogits = logits.zeros_like();
  dlogits.data = r.grad;
  net.backward(dlogits);
  return r;
}

/// Trains `net` in place and returns the final parameters with the per-epoch
/// loss curve. Deterministic for a fixed seed.
inline TrainResult train_toy(Network& net, const std::vector<LabeledFrame>& frames,
                             const TrainConfig& cfg) {
  if (frames.empty()) {
    throw ConfigError("train: at least one frame is required");
  }
  if (cfg.batch_size == 0) {
    throw ConfigError("train: batch size must be >= 1");
  }
  cfg.loss.validate();

  loss::ClassHistogram hist;
  std::vector<PreparedFrame> prepared;
  prepared.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.classes.size() != f.cloud.size()) {
      throw AlignmentError("train: frame " + f.cloud.frame_id + " has mismatched labels");
    }
    for (SemanticClass c : f.classes) {
      hist.add(c);
    }
    prepared.push_back(prepare_frame(net, f));
  }
  const loss::ClassWeights weights = loss::class_weights(hist, cfg.loss);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      net.params().zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const auto r = accumulate_frame(net, prepared[order[k]], weights, cfg.loss);
        if (!std::isfinite(r.total)) {
          throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                " on frame " + frames[order[k]].cloud.frame_id);
        }
        epoch_loss += r.total;
      }
      net.params().scale_grad(1.0 / static_cast<double>(stop - start));
      if (cfg.max_grad_norm > 0.0) {
        const double norm = net.params().grad_norm();
        if (norm > cfg.max_grad_norm) {
          net.params().scale_grad(cfg.max_grad_norm / norm);
        }
      }
      net.params().sgd_step(cfg.learning_rate);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(prepared.size()));
  }
  net.clear_trace();
  result.params = net.params();
  return result;
}

/// Per-point class prediction (argmax of devoxelized softmax scores).
inline std::vector<SemanticClass> predict(Network& net, const PointCloud& cloud) {
  std::vector<SemanticClass> out(cloud.size(), SemanticClass::other);
  const auto vox = voxel::voxelize(cloud, net.config().grid);
  if (vox.occupied() == 0) {
    return out;
  }
  const BlockTensor logits = net.forward(vox);
  net.clear_trace();
  auto scores = to_voxel_scores(vox, logits);
  const auto probs = loss::softmax_rows(scores.features);
  scores.features = probs;
  const auto per_point = voxel::devoxelize(scores, vox.point_index);
  for (std::size_t i = 0; i < per_point.size(); ++i) {
    const auto& row = per_point[i];
    out[i] = static_cast<SemanticClass>(std::distance(row.begin(), std::max_element(row.begin(), row.end())));
  }
  return out;
}

}  // namespace curbnet::net

#endif  // CURBNET_NET_TRAIN_HPP
