// curbnet: train, infer, post-process, evaluate, build labels and benchmark.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "curbnet/config.hpp"
#include "curbnet/pipeline.hpp"

namespace {

using curbnet::PipelineConfig;
namespace pl = curbnet::pipeline;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "key = value configuration file");
  cmd->add_option("--set", c.overrides, "override a configuration key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "random seed for initialisation and shuffling");
  cmd->add_option("-o,--out", c.out, "output directory");
}

/// File values first, then --set overrides, then dedicated flags.
PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg;
  if (!c.config_path.empty()) {
    cfg = curbnet::load_config(c.config_path);
  }
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw curbnet::ConfigError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(curbnet::config_detail::trim(std::string_view(kv).substr(0, eq)),
            curbnet::config_detail::trim(std::string_view(kv).substr(eq + 1)));
  }
  if (c.seed) {
    cfg.set("seed", std::to_string(*c.seed));
  }
  cfg.validate();
  return cfg;
}

std::string pick(const std::string& flag, const std::string& fallback, const char* what) {
  if (!flag.empty()) {
    return flag;
  }
  if (!fallback.empty()) {
    return fallback;
  }
  throw curbnet::ConfigError(std::string("missing ") + what);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curb detection pipeline: sparse voxel segmentation with curve-fitting refinement"};
  app.require_subcommand(1);

  Common common;
  std::string data;
  std::string checkpoint;
  std::string frames;
  std::string pred;
  std::string truth;
  bool post = false;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::vector<double> taus;
  std::optional<double> min_f1;
  std::size_t count = 5;

  auto* train = app.add_subcommand("train", "train the segmentation network");
  add_common(train, common);
  train->add_option("--data", data, "directory of <id>.bin + <id>.label frames");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--lr", lr, "learning rate");
  train->add_option("--batch-size", batch, "frames per SGD step");

  auto* infer = app.add_subcommand("infer", "predict per-point labels");
  add_common(infer, common);
  infer->add_option("--checkpoint", checkpoint, "trained checkpoint");
  infer->add_option("--frames", frames, "a .bin file or a directory of them")->required();
  infer->add_flag("--post", post, "refine curb predictions and write polylines");

  auto* postc = app.add_subcommand("post", "refine existing curb predictions");
  add_common(postc, common);
  postc->add_option("--frames", frames, "directory of <id>.bin + predicted <id>.label")->required();

  auto* evalc = app.add_subcommand("eval", "score predictions against ground truth");
  add_common(evalc, common);
  evalc->add_option("--pred", pred, "directory of predicted <id>.label")->required();
  evalc->add_option("--truth", truth, "directory of <id>.bin + <id>.label ground truth")->required();
  evalc->add_option("--taus", taus, "tolerances in metres, ascending");
  evalc->add_option("--min-f1", min_f1, "fail with exit code 1 when strict F1 is lower");

  auto* build = app.add_subcommand("build-labels", "propose curb labels from road labels");
  add_common(build, common);
  build->add_option("--data", data, "directory of <id>.bin + <id>.label frames");

  auto* bench = app.add_subcommand("bench", "time inference and post-processing");
  add_common(bench, common);
  bench->add_option("--checkpoint", checkpoint, "trained checkpoint");
  bench->add_option("--frames", frames, "directory of at least 10 .bin frames")->required();

  auto* synth = app.add_subcommand("synth", "write labelled synthetic road frames");
  add_common(synth, common);
  synth->add_option("--count", count, "number of frames");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? pl::kExitOk : pl::kExitUsage;
  }

  try {
    PipelineConfig cfg = resolve(common);
    const std::string out = pick(common.out, cfg.out_dir, "output directory (--out)");
    if (train->parsed()) {
      if (epochs) {
        cfg.train.epochs = *epochs;
      }
      if (lr) {
        cfg.train.learning_rate = *lr;
      }
      if (batch) {
        cfg.train.batch_size = *batch;
      }
      return pl::cmd_train(cfg, pick(data, cfg.data_dir, "data directory (--data)"), out, std::cout);
    }
    if (infer->parsed()) {
      return pl::cmd_infer(cfg, pick(checkpoint, cfg.checkpoint, "checkpoint (--checkpoint)"), frames, out, post,
                           std::cout);
    }
    if (postc->parsed()) {
      return pl::cmd_post(cfg, frames, out, std::cout);
    }
    if (evalc->parsed()) {
      if (!taus.empty()) {
        cfg.tol.taus = taus;
      }
      if (min_f1) {
        cfg.floor.f1 = *min_f1;
      }
      return pl::cmd_eval(cfg, pred, truth, out, std::cout);
    }
    if (build->parsed()) {
      return pl::cmd_build_labels(cfg, pick(data, cfg.data_dir, "data directory (--data)"), out, std::cout);
    }
    if (bench->parsed()) {
      return pl::cmd_bench(cfg, pick(checkpoint, cfg.checkpoint, "checkpoint (--checkpoint)"), frames, out,
                           std::cout);
    }
    if (synth->parsed()) {
      return pl::cmd_synth(cfg, count, out, std::cout);
    }
  } catch (const curbnet::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pl::kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pl::kExitUsage;
  }
  return pl::kExitUsage;
}
