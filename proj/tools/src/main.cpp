#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "maskdet/cli/commands.hpp"
#include "maskdet/cli/manifest.hpp"
#include "maskdet/core/config.hpp"
#include "maskdet/core/error.hpp"

namespace {

using namespace maskdet;

/// Flag names map to environment variables MASKDET_<NAME> with '-' -> '_'.
std::string env_name(const std::string& flag) {
  std::string out = "MASKDET_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

template <typename T>
CLI::Option* opt(CLI::App* app, const std::string& flag, T& target, const std::string& help) {
  return app->add_option("--" + flag, target, help)->envname(env_name(flag))->capture_default_str();
}

CLI::Option* flag(CLI::App* app, const std::string& name, bool& target, const std::string& help) {
  return app->add_flag("--" + name, target, help)->envname(env_name(name));
}

std::string config_keys_footer() {
  std::string out = "\nConfiguration keys (defaults):\n";
  for (const auto& d : config_field_docs()) {
    out += "  " + d.key + " = " + d.default_value + "    " + d.description + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular 3D detection with depth-aware query masking and completion"};
  app.set_version_flag("--version", cli::version_string() + " (" + cli::git_revision() + ")");
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->envname("MASKDET_LOG_LEVEL")
      ->capture_default_str();

  cli::GenerateCommand gen;
  auto* g = app.add_subcommand("generate", "render a synthetic dataset in KITTI layout");
  opt(g, "config", gen.recipe, "scene recipe file (key = value)");
  opt(g, "seed", gen.seed, "recipe seed override");
  opt(g, "output", gen.output, "dataset directory")->required();
  opt(g, "count", gen.count, "number of scenes");
  opt(g, "val-count", gen.val_count, "trailing scenes placed in the val split");
  opt(g, "workers", gen.workers, "generation threads");

  cli::TrainCommand tr;
  auto* t = app.add_subcommand("train", "train a detector");
  opt(t, "config", tr.config, "configuration file (key = value)");
  opt(t, "seed", tr.seed, "seed override");
  opt(t, "output", tr.output, "run directory")->required();
  opt(t, "dataset", tr.dataset, "dataset root in KITTI layout")->required();
  opt(t, "set", tr.overrides, "configuration override key=value (repeatable)")->delimiter(';');
  flag(t, "no-grouping", tr.no_grouping, "disable occluded/non-occluded query grouping");
  flag(t, "no-masking", tr.no_masking, "disable query masking");
  flag(t, "no-completion", tr.no_completion, "disable the completion network");
  opt(t, "mask-strategy", tr.mask_strategy, "depth-aware, random or image")
      ->check(CLI::IsMember({"depth-aware", "random", "image"}));
  opt(t, "train-split", tr.train_split, "training split name");
  opt(t, "val-split", tr.val_split, "validation split name (empty: none)");
  flag(t, "resume", tr.resume, "continue from <output>/last.ckpt");
  opt(t, "workers", tr.workers, "data loading threads");
  t->footer(config_keys_footer());

  cli::EvalCommand ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint or a prediction dump");
  opt(e, "config", ev.config, "evaluation overrides file (key = value)");
  opt(e, "seed", ev.seed, "seed override");
  opt(e, "output", ev.output, "report directory")->required();
  opt(e, "checkpoint", ev.checkpoint, "checkpoint file");
  opt(e, "dataset", ev.dataset, "dataset root in KITTI layout")->required();
  opt(e, "split", ev.split, "split to evaluate");
  opt(e, "set", ev.overrides, "evaluation override key=value (repeatable)")->delimiter(';');
  opt(e, "predictions", ev.predictions, "directory of <id>.txt prediction files to score instead of a model");
  opt(e, "compare", ev.compare, "report.json of another run");
  opt(e, "workers", ev.workers, "data loading threads");
  e->footer(config_keys_footer());

  cli::VisualizeCommand vi;
  std::string ids;
  auto* v = app.add_subcommand("visualize", "draw ground truth and predictions");
  opt(v, "config", vi.config, "inference overrides file (key = value)");
  opt(v, "seed", vi.seed, "seed override");
  opt(v, "output", vi.output, "image directory")->required();
  opt(v, "checkpoint", vi.checkpoint, "checkpoint file (ground truth only when absent)");
  opt(v, "dataset", vi.dataset, "dataset root in KITTI layout")->required();
  opt(v, "split", vi.split, "split the ids belong to");
  opt(v, "ids", ids, "comma-separated sample ids (empty: first --limit ids)");
  opt(v, "limit", vi.limit, "number of samples when --ids is empty");
  opt(v, "metrics", vi.metrics, "metrics.jsonl to plot as loss_curve.png");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  spdlog::set_level(spdlog::level::from_str(log_level));
  try {
    if (g->parsed()) cli::run_generate(gen);
    if (t->parsed()) cli::run_train(tr);
    if (e->parsed()) cli::run_eval(ev);
    if (v->parsed()) {
      std::size_t at = 0;
      while (at < ids.size()) {
        const auto comma = ids.find(',', at);
        const auto end = comma == std::string::npos ? ids.size() : comma;
        if (end > at) vi.ids.push_back(ids.substr(at, end - at));
        at = end + 1;
      }
      cli::run_visualize(vi);
    }
  } catch (const maskdet::ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return EXIT_SUCCESS;
}
