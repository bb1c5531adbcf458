#include "maskdet/cli/commands.hpp"

#include <algorithm>
#include <iostream>

#include <spdlog/spdlog.h>

#include "maskdet/cli/manifest.hpp"
#include "maskdet/cli/visualize.hpp"
#include "maskdet/core/config.hpp"
#include "maskdet/core/error.hpp"
#include "maskdet/core/keyvalue.hpp"
#include "maskdet/data/dataset.hpp"
#include "maskdet/data/scene.hpp"
#include "maskdet/eval/report.hpp"
#include "maskdet/model/checkpoint.hpp"
#include "maskdet/model/inference.hpp"
#include "maskdet/occlusion/masking.hpp"
#include "maskdet/train/trainer.hpp"

namespace maskdet::cli {

namespace fs = std::filesystem;

namespace {

void apply_overrides(Config& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError(o, "override must have the form key=value");
    cfg.apply(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
}

/// Checkpoint configuration with file entries and overrides applied on top.
Config layered_config(Config cfg, const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  if (file) {
    for (const auto& kv : read_key_values(*file)) cfg.apply(kv.key, kv.value);
  }
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

std::vector<std::vector<ObjectLabel>> labels_of(std::span<const Sample> samples) {
  std::vector<std::vector<ObjectLabel>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.labels);
  return out;
}

}  // namespace

void run_generate(const GenerateCommand& cmd) {
  Stopwatch watch;
  SceneRecipe recipe = cmd.recipe ? SceneRecipe::from_file(*cmd.recipe) : SceneRecipe{};
  if (cmd.seed) recipe.seed = *cmd.seed;
  recipe.validate();
  if (cmd.count == 0) throw InvalidInput("count must be positive");
  if (cmd.val_count > cmd.count) throw InvalidInput("val count exceeds count");
  if (cmd.workers < 1) throw InvalidInput("workers must be >= 1");

  PartialMarker marker(cmd.output);
  materialize_synthetic(cmd.output, recipe, cmd.count, cmd.val_count, cmd.workers);
  write_text_file(cmd.output / "recipe.txt", recipe.to_text());

  auto m = manifest_header("generate");
  m["recipe"] = recipe.to_text();
  m["seed"] = recipe.seed;
  m["count"] = cmd.count;
  m["val_count"] = cmd.val_count;
  m["dataset_fingerprint"] = dataset_fingerprint(cmd.output);
  m["timing"] = {{"wall_seconds", watch.seconds()}};
  write_json(cmd.output / "manifest.json", m);
  marker.commit();
  spdlog::info("generated {} scenes in {}", cmd.count, cmd.output.string());
}

void run_train(const TrainCommand& cmd) {
  Stopwatch watch;
  Config cfg = cmd.config ? Config::from_file(*cmd.config) : Config{};
  apply_overrides(cfg, cmd.overrides);
  if (cmd.no_grouping) cfg.use_grouping = false;
  if (cmd.no_masking) cfg.use_masking = false;
  if (cmd.no_completion) cfg.use_completion = false;
  if (cmd.mask_strategy) cfg.mask_strategy = parse_mask_strategy(*cmd.mask_strategy);
  if (cmd.seed) cfg.seed = *cmd.seed;
  if (cmd.workers) cfg.workers = *cmd.workers;
  cfg.validate();

  const auto train_ds = KittiDataset::open(cmd.dataset, cmd.train_split);
  const auto train_set = train_ds.load_all(cfg.workers);
  std::vector<Sample> val_set;
  if (!cmd.val_split.empty()) val_set = KittiDataset::open(cmd.dataset, cmd.val_split).load_all(cfg.workers);
  spdlog::info("training on {} samples, validating on {}", train_set.size(), val_set.size());

  PartialMarker marker(cmd.output);
  train::TrainOptions opts;
  opts.output_dir = cmd.output;
  opts.resume = cmd.resume;
  const auto result = train::train(cfg, train_set, val_set, opts);

  write_text_file(cmd.output / "config.txt", cfg.to_text());
  auto m = manifest_header("train");
  m["config"] = config_json(cfg);
  m["dataset"] = {{"path", fs::absolute(cmd.dataset).string()},
                  {"fingerprint", dataset_fingerprint(cmd.dataset)},
                  {"train_split", cmd.train_split},
                  {"val_split", cmd.val_split},
                  {"train_samples", train_set.size()},
                  {"val_samples", val_set.size()}};
  const bool has_best = fs::exists(cmd.output / "best.ckpt");
  m["checkpoint"] = fs::absolute(cmd.output / (has_best ? "best.ckpt" : "last.ckpt")).string();
  m["last_checkpoint"] = fs::absolute(cmd.output / "last.ckpt").string();
  m["metrics_log"] = fs::absolute(cmd.output / "metrics.jsonl").string();
  m["start_epoch"] = result.start_epoch;
  m["best_epoch"] = result.best_epoch;
  m["best_metric"] = result.best_metric;
  m["timing"] = {{"wall_seconds", watch.seconds()}};
  write_json(cmd.output / "manifest.json", m);
  marker.commit();
}

void run_eval(const EvalCommand& cmd) {
  Stopwatch watch;
  if (!cmd.checkpoint && !cmd.predictions) throw InvalidInput("eval needs --checkpoint or --predictions");
  std::optional<model::Checkpoint> ckpt;
  if (cmd.checkpoint) ckpt = model::Checkpoint::load(*cmd.checkpoint);
  Config cfg = layered_config(ckpt ? ckpt->config() : Config{}, cmd.config, cmd.overrides);
  if (cmd.seed) cfg.seed = *cmd.seed;
  if (cmd.workers) cfg.workers = *cmd.workers;

  const auto ds = KittiDataset::open(cmd.dataset, cmd.split);
  PartialMarker marker(cmd.output);

  std::vector<std::vector<ObjectLabel>> labels;
  std::vector<std::vector<ObjectLabel>> preds;
  std::uint64_t sampling_calls = 0;
  if (cmd.predictions) {
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto path = *cmd.predictions / (ds.ids()[i] + ".txt");
      if (!fs::exists(path)) {
        missing.push_back(ds.ids()[i]);
        continue;
      }
      preds.push_back(parse_kitti_label_file(read_text_file(path)));
      labels.push_back(ds.load_labels(i));
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& id : missing) list += " " + id;
      throw InvalidInput("prediction dump lacks " + std::to_string(missing.size()) + " ids:" + list);
    }
  } else {
    const auto samples = ds.load_all(cfg.workers);
    auto net = model::network_from_checkpoint<float>(*ckpt);
    net.reconfigure(cfg);
    const auto before = occlusion::mask_sampling_calls();
    preds = train::predict_all(net, samples);
    sampling_calls = occlusion::mask_sampling_calls() - before;
    labels = labels_of(samples);
    const fs::path dump = cmd.output / "predictions";
    fs::create_directories(dump);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      write_text_file(dump / (samples[i].id + ".txt"), serialize_kitti_label_file(preds[i]));
    }
  }

  const auto report = eval::evaluate(preds, labels, eval::EvalOptions::from(cfg));
  write_text_file(cmd.output / "report.txt", report.to_text());
  write_text_file(cmd.output / "report.json", report.to_json());
  std::cout << report.to_text();
  if (cmd.compare) {
    const auto other = eval::EvalReport::from_json(read_text_file(*cmd.compare));
    const std::string cmp = eval::compare_reports(report, "this", other, cmd.compare->string());
    write_text_file(cmd.output / "comparison.txt", cmp);
    std::cout << cmp;
  }

  auto m = manifest_header("eval");
  m["config"] = config_json(cfg);
  if (cmd.checkpoint) m["checkpoint"] = fs::absolute(*cmd.checkpoint).string();
  if (cmd.predictions) m["predictions"] = fs::absolute(*cmd.predictions).string();
  m["dataset"] = {{"path", fs::absolute(cmd.dataset).string()},
                  {"fingerprint", dataset_fingerprint(cmd.dataset)},
                  {"split", cmd.split},
                  {"images", labels.size()}};
  m["mask_sampling_calls"] = sampling_calls;
  m["timing"] = {{"wall_seconds", watch.seconds()}};
  write_json(cmd.output / "manifest.json", m);
  marker.commit();
}

void run_visualize(const VisualizeCommand& cmd) {
  Stopwatch watch;
  const auto ds = KittiDataset::open(cmd.dataset, cmd.split);
  std::vector<std::size_t> chosen;
  if (cmd.ids.empty()) {
    for (std::size_t i = 0; i < std::min(cmd.limit, ds.size()); ++i) chosen.push_back(i);
  } else {
    for (const auto& id : cmd.ids) {
      const auto it = std::find(ds.ids().begin(), ds.ids().end(), id);
      if (it == ds.ids().end()) {
        spdlog::warn("visualize: unknown id '{}' in split '{}', skipped", id, cmd.split);
        continue;
      }
      chosen.push_back(static_cast<std::size_t>(it - ds.ids().begin()));
    }
  }

  std::optional<model::Network<float>> net;
  if (cmd.checkpoint) {
    const auto ckpt = model::Checkpoint::load(*cmd.checkpoint);
    net.emplace(model::network_from_checkpoint<float>(ckpt));
    Config cfg = layered_config(ckpt.config(), cmd.config, {});
    if (cmd.seed) cfg.seed = *cmd.seed;
    net->reconfigure(cfg);
  }

  PartialMarker marker(cmd.output);
  nlohmann::json images = nlohmann::json::array();
  for (const auto i : chosen) {
    const Sample s = ds.load(i);
    const auto preds = net ? model::predict(*net, s) : std::vector<ObjectLabel>{};
    const auto path = cmd.output / (s.id + ".png");
    write_png(path, render_visualization(s, preds));
    images.push_back(path.filename().string());
  }
  if (cmd.metrics) {
    const auto history = read_metrics_log(*cmd.metrics);
    write_png(cmd.output / "loss_curve.png", render_loss_curve(history));
    images.push_back("loss_curve.png");
  }
  auto m = manifest_header("visualize");
  if (cmd.checkpoint) m["checkpoint"] = fs::absolute(*cmd.checkpoint).string();
  m["dataset"] = {{"path", fs::absolute(cmd.dataset).string()}, {"split", cmd.split}};
  m["images"] = images;
  m["timing"] = {{"wall_seconds", watch.seconds()}};
  write_json(cmd.output / "manifest.json", m);
  marker.commit();
}

}  // namespace maskdet::cli
