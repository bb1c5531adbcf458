#include "maskdet/cli/ablation.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "maskdet/cli/manifest.hpp"
#include "maskdet/core/keyvalue.hpp"
#include "maskdet/train/trainer.hpp"

namespace maskdet::cli {

std::vector<AblationArm> standard_arms(const Config& base) {
  std::vector<AblationArm> arms;
  auto arm = [&](const std::string& name, bool masking, bool completion, MaskStrategy strategy) {
    Config c = base;
    c.use_grouping = true;
    c.use_masking = masking;
    c.use_completion = completion;
    c.mask_strategy = strategy;
    arms.push_back({name, c});
  };
  arm("baseline", false, false, MaskStrategy::DepthAware);
  arm("dam_only", true, false, MaskStrategy::DepthAware);
  arm("full", true, true, MaskStrategy::DepthAware);
  arm("random", true, true, MaskStrategy::Random);
  arm("image", true, true, MaskStrategy::Image);
  return arms;
}

double occluded_ap3d(const eval::EvalReport& report) { return report.occlusion_ap_3d[1].ap.value_or(0.0); }

const AblationRun* find_run(std::span<const AblationRun> runs, const std::string& arm, std::uint64_t seed) {
  for (const auto& r : runs) {
    if (r.arm == arm && r.seed == seed) return &r;
  }
  return nullptr;
}

namespace {

std::optional<AblationRun> load_cached(const std::filesystem::path& path, const std::string& config_text,
                                      const AblationOptions& options) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(read_text_file(path));
    if (j.at("config").get<std::string>() != config_text) return std::nullopt;
    if (j.value("key", std::string()) != options.cache_key) return std::nullopt;
    if (j.at("diagnostic_iou").get<std::vector<double>>() != options.diagnostic_iou) return std::nullopt;
    AblationRun run;
    run.arm = j.at("arm").get<std::string>();
    run.seed = j.at("seed").get<std::uint64_t>();
    run.report = eval::EvalReport::from_json(j.at("report").dump());
    for (const auto& d : j.at("diagnostics")) run.diagnostics.push_back(eval::EvalReport::from_json(d.dump()));
    run.seconds = j.at("seconds").get<double>();
    run.cached = true;
    return run;
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable ablation result {}: {}", path.string(), e.what());
    return std::nullopt;
  }
}

}  // namespace

std::vector<AblationRun> run_ablation(std::span<const AblationArm> arms, std::span<const Sample> train_set,
                                      std::span<const Sample> val_set, const AblationOptions& options) {
  std::vector<AblationRun> runs;
  for (const auto seed : options.seeds) {
    for (const auto& arm : arms) {
      Config cfg = arm.config;
      cfg.seed = seed;
      // Validation only after the final epoch.
      cfg.val_every = cfg.epochs;
      const std::string text = cfg.to_text();
      std::filesystem::path dir;
      if (!options.output_dir.empty()) {
        dir = options.output_dir / arm.name / ("seed_" + std::to_string(seed));
        if (auto cached = load_cached(dir / "result.json", text, options)) {
          runs.push_back(*cached);
          if (options.on_run) options.on_run(runs.back());
          continue;
        }
      }
      spdlog::info("ablation: arm {} seed {}", arm.name, seed);
      Stopwatch watch;
      train::TrainOptions topts;
      topts.output_dir = dir;
      const auto result = train::train(cfg, train_set, val_set, topts);
      AblationRun run;
      run.arm = arm.name;
      run.seed = seed;
      run.report = result.history.back().val.value();
      if (!options.diagnostic_iou.empty()) {
        auto net = *result.network;
        const auto predictions = train::predict_all(net, val_set);
        std::vector<std::vector<ObjectLabel>> labels;
        labels.reserve(val_set.size());
        for (const auto& s : val_set) labels.push_back(s.labels);
        for (const double iou : options.diagnostic_iou) {
          auto eopts = eval::EvalOptions::from(cfg);
          eopts.iou_threshold = iou;
          run.diagnostics.push_back(eval::evaluate(predictions, labels, eopts));
        }
      }
      run.seconds = watch.seconds();
      if (!dir.empty()) {
        nlohmann::json j;
        j["arm"] = run.arm;
        j["seed"] = run.seed;
        j["config"] = text;
        j["key"] = options.cache_key;
        j["report"] = nlohmann::json::parse(run.report.to_json());
        j["diagnostic_iou"] = options.diagnostic_iou;
        j["diagnostics"] = nlohmann::json::array();
        for (const auto& d : run.diagnostics) j["diagnostics"].push_back(nlohmann::json::parse(d.to_json()));
        j["seconds"] = run.seconds;
        write_json(dir / "result.json", j);
      }
      runs.push_back(run);
      if (options.on_run) options.on_run(runs.back());
    }
  }
  return runs;
}

}  // namespace maskdet::cli
