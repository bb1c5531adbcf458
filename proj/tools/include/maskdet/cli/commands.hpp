#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace maskdet::cli {

struct GenerateCommand {
  /// Scene recipe file; built-in defaults when absent.
  std::optional<std::filesystem::path> recipe;
  std::size_t count = 2500;
  /// The last `val_count` ids form the val split.
  std::size_t val_count = 500;
  std::filesystem::path output;
  std::optional<std::uint64_t> seed;
  int workers = 1;
};

struct TrainCommand {
  std::optional<std::filesystem::path> config;
  std::filesystem::path dataset;
  std::filesystem::path output;
  std::optional<std::uint64_t> seed;
  /// `key=value` overrides applied after the config file.
  std::vector<std::string> overrides;
  bool no_grouping = false;
  bool no_masking = false;
  bool no_completion = false;
  std::optional<std::string> mask_strategy;
  std::string train_split = "train";
  /// Empty: no validation.
  std::string val_split = "val";
  bool resume = false;
  std::optional<int> workers;
};

struct EvalCommand {
  /// Required unless `predictions` is given.
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path dataset;
  std::string split = "val";
  std::filesystem::path output;
  /// Evaluation and inference overrides applied on top of the checkpoint configuration.
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  /// Scores an existing prediction dump (<id>.txt per image) instead of running a model.
  std::optional<std::filesystem::path> predictions;
  /// report.json of another run to compare against.
  std::optional<std::filesystem::path> compare;
  std::optional<int> workers;
};

struct VisualizeCommand {
  /// Without a checkpoint only ground truth is drawn.
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path dataset;
  std::string split = "val";
  /// Empty: the first `limit` ids of the split.
  std::vector<std::string> ids;
  std::size_t limit = 8;
  std::filesystem::path output;
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  /// metrics.jsonl of a training run; rendered as loss_curve.png.
  std::optional<std::filesystem::path> metrics;
};

/// Every command throws maskdet::Error (or std::exception) on failure and
/// leaves a `.partial` marker in its output directory until it succeeds.
void run_generate(const GenerateCommand& cmd);
void run_train(const TrainCommand& cmd);
void run_eval(const EvalCommand& cmd);
void run_visualize(const VisualizeCommand& cmd);

/// Name of the marker file present while a command is writing its output.
inline constexpr const char* kPartialMarker = ".partial";

}  // namespace maskdet::cli
