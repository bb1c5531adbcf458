#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskdet/core/config.hpp"
#include "maskdet/core/error.hpp"
#include "maskdet/data/sample.hpp"
#include "maskdet/eval/report.hpp"
#include "maskdet/model/network.hpp"
#include "maskdet/train/losses.hpp"

namespace maskdet::train {

/// Raised when a step produces a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// One line of the metrics log.
struct EpochRecord {
  int epoch = 0;
  int steps = 0;
  LossBundle loss;  // mean over the epoch's steps
  double mask_ratio_mean = 0.0;
  double mask_zero_rate = 0.0;
  double occlusion_accuracy = 0.0;
  double completion_error = 0.0;
  double identity_error = 0.0;
  std::optional<eval::EvalReport> val;

  /// Compact JSON object on one line. Contains no timing information.
  std::string to_json_line() const;
  static EpochRecord from_json_line(const std::string& line);
};

/// Validation metric used for best-checkpoint selection: moderate AP_3D, or
/// -1 when the stratum is empty.
double selection_metric(const eval::EvalReport& report);

struct TrainOptions {
  /// Receives metrics.jsonl, last.ckpt and best.ckpt. Empty: keep in memory only.
  std::filesystem::path output_dir;
  /// Continue from output_dir/last.ckpt when it exists.
  bool resume = false;
  /// Stop after this epoch (0: run config.epochs). Simulates an interruption.
  int stop_after_epoch = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::optional<model::Network<float>> network;
  int best_epoch = 0;
  double best_metric = -1.0;
  int start_epoch = 1;
};

/// Per-sample random state for mask sampling, keyed by (seed, epoch, sample index).
nn::Rng sample_rng(std::uint64_t seed, int epoch, std::size_t sample_index);

/// Sample order of an epoch, keyed by (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t count);

/// Predictions for every sample in evaluation mode.
std::vector<std::vector<ObjectLabel>> predict_all(model::Network<float>& net, std::span<const Sample> samples);

eval::EvalReport evaluate_network(model::Network<float>& net, std::span<const Sample> samples);

/// Full training loop. Per step: zero gradients, train_step, abort on a
/// non-finite loss (writing nonfinite_batch.json), optional clipping, AdamW.
/// Validation runs every config.val_every epochs and after the final epoch.
TrainResult train(const Config& config, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainOptions& options = {});

}  // namespace maskdet::train
