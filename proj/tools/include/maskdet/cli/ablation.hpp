#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskdet/core/config.hpp"
#include "maskdet/data/sample.hpp"
#include "maskdet/eval/report.hpp"

namespace maskdet::cli {

struct AblationArm {
  std::string name;
  Config config;
};

/// Arms derived from `base`:
///   baseline  grouping only (no masking, no completion)
///   dam_only  grouping + depth-aware masking, no completion
///   full      grouping + depth-aware masking + completion
///   random    full with a fixed mask ratio
///   image     full with patch masking of the input image
std::vector<AblationArm> standard_arms(const Config& base);

struct AblationRun {
  std::string arm;
  std::uint64_t seed = 0;
  /// Validation report of the final epoch.
  eval::EvalReport report;
  /// Reports of the same predictions at AblationOptions::diagnostic_iou.
  std::vector<eval::EvalReport> diagnostics;
  double seconds = 0.0;
  bool cached = false;
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  /// Per-run results are stored under <output_dir>/<arm>/seed_<n>/ and reused
  /// when the stored configuration matches. Empty: nothing is stored.
  std::filesystem::path output_dir;
  /// Extra text a cached result must match, e.g. a dataset or build hash.
  std::string cache_key;
  /// Additional IoU thresholds evaluated on the final predictions.
  std::vector<double> diagnostic_iou;
  std::function<void(const AblationRun&)> on_run;
};

/// Trains every arm once per seed and evaluates it on `val_set`.
std::vector<AblationRun> run_ablation(std::span<const AblationArm> arms, std::span<const Sample> train_set,
                                      std::span<const Sample> val_set, const AblationOptions& options);

/// AP_3D of the occluded stratum; 0 when the stratum is empty.
double occluded_ap3d(const eval::EvalReport& report);

/// Result of `arm` for `seed`, if present.
const AblationRun* find_run(std::span<const AblationRun> runs, const std::string& arm, std::uint64_t seed);

}  // namespace maskdet::cli
