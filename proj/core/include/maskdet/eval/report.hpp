#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskdet/core/config.hpp"
#include "maskdet/data/label.hpp"
#include "maskdet/eval/depth_error.hpp"

namespace maskdet::eval {

/// AP of one stratum with the number of ground truths it contains. `ap` is
/// empty when the stratum is empty.
struct StratumAp {
  std::optional<double> ap;
  std::size_t truths = 0;

  bool operator==(const StratumAp&) const = default;
};

struct EvalReport {
  double iou_threshold = 0.7;
  std::size_t images = 0;
  std::size_t detections = 0;
  std::size_t truths = 0;
  /// Indexed by Difficulty.
  std::array<StratumAp, 3> ap_3d{};
  std::array<StratumAp, 3> ap_bev{};
  /// Indexed by occlusion flag (0 visible, 1 occluded); strata are the Hard
  /// evaluation set split by flag.
  std::array<StratumAp, 2> occlusion_ap_3d{};
  std::array<StratumAp, 2> occlusion_ap_bev{};
  DepthErrors depth{};

  /// Human-readable multi-line report.
  std::string to_text() const;
  /// Machine-readable record; from_json(to_json()) reproduces the report.
  std::string to_json() const;
  static EvalReport from_json(const std::string& text);

  bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
  double iou_threshold = 0.7;
  double depth_mae_iou = 0.5;
  DifficultyThresholds difficulty{};

  static EvalOptions from(const Config& config);
};

/// Scores per-image predictions against per-image labels. Only Car labels
/// are evaluated; DontCare and other classes are dropped on both sides.
EvalReport evaluate(std::span<const std::vector<ObjectLabel>> predictions,
                    std::span<const std::vector<ObjectLabel>> labels, const EvalOptions& options);

/// Side-by-side comparison of two reports as text.
std::string compare_reports(const EvalReport& a, const std::string& name_a, const EvalReport& b,
                            const std::string& name_b);

}  // namespace maskdet::eval
