#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskdet/data/label.hpp"

namespace maskdet::eval {

/// Depth bins [0, 20), [20, 40), [40, inf) by ground-truth depth, then All.
inline constexpr std::array<double, 3> kDepthBinEdges{0.0, 20.0, 40.0};
inline constexpr int kNumDepthBins = 4;

std::string depth_bin_name(int bin);

struct DepthErrors {
  std::array<std::optional<double>, kNumDepthBins> mae{};
  std::array<std::size_t, kNumDepthBins> count{};

  bool operator==(const DepthErrors&) const = default;
};

/// Pairs detections with ground truth by 2D IoU >= `iou_threshold`, greedily
/// in descending score order within each image, and averages |z_pred - z_gt|
/// per bin of the ground-truth depth. Empty bins are absent.
DepthErrors depth_mae(std::span<const std::vector<ObjectLabel>> detections,
                      std::span<const std::vector<ObjectLabel>> truths, double iou_threshold = 0.5);

}  // namespace maskdet::eval
