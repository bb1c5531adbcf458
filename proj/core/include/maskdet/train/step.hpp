#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "maskdet/data/sample.hpp"
#include "maskdet/model/network.hpp"
#include "maskdet/train/losses.hpp"
#include "maskdet/train/matching.hpp"

namespace maskdet::train {

/// Realised masking statistics of a step or epoch.
struct MaskStats {
  double ratio_sum = 0.0;
  std::size_t ratio_count = 0;
  std::size_t zeros = 0;
  std::size_t entries = 0;

  double mean_ratio() const { return ratio_count ? ratio_sum / static_cast<double>(ratio_count) : 0.0; }
  double zero_rate() const { return entries ? static_cast<double>(zeros) / static_cast<double>(entries) : 0.0; }
  void merge(const MaskStats& o);
};

/// Occlusion classifier agreement with matched ground-truth flags.
struct OcclusionStats {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  void merge(const OcclusionStats& o);
};

struct StepOptions {
  /// Relative weight of each detection loss component inside L_base.
  std::array<double, kNumBaseTerms> base_term_weight{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  /// When set, these per-image, per-query depths drive the mask ratios instead
  /// of the depths read from the no-gradient head pass.
  const std::vector<std::vector<double>>* frozen_depths = nullptr;
  /// When set, replace the Hungarian assignment and the per-query grouping
  /// flags (nonzero = occluded). Used to hold the discrete decisions of a
  /// reference pass fixed, e.g. for finite-difference checks.
  const std::vector<MatchResult>* fixed_matches = nullptr;
  const std::vector<std::vector<int>>* fixed_flags = nullptr;
};

struct StepResult {
  LossBundle loss;
  MaskStats mask;
  OcclusionStats occlusion;
  /// Depths (meters) that drove the mask ratios, per image and query.
  std::vector<std::vector<double>> depths;
  std::vector<MatchResult> matches;
  /// Grouping flags used for routing, per image and query.
  std::vector<std::vector<int>> flags;
  /// Completion reconstruction error on the masked non-occluded queries and
  /// the same error for an identity map, both as mean SmoothL1.
  double completion_error = 0.0;
  double identity_error = 0.0;
};

/// One forward and backward pass over a batch. Gradients are accumulated
/// into `net` (callers zero them). Sample b draws its masks from rngs[b].
///
/// Per image: backbone -> occlusion logits -> head pass without gradient
/// (matching and mask-ratio depths) -> grouping (ground-truth flags for
/// matched queries, classifier for the rest) -> masking of non-occluded
/// queries -> completion over the whole batch -> index-stable recombination
/// -> head -> losses.
template <typename T>
StepResult train_step(model::Network<T>& net, std::span<const Sample* const> batch, std::span<nn::Rng> rngs,
                      const StepOptions& options = {});

}  // namespace maskdet::train
