#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "maskdet/data/label.hpp"

namespace maskdet::eval {

using IouFn = std::function<double(const ObjectLabel& detection, const ObjectLabel& truth)>;

/// Detections and ground truth of one image. Ground truths outside the
/// stratum act as ignore regions: a detection matched to one is neither a
/// true nor a false positive.
struct ImageEval {
  std::vector<ObjectLabel> detections;
  std::vector<ObjectLabel> truths;
  std::vector<bool> in_stratum;
};

/// Outcome of matching one detection.
enum class DetectionOutcome { TruePositive, FalsePositive, Ignored };

struct ScoredOutcome {
  double score = 0.0;
  DetectionOutcome outcome = DetectionOutcome::FalsePositive;
};

/// Greedy matching inside one image: detections in descending score order
/// take the unmatched truth of highest IoU >= threshold. Equal scores keep
/// input order.
std::vector<ScoredOutcome> match_image(const ImageEval& image, const IouFn& iou, double threshold);

/// AP from matched outcomes: the mean over recall levels 1/40, ..., 1 of the
/// best precision at recall >= level. `num_truths` counts stratum truths.
double ap_r40_from_outcomes(std::vector<ScoredOutcome> outcomes, std::size_t num_truths);

/// AP|R40 over a set of images. Absent when the stratum has no ground truth.
std::optional<double> ap_r40(std::span<const ImageEval> images, const IouFn& iou, double threshold);

/// Number of in-stratum ground truths.
std::size_t stratum_size(std::span<const ImageEval> images);

}  // namespace maskdet::eval
