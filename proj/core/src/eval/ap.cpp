#include "maskdet/eval/ap.hpp"

#include <algorithm>
#include <numeric>

#include "maskdet/core/error.hpp"

namespace maskdet::eval {

namespace {

constexpr int kRecallPoints = 40;

}  // namespace

std::vector<ScoredOutcome> match_image(const ImageEval& image, const IouFn& iou, double threshold) {
  if (image.in_stratum.size() != image.truths.size()) {
    throw InvalidInput("match_image: stratum mask does not cover the ground truth");
  }
  std::vector<std::size_t> order(image.detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return image.detections[a].score.value_or(0.0) > image.detections[b].score.value_or(0.0);
  });
  std::vector<bool> taken(image.truths.size(), false);
  std::vector<ScoredOutcome> outcomes;
  outcomes.reserve(order.size());
  for (std::size_t d : order) {
    const auto& det = image.detections[d];
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < image.truths.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(det, image.truths[g]);
      if (v >= threshold && v > best) {
        best = v;
        best_g = g;
      }
    }
    ScoredOutcome o{det.score.value_or(0.0), DetectionOutcome::FalsePositive};
    if (best >= 0.0) {
      taken[best_g] = true;
      o.outcome = image.in_stratum[best_g] ? DetectionOutcome::TruePositive : DetectionOutcome::Ignored;
    }
    outcomes.push_back(o);
  }
  return outcomes;
}

double ap_r40_from_outcomes(std::vector<ScoredOutcome> outcomes, std::size_t num_truths) {
  if (num_truths == 0) throw InvalidInput("ap_r40: no ground truth in stratum");
  std::stable_sort(outcomes.begin(), outcomes.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });
  // Precision after each counted detection, keyed by the true-positive count.
  std::vector<double> precision;
  std::vector<std::size_t> tp_at;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& o : outcomes) {
    if (o.outcome == DetectionOutcome::Ignored) continue;
    (o.outcome == DetectionOutcome::TruePositive ? tp : fp) += 1;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    tp_at.push_back(tp);
  }
  // Suffix maximum of precision.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  std::size_t i = 0;
  for (int k = 1; k <= kRecallPoints; ++k) {
    // First operating point with recall tp / n >= k / 40, compared exactly in integers.
    while (i < tp_at.size() && tp_at[i] * kRecallPoints < static_cast<std::size_t>(k) * num_truths) ++i;
    if (i == tp_at.size()) break;
    sum += precision[i];
  }
  return sum / kRecallPoints;
}

std::size_t stratum_size(std::span<const ImageEval> images) {
  std::size_t n = 0;
  for (const auto& im : images) n += static_cast<std::size_t>(std::count(im.in_stratum.begin(), im.in_stratum.end(), true));
  return n;
}

std::optional<double> ap_r40(std::span<const ImageEval> images, const IouFn& iou, double threshold) {
  const std::size_t n = stratum_size(images);
  if (n == 0) return std::nullopt;
  std::vector<ScoredOutcome> all;
  for (const auto& im : images) {
    auto o = match_image(im, iou, threshold);
    all.insert(all.end(), o.begin(), o.end());
  }
  return ap_r40_from_outcomes(std::move(all), n);
}

}  // namespace maskdet::eval
