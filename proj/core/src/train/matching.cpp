#include "maskdet/train/matching.hpp"

#include <cmath>

#include "maskdet/core/error.hpp"
#include "maskdet/train/hungarian.hpp"

namespace maskdet::train {

std::vector<LabelTarget> make_targets(std::span<const ObjectLabel> labels, const CameraIntrinsics& intr,
                                      int image_width, int image_height) {
  const double w = image_width;
  const double h = image_height;
  std::vector<LabelTarget> targets;
  targets.reserve(labels.size());
  for (const auto& l : labels) {
    if (l.is_dont_care()) throw InvalidInput("make_targets: DontCare labels must be filtered first");
    LabelTarget t;
    const double bcx = 0.5 * (l.box2d.x1 + l.box2d.x2);
    const double bcy = 0.5 * (l.box2d.y1 + l.box2d.y2);
    t.box2d = {bcx / w, bcy / h, l.box2d.width() / w, l.box2d.height() / h};
    t.depth = l.box3d.z;
    t.dims = {l.box3d.h, l.box3d.w, l.box3d.l};
    t.orientation = {std::sin(l.box3d.theta), std::cos(l.box3d.theta)};
    const Vec2 c = project(l.box3d.geometric_center(), intr);
    t.center = {c.x() / w - t.box2d[0], c.y() / h - t.box2d[1]};
    t.occluded = occlusion_flag(l);
    targets.push_back(t);
  }
  return targets;
}

std::vector<int> MatchResult::label_of_query(int num_queries) const {
  std::vector<int> out(static_cast<std::size_t>(num_queries), -1);
  for (const auto& [q, g] : pairs) out[static_cast<std::size_t>(q)] = g;
  return out;
}

MatchCostWeights MatchCostWeights::from(const Config& config) {
  return {config.match_cost_class, config.match_cost_box2d, config.match_cost_depth, config.depth_max};
}

template <typename T>
Eigen::MatrixXd matching_cost(const model::HeadOutput<T>& out, std::span<const LabelTarget> targets,
                              const MatchCostWeights& weights) {
  const auto k = out.size();
  const auto p = model::car_probability<T>(out.class_logits);
  Eigen::MatrixXd cost(k, static_cast<Eigen::Index>(targets.size()));
  for (Eigen::Index q = 0; q < k; ++q) {
    for (std::size_t g = 0; g < targets.size(); ++g) {
      const auto& t = targets[g];
      double l1 = 0.0;
      for (int j = 0; j < 4; ++j) l1 += std::abs(static_cast<double>(out.box2d(q, j)) - t.box2d[j]);
      cost(q, static_cast<Eigen::Index>(g)) =
          weights.class_weight * (1.0 - static_cast<double>(p(q, 0))) + weights.box2d_weight * l1 +
          weights.depth_weight * std::abs(static_cast<double>(out.depth(q, 0)) - t.depth) / weights.depth_max;
    }
  }
  return cost;
}

MatchResult match_from_cost(const Eigen::MatrixXd& cost) {
  MatchResult m;
  const std::vector<int> assign = cost.cols() > 0 ? solve_assignment(cost)
                                                  : std::vector<int>(static_cast<std::size_t>(cost.rows()), -1);
  for (std::size_t q = 0; q < assign.size(); ++q) {
    if (assign[q] >= 0) {
      m.pairs.emplace_back(static_cast<int>(q), assign[q]);
    } else {
      m.unmatched_queries.push_back(static_cast<int>(q));
    }
  }
  return m;
}

template <typename T>
MatchResult hungarian_match(const model::HeadOutput<T>& out, std::span<const LabelTarget> targets,
                            const MatchCostWeights& weights) {
  return match_from_cost(matching_cost(out, targets, weights));
}

template Eigen::MatrixXd matching_cost<float>(const model::HeadOutput<float>&, std::span<const LabelTarget>,
                                              const MatchCostWeights&);
template Eigen::MatrixXd matching_cost<double>(const model::HeadOutput<double>&, std::span<const LabelTarget>,
                                               const MatchCostWeights&);
template MatchResult hungarian_match<float>(const model::HeadOutput<float>&, std::span<const LabelTarget>,
                                            const MatchCostWeights&);
template MatchResult hungarian_match<double>(const model::HeadOutput<double>&, std::span<const LabelTarget>,
                                             const MatchCostWeights&);

}  // namespace maskdet::train
