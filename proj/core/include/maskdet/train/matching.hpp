#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "maskdet/core/config.hpp"
#include "maskdet/data/label.hpp"
#include "maskdet/model/heads.hpp"

namespace maskdet::train {

/// Regression targets of one ground-truth object in head units.
struct LabelTarget {
  std::array<double, 4> box2d{};   // (cx, cy, w, h) / image size
  double depth = 0.0;              // meters
  std::array<double, 3> dims{};    // (h, w, l) meters
  std::array<double, 2> orientation{};  // (sin, cos)
  std::array<double, 2> center{};  // projected 3D center minus box center, / image size
  int occluded = 0;
};

/// Targets for detection labels (DontCare must already be removed).
std::vector<LabelTarget> make_targets(std::span<const ObjectLabel> labels, const CameraIntrinsics& intr,
                                      int image_width, int image_height);

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (query, label)
  std::vector<int> unmatched_queries;

  /// Label index matched to each query, -1 when unmatched.
  std::vector<int> label_of_query(int num_queries) const;
};

struct MatchCostWeights {
  double class_weight = 2.0;
  double box2d_weight = 5.0;
  double depth_weight = 1.0;
  double depth_max = 60.0;

  static MatchCostWeights from(const Config& config);
};

/// cost(q, g) = w1 (1 - p_q(car)) + w2 |box_q - box_g|_1 + w3 |d_q - z_g| / D_max.
template <typename T>
Eigen::MatrixXd matching_cost(const model::HeadOutput<T>& out, std::span<const LabelTarget> targets,
                              const MatchCostWeights& weights);

/// Globally optimal one-to-one assignment of queries to targets.
template <typename T>
MatchResult hungarian_match(const model::HeadOutput<T>& out, std::span<const LabelTarget> targets,
                            const MatchCostWeights& weights);

/// Assignment from an explicit query x label cost matrix.
MatchResult match_from_cost(const Eigen::MatrixXd& cost);

}  // namespace maskdet::train
