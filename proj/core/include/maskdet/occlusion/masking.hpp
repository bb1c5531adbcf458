#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "maskdet/core/config.hpp"
#include "maskdet/nn/tensor.hpp"

namespace maskdet::occlusion {

using nn::Matrix;

/// Queries split by occlusion state. Row i of `non_occluded` is the query
/// with index `non_occluded_index[i]` in the original K x C set; likewise for
/// the occluded group.
template <typename T>
struct GroupedQueries {
  std::vector<int> non_occluded_index;
  Matrix<T> non_occluded;
  std::vector<int> occluded_index;
  Matrix<T> occluded;

  int total() const {
    return static_cast<int>(non_occluded_index.size() + occluded_index.size());
  }
};

/// Splits by classifier probability: p >= threshold goes to the occluded group.
template <typename T>
GroupedQueries<T> group_queries(const Matrix<T>& queries, std::span<const double> occlusion_prob,
                                double threshold);

/// Splits by explicit per-query flags (nonzero = occluded).
template <typename T>
GroupedQueries<T> group_by_flags(const Matrix<T>& queries, std::span<const int> occluded);

/// Depth-aware mask ratio: 1 - depth / depth_max clipped to [clip.low, clip.high].
double mask_ratio(double depth, double depth_max, RatioClip clip);

/// Bernoulli keep-mask: each entry is 0 with probability `ratio`. Every call
/// increments the global sampling counter.
std::vector<std::uint8_t> sample_mask(double ratio, int dim, nn::Rng& rng);

/// Number of sample_mask / sample_image_mask calls since start-up.
std::uint64_t mask_sampling_calls();

/// Element-wise product of each row with the mask of the same row.
template <typename T>
Matrix<T> apply_mask(const Matrix<T>& rows, const std::vector<std::vector<std::uint8_t>>& masks);

/// Masks drawn for the non-occluded group during one training routing.
struct MaskSpec {
  std::vector<int> query_index;
  std::vector<double> ratio;
  std::vector<std::vector<std::uint8_t>> masks;
};

/// How the non-occluded group is masked during training.
struct MaskingOptions {
  bool enabled = true;
  MaskStrategy strategy = MaskStrategy::DepthAware;
  double depth_max = 60.0;
  RatioClip clip{};
  double fixed_ratio = 0.5;
};

MaskingOptions masking_options(const Config& config);

/// Training routing. Non-occluded queries are masked by a ratio derived from
/// their depth (`depths` is indexed by query), passed through `complete`, and
/// written back at their original indices; occluded queries pass through
/// unchanged. Returns the recombined K x C set, the masked inputs and the
/// completion outputs.
template <typename T>
struct TrainingRoute {
  Matrix<T> queries;
  Matrix<T> masked;
  Matrix<T> completed;
  MaskSpec spec;
};

template <typename T, typename Complete>
TrainingRoute<T> route_training(const GroupedQueries<T>& groups, std::span<const double> depths,
                                Complete&& complete, const MaskingOptions& options, nn::Rng& rng);

/// Batched training routing: the masked queries of every image are stacked
/// and passed through `complete` in a single call (so normalisation sees the
/// whole batch), then split back per image. Image b draws its masks from rngs[b].
template <typename T, typename Complete>
std::vector<TrainingRoute<T>> route_training_batch(std::span<const GroupedQueries<T>> groups,
                                                   std::span<const std::vector<double>> depths,
                                                   Complete&& complete, const MaskingOptions& options,
                                                   std::span<nn::Rng> rngs);

/// Inference routing: occluded queries go through `complete`, non-occluded
/// queries pass through, and the set is recombined by index. No masks are drawn.
template <typename T, typename Complete>
Matrix<T> route_inference(const GroupedQueries<T>& groups, Complete&& complete);

/// Writes the rows of both groups back at their original indices.
template <typename T>
Matrix<T> recombine(const std::vector<int>& index_a, const Matrix<T>& rows_a,
                    const std::vector<int>& index_b, const Matrix<T>& rows_b);

// ---------------------------------------------------------------------------

template <typename T>
Matrix<T> recombine(const std::vector<int>& index_a, const Matrix<T>& rows_a,
                    const std::vector<int>& index_b, const Matrix<T>& rows_b) {
  const Eigen::Index cols = rows_a.rows() > 0 ? rows_a.cols() : rows_b.cols();
  Matrix<T> out(static_cast<Eigen::Index>(index_a.size() + index_b.size()), cols);
  for (std::size_t i = 0; i < index_a.size(); ++i) out.row(index_a[i]) = rows_a.row(static_cast<Eigen::Index>(i));
  for (std::size_t i = 0; i < index_b.size(); ++i) out.row(index_b[i]) = rows_b.row(static_cast<Eigen::Index>(i));
  return out;
}

template <typename T, typename Complete>
std::vector<TrainingRoute<T>> route_training_batch(std::span<const GroupedQueries<T>> groups,
                                                   std::span<const std::vector<double>> depths,
                                                   Complete&& complete, const MaskingOptions& options,
                                                   std::span<nn::Rng> rngs) {
  std::vector<TrainingRoute<T>> routes(groups.size());
  Eigen::Index rows = 0;
  const Eigen::Index dim = groups.empty() ? 0 : groups.front().non_occluded.cols();
  for (std::size_t b = 0; b < groups.size(); ++b) {
    const auto& g = groups[b];
    auto& route = routes[b];
    route.spec.query_index = g.non_occluded_index;
    for (int q : g.non_occluded_index) {
      double r = 0.0;
      if (options.enabled) {
        r = options.strategy == MaskStrategy::Random
                ? options.fixed_ratio
                : mask_ratio(depths[b][static_cast<std::size_t>(q)], options.depth_max, options.clip);
      }
      route.spec.ratio.push_back(r);
      const int cols = static_cast<int>(g.non_occluded.cols());
      route.spec.masks.push_back(options.enabled ? sample_mask(r, cols, rngs[b])
                                                 : std::vector<std::uint8_t>(static_cast<std::size_t>(cols), 1));
    }
    route.masked = apply_mask(g.non_occluded, route.spec.masks);
    rows += route.masked.rows();
  }
  Matrix<T> stacked(rows, dim);
  Eigen::Index at = 0;
  for (const auto& route : routes) {
    if (route.masked.rows() > 0) stacked.middleRows(at, route.masked.rows()) = route.masked;
    at += route.masked.rows();
  }
  const Matrix<T> completed = rows > 0 ? Matrix<T>(complete(stacked)) : stacked;
  at = 0;
  for (std::size_t b = 0; b < groups.size(); ++b) {
    auto& route = routes[b];
    const auto n = route.masked.rows();
    route.completed = completed.middleRows(at, n);
    at += n;
    route.queries = recombine(groups[b].non_occluded_index, route.completed, groups[b].occluded_index,
                              groups[b].occluded);
  }
  return routes;
}

template <typename T, typename Complete>
TrainingRoute<T> route_training(const GroupedQueries<T>& groups, std::span<const double> depths,
                                Complete&& complete, const MaskingOptions& options, nn::Rng& rng) {
  const std::vector<double> d(depths.begin(), depths.end());
  auto routes = route_training_batch<T>(std::span<const GroupedQueries<T>>(&groups, 1),
                                        std::span<const std::vector<double>>(&d, 1),
                                        std::forward<Complete>(complete), options, std::span<nn::Rng>(&rng, 1));
  return std::move(routes.front());
}

template <typename T, typename Complete>
Matrix<T> route_inference(const GroupedQueries<T>& groups, Complete&& complete) {
  Matrix<T> completed = groups.occluded.rows() > 0 ? complete(groups.occluded) : groups.occluded;
  return recombine(groups.non_occluded_index, groups.non_occluded, groups.occluded_index, completed);
}

}  // namespace maskdet::occlusion
