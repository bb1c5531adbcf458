#include "maskdet/occlusion/masking.hpp"

#include <algorithm>
#include <atomic>

#include "maskdet/core/error.hpp"
#include "maskdet/occlusion/image_mask.hpp"

namespace maskdet::occlusion {

namespace {

std::atomic<std::uint64_t> g_mask_calls{0};

template <typename T>
GroupedQueries<T> split(const Matrix<T>& queries, const std::vector<bool>& occluded) {
  GroupedQueries<T> g;
  for (std::size_t i = 0; i < occluded.size(); ++i) {
    (occluded[i] ? g.occluded_index : g.non_occluded_index).push_back(static_cast<int>(i));
  }
  auto gather = [&](const std::vector<int>& idx) {
    Matrix<T> m(static_cast<Eigen::Index>(idx.size()), queries.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = queries.row(idx[i]);
    return m;
  };
  g.non_occluded = gather(g.non_occluded_index);
  g.occluded = gather(g.occluded_index);
  return g;
}

}  // namespace

template <typename T>
GroupedQueries<T> group_queries(const Matrix<T>& queries, std::span<const double> occlusion_prob,
                                double threshold) {
  if (static_cast<Eigen::Index>(occlusion_prob.size()) != queries.rows()) {
    throw ShapeError("group_queries: " + std::to_string(occlusion_prob.size()) + " probabilities for " +
                     std::to_string(queries.rows()) + " queries");
  }
  std::vector<bool> occ(occlusion_prob.size());
  for (std::size_t i = 0; i < occ.size(); ++i) occ[i] = occlusion_prob[i] >= threshold;
  return split(queries, occ);
}

template <typename T>
GroupedQueries<T> group_by_flags(const Matrix<T>& queries, std::span<const int> occluded) {
  if (static_cast<Eigen::Index>(occluded.size()) != queries.rows()) {
    throw ShapeError("group_by_flags: " + std::to_string(occluded.size()) + " flags for " +
                     std::to_string(queries.rows()) + " queries");
  }
  std::vector<bool> occ(occluded.size());
  for (std::size_t i = 0; i < occ.size(); ++i) occ[i] = occluded[i] != 0;
  return split(queries, occ);
}

double mask_ratio(double depth, double depth_max, RatioClip clip) {
  if (!(depth_max > 0.0)) throw InvalidInput("mask_ratio: depth_max must be positive");
  return std::clamp(1.0 - depth / depth_max, clip.low, clip.high);
}

std::vector<std::uint8_t> sample_mask(double ratio, int dim, nn::Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidInput("sample_mask: ratio outside [0, 1]");
  g_mask_calls.fetch_add(1, std::memory_order_relaxed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> m(static_cast<std::size_t>(dim));
  for (auto& v : m) v = u(rng) < ratio ? 0 : 1;
  return m;
}

std::uint64_t mask_sampling_calls() { return g_mask_calls.load(std::memory_order_relaxed); }

template <typename T>
Matrix<T> apply_mask(const Matrix<T>& rows, const std::vector<std::vector<std::uint8_t>>& masks) {
  if (static_cast<Eigen::Index>(masks.size()) != rows.rows()) {
    throw ShapeError("apply_mask: mask count does not match row count");
  }
  Matrix<T> out = rows;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const auto& m = masks[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(m.size()) != rows.cols()) throw ShapeError("apply_mask: mask width mismatch");
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (m[static_cast<std::size_t>(j)] == 0) out(i, j) = T(0);
    }
  }
  return out;
}

MaskingOptions masking_options(const Config& config) {
  MaskingOptions o;
  o.enabled = config.use_masking;
  o.strategy = config.mask_strategy;
  o.depth_max = config.depth_max;
  o.clip = config.mask_ratio_clip;
  o.fixed_ratio = config.random_mask_ratio;
  return o;
}

template <typename T>
nn::FeatureMap<T> sample_image_mask(const nn::FeatureMap<T>& image, double ratio, int patch, nn::Rng& rng) {
  if (patch <= 0) throw InvalidInput("sample_image_mask: patch must be positive");
  g_mask_calls.fetch_add(1, std::memory_order_relaxed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nn::FeatureMap<T> out = image;
  for (int py = 0; py < image.height; py += patch) {
    for (int px = 0; px < image.width; px += patch) {
      if (!(u(rng) < ratio)) continue;
      for (int y = py; y < std::min(py + patch, image.height); ++y) {
        for (int x = px; x < std::min(px + patch, image.width); ++x) {
          out.data.row(static_cast<Eigen::Index>(y) * image.width + x).setZero();
        }
      }
    }
  }
  return out;
}

template GroupedQueries<float> group_queries<float>(const Matrix<float>&, std::span<const double>, double);
template GroupedQueries<double> group_queries<double>(const Matrix<double>&, std::span<const double>, double);
template GroupedQueries<float> group_by_flags<float>(const Matrix<float>&, std::span<const int>);
template GroupedQueries<double> group_by_flags<double>(const Matrix<double>&, std::span<const int>);
template Matrix<float> apply_mask<float>(const Matrix<float>&, const std::vector<std::vector<std::uint8_t>>&);
template Matrix<double> apply_mask<double>(const Matrix<double>&, const std::vector<std::vector<std::uint8_t>>&);
template nn::FeatureMap<float> sample_image_mask<float>(const nn::FeatureMap<float>&, double, int, nn::Rng&);
template nn::FeatureMap<double> sample_image_mask<double>(const nn::FeatureMap<double>&, double, int, nn::Rng&);

}  // namespace maskdet::occlusion
