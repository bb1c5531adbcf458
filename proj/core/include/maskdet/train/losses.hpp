#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "maskdet/core/config.hpp"
#include "maskdet/model/heads.hpp"
#include "maskdet/train/matching.hpp"

namespace maskdet::train {

using nn::Matrix;

enum BaseTerm { kClassTerm, kBox2dTerm, kDepthTerm, kDimsTerm, kOrientationTerm, kCenterTerm, kNumBaseTerms };

const char* base_term_name(int term);

/// Every loss term of one step. total = w_occ l_occ + w_com l_com + w_base l_base
/// and l_base is the plain sum of the components.
struct LossBundle {
  double l_occ = 0.0;
  double l_com = 0.0;
  std::array<double, kNumBaseTerms> base{};
  double l_base = 0.0;
  double total = 0.0;

  static LossBundle combine(double l_occ, double l_com, const std::array<double, kNumBaseTerms>& base,
                            const Config& config);
  bool finite() const;
};

double smooth_l1(double x, double beta);
double smooth_l1_grad(double x, double beta);

/// Mean binary cross-entropy of probabilities against {0,1} targets.
/// Probabilities are clamped to [1e-12, 1 - 1e-12].
double binary_cross_entropy(std::span<const double> probs, std::span<const int> targets);

/// Mean binary cross-entropy over matched queries only; the target of query q
/// is the occlusion flag of its matched label. Zero (with a warning) when
/// nothing is matched.
double occlusion_loss(std::span<const double> probs, const MatchResult& match,
                      std::span<const LabelTarget> targets);

/// Mean binary cross-entropy computed from logits; `dlogits` receives the
/// gradient of the mean when non-null.
double bce_with_logits(std::span<const double> logits, std::span<const int> targets,
                       std::vector<double>* dlogits);

/// Mean SmoothL1 over every element of (completed - original). `dcompleted`
/// receives the gradient w.r.t. `completed`; the gradient w.r.t. `original`
/// is its negation.
template <typename T>
double completion_loss(const Matrix<T>& original, const Matrix<T>& completed, double beta,
                       Matrix<T>* dcompleted);

/// One image's head outputs and supervision.
template <typename T>
struct HeadSupervision {
  const model::HeadRaw<T>* raw = nullptr;
  const model::HeadOutput<T>* out = nullptr;
  const MatchResult* match = nullptr;
  std::span<const LabelTarget> targets;
};

/// Detection loss components over a batch. The class term is a weighted
/// cross-entropy over all queries (unmatched target no-object, weight
/// no_object_weight) normalised by the weight sum; regression terms are L1
/// sums per query averaged over all matched queries. When `grads` is non-null
/// it receives dL/d(raw head output) for L = sum_t term_weight[t] * term_t.
template <typename T>
std::array<double, kNumBaseTerms> base_loss(std::span<const HeadSupervision<T>> batch, const Config& config,
                                            const std::array<double, kNumBaseTerms>& term_weight,
                                            std::vector<model::HeadRaw<T>>* grads);

/// Single-image convenience form without gradients.
template <typename T>
std::array<double, kNumBaseTerms> base_loss(const model::HeadOutput<T>& out, const MatchResult& match,
                                            std::span<const LabelTarget> targets, const Config& config);

}  // namespace maskdet::train
