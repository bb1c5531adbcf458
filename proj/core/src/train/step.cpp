#include "maskdet/train/step.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "maskdet/core/error.hpp"
#include "maskdet/occlusion/image_mask.hpp"
#include "maskdet/occlusion/masking.hpp"

namespace maskdet::train {

void MaskStats::merge(const MaskStats& o) {
  ratio_sum += o.ratio_sum;
  ratio_count += o.ratio_count;
  zeros += o.zeros;
  entries += o.entries;
}

void OcclusionStats::merge(const OcclusionStats& o) {
  correct += o.correct;
  total += o.total;
}

namespace {

template <typename T>
bool probe_finite(const model::HeadOutput<T>& h) {
  return h.class_logits.allFinite() && h.box2d.allFinite() && h.depth.allFinite() && h.dims.allFinite() &&
         h.orientation.allFinite() && h.center_offset.allFinite();
}

}  // namespace

template <typename T>
StepResult train_step(model::Network<T>& net, std::span<const Sample* const> batch, std::span<nn::Rng> rngs,
                      const StepOptions& options) {
  const Config& cfg = net.config();
  const std::size_t nb = batch.size();
  if (rngs.size() != nb) throw InvalidInput("train_step: one random state per sample is required");
  if ((options.frozen_depths && options.frozen_depths->size() != nb) ||
      (options.fixed_matches && options.fixed_matches->size() != nb) ||
      (options.fixed_flags && options.fixed_flags->size() != nb)) {
    throw InvalidInput("train_step: fixed step inputs do not cover the batch");
  }
  const bool image_masking = cfg.use_masking && cfg.mask_strategy == MaskStrategy::Image;
  const MatchCostWeights cost_weights = MatchCostWeights::from(cfg);

  StepResult result;
  std::vector<std::vector<LabelTarget>> targets(nb);
  std::vector<typename model::Backbone<T>::Cache> backbone_cache(nb);
  std::vector<typename model::OcclusionClassifier<T>::Cache> occ_cache(nb);
  std::vector<Matrix<T>> occ_logits(nb);
  std::vector<Matrix<T>> clean(nb);
  std::vector<occlusion::GroupedQueries<T>> groups;
  groups.reserve(nb);
  result.depths.resize(nb);
  result.matches.resize(nb);
  result.flags.resize(nb);

  for (std::size_t b = 0; b < nb; ++b) {
    const Sample& s = *batch[b];
    const auto labels = detection_targets(s.labels);
    targets[b] = make_targets(labels, s.intrinsics, cfg.image_width, cfg.image_height);
    const nn::FeatureMap<T> pixels = model::image_to_features<T>(s.image);
    Matrix<T> q;
    if (image_masking) {
      clean[b] = net.backbone.forward(pixels, nullptr);
      const auto masked = occlusion::sample_image_mask(pixels, cfg.image_mask_ratio, cfg.image_mask_patch, rngs[b]);
      q = net.backbone.forward(masked, &backbone_cache[b]);
    } else {
      q = net.backbone.forward(pixels, &backbone_cache[b]);
    }
    occ_logits[b] = net.occlusion.logits(q, &occ_cache[b]);

    const auto probe = model::decode_head(net.head.forward(q, nullptr), model::depth_scale(s.intrinsics, cfg.image_height));
    if (!options.fixed_matches && !probe_finite(probe)) {
      // Diverged weights: report a non-finite loss so the caller can abort with the batch.
      result.loss.l_occ = std::numeric_limits<double>::quiet_NaN();
      return result;
    }
    result.matches[b] = options.fixed_matches ? (*options.fixed_matches)[b]
                                              : hungarian_match(probe, targets[b], cost_weights);
    const MatchResult& match = result.matches[b];
    if (options.frozen_depths) {
      result.depths[b] = (*options.frozen_depths)[b];
    } else {
      result.depths[b].resize(static_cast<std::size_t>(q.rows()));
      for (Eigen::Index i = 0; i < q.rows(); ++i) result.depths[b][static_cast<std::size_t>(i)] = probe.depth(i, 0);
    }

    const int k = static_cast<int>(q.rows());
    const std::vector<int> label_of = match.label_of_query(k);
    std::vector<int> flags(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < k; ++i) {
      const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(occ_logits[b](i, 0))));
      const bool predicted = prob >= cfg.occlusion_threshold;
      const int g = label_of[static_cast<std::size_t>(i)];
      if (g >= 0) {
        const int truth = targets[b][static_cast<std::size_t>(g)].occluded;
        result.occlusion.total += 1;
        result.occlusion.correct += static_cast<int>(predicted) == truth ? 1 : 0;
        flags[static_cast<std::size_t>(i)] = truth;
      } else {
        flags[static_cast<std::size_t>(i)] = predicted ? 1 : 0;
      }
    }
    if (!cfg.use_grouping) std::fill(flags.begin(), flags.end(), 0);
    if (options.fixed_flags) flags = (*options.fixed_flags)[b];
    groups.push_back(occlusion::group_by_flags<T>(q, flags));
    result.flags[b] = std::move(flags);
  }

  // Masking and completion over the whole batch.
  occlusion::MaskingOptions mopts = occlusion::masking_options(cfg);
  if (image_masking) mopts.enabled = false;
  typename model::CompletionNet<T>::Cache comp_cache;
  Matrix<T> stacked_masked;
  auto complete = [&](const Matrix<T>& rows) -> Matrix<T> {
    stacked_masked = rows;
    if (!cfg.use_completion) return rows;
    return net.completion.forward(rows, true, &comp_cache);
  };
  auto routes = occlusion::route_training_batch<T>(groups, result.depths, complete, mopts, rngs);

  Eigen::Index total_rows = 0;
  for (const auto& r : routes) total_rows += r.completed.rows();
  const Eigen::Index dim = cfg.query_dim;
  Matrix<T> stacked_completed(total_rows, dim);
  Matrix<T> stacked_target(total_rows, dim);
  {
    Eigen::Index at = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const auto n = routes[b].completed.rows();
      if (n == 0) continue;
      stacked_completed.middleRows(at, n) = routes[b].completed;
      if (image_masking) {
        for (Eigen::Index i = 0; i < n; ++i) {
          stacked_target.row(at + i) = clean[b].row(groups[b].non_occluded_index[static_cast<std::size_t>(i)]);
        }
      } else {
        stacked_target.middleRows(at, n) = groups[b].non_occluded;
      }
      at += n;
    }
  }
  for (const auto& r : routes) {
    for (std::size_t i = 0; i < r.spec.masks.size(); ++i) {
      result.mask.ratio_sum += r.spec.ratio[i];
      result.mask.ratio_count += 1;
      for (auto m : r.spec.masks[i]) result.mask.zeros += m == 0 ? 1 : 0;
      result.mask.entries += r.spec.masks[i].size();
    }
  }

  double l_com = 0.0;
  Matrix<T> dcom;
  if (cfg.use_completion) {
    l_com = completion_loss<T>(stacked_target, stacked_completed, cfg.smooth_l1_beta, &dcom);
    result.completion_error = l_com;
    result.identity_error = completion_loss<T>(stacked_target, stacked_masked, cfg.smooth_l1_beta, nullptr);
  } else {
    dcom = Matrix<T>::Zero(total_rows, dim);
  }

  // Head with gradient on the recombined queries.
  std::vector<typename model::DetectionHead<T>::Cache> head_cache(nb);
  std::vector<model::HeadRaw<T>> raw(nb);
  std::vector<model::HeadOutput<T>> out(nb);
  std::vector<HeadSupervision<T>> sup(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    raw[b] = net.head.forward(routes[b].queries, &head_cache[b]);
    out[b] = model::decode_head(raw[b], model::depth_scale(batch[b]->intrinsics, cfg.image_height));
    sup[b] = {&raw[b], &out[b], &result.matches[b], targets[b]};
  }
  std::array<double, kNumBaseTerms> term_weight{};
  for (int t = 0; t < kNumBaseTerms; ++t) term_weight[t] = cfg.loss_weight_base * options.base_term_weight[t];
  std::vector<model::HeadRaw<T>> draw;
  std::array<double, kNumBaseTerms> base = base_loss<T>(sup, cfg, term_weight, &draw);
  for (int t = 0; t < kNumBaseTerms; ++t) base[t] *= options.base_term_weight[t];

  // Occlusion loss over matched queries of the whole batch.
  double l_occ = 0.0;
  std::vector<double> dlogits;
  std::vector<std::pair<std::size_t, int>> occ_index;
  if (cfg.use_grouping) {
    std::vector<double> logits;
    std::vector<int> occ_targets;
    for (std::size_t b = 0; b < nb; ++b) {
      for (const auto& [q, g] : result.matches[b].pairs) {
        logits.push_back(occ_logits[b](q, 0));
        occ_targets.push_back(targets[b][static_cast<std::size_t>(g)].occluded);
        occ_index.emplace_back(b, q);
      }
    }
    l_occ = bce_with_logits(logits, occ_targets, &dlogits);
  }
  result.loss = LossBundle::combine(l_occ, l_com, base, cfg);

  // Backward.
  const T w_com = static_cast<T>(cfg.loss_weight_com);
  std::vector<Matrix<T>> dq(nb);
  Matrix<T> dcompleted = w_com * dcom;
  {
    Eigen::Index at = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const Matrix<T> dhead = net.head.backward(draw[b], head_cache[b]);
      dq[b] = Matrix<T>::Zero(dhead.rows(), dhead.cols());
      for (int idx : groups[b].occluded_index) dq[b].row(idx) = dhead.row(idx);
      const auto& no = groups[b].non_occluded_index;
      for (std::size_t i = 0; i < no.size(); ++i) dcompleted.row(at + static_cast<Eigen::Index>(i)) += dhead.row(no[i]);
      at += static_cast<Eigen::Index>(no.size());
    }
  }
  const Matrix<T> dmasked = cfg.use_completion && total_rows > 0 ? net.completion.backward(dcompleted, comp_cache)
                                                                  : dcompleted;
  {
    Eigen::Index at = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& no = groups[b].non_occluded_index;
      const auto& masks = routes[b].spec.masks;
      for (std::size_t i = 0; i < no.size(); ++i) {
        const Eigen::Index r = at + static_cast<Eigen::Index>(i);
        auto row = dq[b].row(no[i]);
        for (Eigen::Index j = 0; j < dim; ++j) {
          if (masks[i][static_cast<std::size_t>(j)] != 0) row(j) += dmasked(r, j);
        }
        if (cfg.use_completion && !image_masking) row -= w_com * dcom.row(r);
      }
      at += static_cast<Eigen::Index>(no.size());
    }
  }
  if (cfg.use_grouping) {
    std::vector<Matrix<T>> dl(nb);
    for (std::size_t b = 0; b < nb; ++b) dl[b] = Matrix<T>::Zero(occ_logits[b].rows(), 1);
    for (std::size_t i = 0; i < occ_index.size(); ++i) {
      const auto [b, q] = occ_index[i];
      dl[b](q, 0) += static_cast<T>(cfg.loss_weight_occ * dlogits[i]);
    }
    for (std::size_t b = 0; b < nb; ++b) dq[b] += net.occlusion.backward(dl[b], occ_cache[b]);
  }
  for (std::size_t b = 0; b < nb; ++b) net.backbone.backward(dq[b], backbone_cache[b]);
  return result;
}

template StepResult train_step<float>(model::Network<float>&, std::span<const Sample* const>, std::span<nn::Rng>,
                                      const StepOptions&);
template StepResult train_step<double>(model::Network<double>&, std::span<const Sample* const>, std::span<nn::Rng>,
                                       const StepOptions&);

}  // namespace maskdet::train
