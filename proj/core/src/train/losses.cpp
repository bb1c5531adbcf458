#include "maskdet/train/losses.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "maskdet/core/error.hpp"

namespace maskdet::train {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

template <typename T>
model::HeadRaw<T> zeros_like(const model::HeadRaw<T>& r) {
  model::HeadRaw<T> z;
  z.class_logits = Matrix<T>::Zero(r.class_logits.rows(), r.class_logits.cols());
  z.box2d = Matrix<T>::Zero(r.box2d.rows(), r.box2d.cols());
  z.depth = Matrix<T>::Zero(r.depth.rows(), r.depth.cols());
  z.dims = Matrix<T>::Zero(r.dims.rows(), r.dims.cols());
  z.orientation = Matrix<T>::Zero(r.orientation.rows(), r.orientation.cols());
  z.center = Matrix<T>::Zero(r.center.rows(), r.center.cols());
  return z;
}

}  // namespace

const char* base_term_name(int term) {
  static constexpr std::array<const char*, kNumBaseTerms> names{"class", "box2d", "depth",
                                                                "dims",  "orientation", "center"};
  return names.at(static_cast<std::size_t>(term));
}

LossBundle LossBundle::combine(double l_occ, double l_com, const std::array<double, kNumBaseTerms>& base,
                               const Config& config) {
  LossBundle b;
  b.l_occ = l_occ;
  b.l_com = l_com;
  b.base = base;
  for (double v : base) b.l_base += v;
  b.total = config.loss_weight_occ * l_occ + config.loss_weight_com * l_com + config.loss_weight_base * b.l_base;
  return b;
}

bool LossBundle::finite() const {
  if (!std::isfinite(l_occ) || !std::isfinite(l_com) || !std::isfinite(l_base) || !std::isfinite(total)) {
    return false;
  }
  return std::all_of(base.begin(), base.end(), [](double v) { return std::isfinite(v); });
}

double smooth_l1(double x, double beta) {
  const double a = std::abs(x);
  return a < beta ? 0.5 * x * x / beta : a - 0.5 * beta;
}

double smooth_l1_grad(double x, double beta) { return std::abs(x) < beta ? x / beta : sign(x); }

double binary_cross_entropy(std::span<const double> probs, std::span<const int> targets) {
  if (probs.size() != targets.size()) throw InvalidInput("binary_cross_entropy: size mismatch");
  if (probs.empty()) return 0.0;
  constexpr double eps = 1e-12;
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], eps, 1.0 - eps);
    sum += targets[i] != 0 ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.size());
}

double occlusion_loss(std::span<const double> probs, const MatchResult& match,
                      std::span<const LabelTarget> targets) {
  if (match.pairs.empty()) {
    spdlog::warn("occlusion loss: no matched queries, term set to 0");
    return 0.0;
  }
  std::vector<double> p;
  std::vector<int> t;
  for (const auto& [q, g] : match.pairs) {
    p.push_back(probs[static_cast<std::size_t>(q)]);
    t.push_back(targets[static_cast<std::size_t>(g)].occluded);
  }
  return binary_cross_entropy(p, t);
}

double bce_with_logits(std::span<const double> logits, std::span<const int> targets,
                       std::vector<double>* dlogits) {
  if (logits.size() != targets.size()) throw InvalidInput("bce_with_logits: size mismatch");
  if (dlogits) dlogits->assign(logits.size(), 0.0);
  if (logits.empty()) return 0.0;
  const double n = static_cast<double>(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    sum += targets[i] != 0 ? softplus(-x) : softplus(x);
    if (dlogits) (*dlogits)[i] = (sigmoid(x) - (targets[i] != 0 ? 1.0 : 0.0)) / n;
  }
  return sum / n;
}

template <typename T>
double completion_loss(const Matrix<T>& original, const Matrix<T>& completed, double beta,
                       Matrix<T>* dcompleted) {
  if (original.rows() != completed.rows() || original.cols() != completed.cols()) {
    throw ShapeError("completion_loss: shape mismatch");
  }
  if (dcompleted) dcompleted->setZero(completed.rows(), completed.cols());
  if (completed.size() == 0) return 0.0;
  const double n = static_cast<double>(completed.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < completed.size(); ++i) {
    const double r = static_cast<double>(completed.data()[i]) - static_cast<double>(original.data()[i]);
    sum += smooth_l1(r, beta);
    if (dcompleted) dcompleted->data()[i] = static_cast<T>(smooth_l1_grad(r, beta) / n);
  }
  return sum / n;
}

template <typename T>
std::array<double, kNumBaseTerms> base_loss(std::span<const HeadSupervision<T>> batch, const Config& config,
                                            const std::array<double, kNumBaseTerms>& term_weight,
                                            std::vector<model::HeadRaw<T>>* grads) {
  std::array<double, kNumBaseTerms> loss{};
  double weight_sum = 0.0;
  double matched = 0.0;
  for (const auto& item : batch) {
    const auto k = item.out->size();
    weight_sum += static_cast<double>(item.match->pairs.size()) +
                  config.no_object_weight * static_cast<double>(k - static_cast<Eigen::Index>(item.match->pairs.size()));
    matched += static_cast<double>(item.match->pairs.size());
  }
  if (grads) {
    grads->clear();
    for (const auto& item : batch) grads->push_back(zeros_like(*item.raw));
  }
  if (batch.empty()) return loss;
  const double dmax = config.depth_max;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& item = batch[b];
    const auto& out = *item.out;
    model::HeadRaw<T>* g = grads ? &(*grads)[b] : nullptr;
    const auto k = static_cast<int>(out.size());
    const std::vector<int> label_of = item.match->label_of_query(k);

    // Class term over every query.
    for (int q = 0; q < k; ++q) {
      const bool is_obj = label_of[static_cast<std::size_t>(q)] >= 0;
      const double w = is_obj ? 1.0 : config.no_object_weight;
      const double l0 = out.class_logits(q, 0);
      const double l1 = out.class_logits(q, model::kNoObject);
      const double target_logit = is_obj ? l0 : l1;
      const double other = is_obj ? l1 : l0;
      const double ce = softplus(other - target_logit);
      loss[kClassTerm] += w * ce / weight_sum;
      if (g) {
        const double p_other = sigmoid(other - target_logit);
        const double scale = term_weight[kClassTerm] * w / weight_sum;
        const int ti = is_obj ? 0 : model::kNoObject;
        const int oi = is_obj ? model::kNoObject : 0;
        g->class_logits(q, ti) += static_cast<T>(-p_other * scale);
        g->class_logits(q, oi) += static_cast<T>(p_other * scale);
      }
    }
    if (matched == 0.0) continue;

    for (const auto& [q, gi] : item.match->pairs) {
      const LabelTarget& t = item.targets[static_cast<std::size_t>(gi)];
      for (int j = 0; j < 4; ++j) {
        const double v = out.box2d(q, j);
        const double r = v - t.box2d[j];
        loss[kBox2dTerm] += std::abs(r) / matched;
        if (g) g->box2d(q, j) += static_cast<T>(term_weight[kBox2dTerm] * sign(r) * v * (1.0 - v) / matched);
      }
      {
        const double d = out.depth(q, 0);
        const double r = (d - t.depth) / dmax;
        loss[kDepthTerm] += std::abs(r) / matched;
        // d = scale / sigmoid(raw): d(d)/d(raw) = -d (1 - sigmoid(raw)).
        if (g) {
          const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(item.raw->depth(q, 0))));
          g->depth(q, 0) += static_cast<T>(-term_weight[kDepthTerm] * sign(r) / dmax * d * (1.0 - s) / matched);
        }
      }
      for (int j = 0; j < 3; ++j) {
        const double v = out.dims(q, j);
        const double r = v - t.dims[j];
        loss[kDimsTerm] += std::abs(r) / matched;
        if (g) g->dims(q, j) += static_cast<T>(term_weight[kDimsTerm] * sign(r) * v / matched);
      }
      {
        const double r0 = item.raw->orientation(q, 0);
        const double r1 = item.raw->orientation(q, 1);
        const double n = std::sqrt(r0 * r0 + r1 * r1 + 1e-12);
        const double o0 = r0 / n;
        const double o1 = r1 / n;
        const double s0 = sign(o0 - t.orientation[0]);
        const double s1 = sign(o1 - t.orientation[1]);
        loss[kOrientationTerm] += (std::abs(o0 - t.orientation[0]) + std::abs(o1 - t.orientation[1])) / matched;
        if (g) {
          // d(r/n)/dr = I/n - r r^T / n^3
          const double scale = term_weight[kOrientationTerm] / matched;
          const double dot = s0 * r0 + s1 * r1;
          const double n3 = n * n * n;
          g->orientation(q, 0) += static_cast<T>(scale * (s0 / n - r0 * dot / n3));
          g->orientation(q, 1) += static_cast<T>(scale * (s1 / n - r1 * dot / n3));
        }
      }
      for (int j = 0; j < 2; ++j) {
        const double r = static_cast<double>(out.center_offset(q, j)) - t.center[j];
        loss[kCenterTerm] += std::abs(r) / matched;
        if (g) g->center(q, j) += static_cast<T>(term_weight[kCenterTerm] * sign(r) / matched);
      }
    }
  }
  return loss;
}

template <typename T>
std::array<double, kNumBaseTerms> base_loss(const model::HeadOutput<T>& out, const MatchResult& match,
                                            std::span<const LabelTarget> targets, const Config& config) {
  model::HeadRaw<T> raw;
  raw.orientation = out.orientation;
  HeadSupervision<T> item{&raw, &out, &match, targets};
  std::array<double, kNumBaseTerms> ones;
  ones.fill(1.0);
  return base_loss<T>(std::span<const HeadSupervision<T>>(&item, 1), config, ones, nullptr);
}

#define MASKDET_INSTANTIATE(T)                                                                              \
  template double completion_loss<T>(const Matrix<T>&, const Matrix<T>&, double, Matrix<T>*);              \
  template std::array<double, kNumBaseTerms> base_loss<T>(std::span<const HeadSupervision<T>>,             \
                                                          const Config&,                                   \
                                                          const std::array<double, kNumBaseTerms>&,        \
                                                          std::vector<model::HeadRaw<T>>*);                \
  template std::array<double, kNumBaseTerms> base_loss<T>(const model::HeadOutput<T>&, const MatchResult&, \
                                                          std::span<const LabelTarget>, const Config&);

MASKDET_INSTANTIATE(float)
MASKDET_INSTANTIATE(double)
#undef MASKDET_INSTANTIATE

}  // namespace maskdet::train
