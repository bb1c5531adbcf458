#include "maskdet/model/heads.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "maskdet/core/error.hpp"

namespace maskdet::model {

namespace {

constexpr std::array<int, 6> kBranchWidth{kNumClassLogits, 4, 1, 3, 2, 2};

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

double depth_scale(const CameraIntrinsics& intr, int image_height) {
  return intr.fy * kCarDimsPrior[0] / image_height;
}

template <typename T>
HeadOutput<T> decode_head(const HeadRaw<T>& raw, double depth_scale) {
  HeadOutput<T> out;
  out.class_logits = raw.class_logits;
  out.box2d = raw.box2d.unaryExpr([](T v) { return sigmoid(v); });
  out.depth.resize(raw.depth.rows(), 1);
  for (Eigen::Index i = 0; i < raw.depth.rows(); ++i) {
    out.depth(i, 0) = static_cast<T>(depth_scale) / sigmoid(raw.depth(i, 0));
  }
  out.dims.resize(raw.dims.rows(), 3);
  for (Eigen::Index i = 0; i < raw.dims.rows(); ++i) {
    for (int j = 0; j < 3; ++j) out.dims(i, j) = std::exp(raw.dims(i, j)) * static_cast<T>(kCarDimsPrior[j]);
  }
  out.orientation.resize(raw.orientation.rows(), 2);
  for (Eigen::Index i = 0; i < raw.orientation.rows(); ++i) {
    const T n = std::sqrt(raw.orientation.row(i).squaredNorm() + T(1e-12));
    out.orientation.row(i) = raw.orientation.row(i) / n;
  }
  out.center_offset = raw.center;
  return out;
}

template <typename T>
Matrix<T> car_probability(const Matrix<T>& class_logits) {
  Matrix<T> p(class_logits.rows(), 1);
  for (Eigen::Index i = 0; i < class_logits.rows(); ++i) {
    p(i, 0) = sigmoid(class_logits(i, 0) - class_logits(i, kNoObject));
  }
  return p;
}

template <typename T>
DetectionHead<T>::DetectionHead(const Config& config, nn::Rng& rng) {
  const int c = config.query_dim;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    branches_[i] = nn::Mlp<T>(c, c, kBranchWidth[i], rng);
  }
  // Keep initial dimension predictions near the prior.
  branches_[3].fc2.weight.value *= T(0.1);

  // Reference points start on a grid matching the image aspect.
  const int k = config.num_queries;
  const double aspect = static_cast<double>(config.image_width) / config.image_height;
  const int rows = std::clamp(static_cast<int>(std::lround(std::sqrt(k / aspect))), 1, k);
  const int cols = (k + rows - 1) / rows;
  reference_.resize(k, 2);
  for (int i = 0; i < k; ++i) {
    const double u = (i % cols + 0.5) / cols;
    const double v = (i / cols + 0.5) / rows;
    reference_.value(i, 0) = static_cast<T>(std::log(u / (1.0 - u)));
    reference_.value(i, 1) = static_cast<T>(std::log(v / (1.0 - v)));
  }
}

template <typename T>
HeadRaw<T> DetectionHead<T>::forward(const Matrix<T>& queries, Cache* cache) const {
  HeadRaw<T> raw;
  std::array<Matrix<T>*, 6> outs{&raw.class_logits, &raw.box2d,       &raw.depth,
                                 &raw.dims,         &raw.orientation, &raw.center};
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    *outs[i] = branches_[i].forward(queries, cache ? &cache->branch[i] : nullptr);
  }
  if (queries.rows() != reference_.value.rows()) {
    throw ShapeError("detection head expects " + std::to_string(reference_.value.rows()) + " queries, got " +
                     std::to_string(queries.rows()));
  }
  raw.box2d.leftCols(2) += reference_.value;
  return raw;
}

template <typename T>
Matrix<T> DetectionHead<T>::backward(const HeadRaw<T>& draw, const Cache& cache) {
  std::array<const Matrix<T>*, 6> ds{&draw.class_logits, &draw.box2d,       &draw.depth,
                                     &draw.dims,         &draw.orientation, &draw.center};
  reference_.grad += draw.box2d.leftCols(2);
  Matrix<T> dq;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    Matrix<T> d = branches_[i].backward(*ds[i], cache.branch[i]);
    if (dq.size() == 0) {
      dq = std::move(d);
    } else {
      dq += d;
    }
  }
  return dq;
}

template <typename T>
OcclusionClassifier<T>::OcclusionClassifier(const Config& config, nn::Rng& rng)
    : mlp_(config.query_dim, config.query_dim, 1, rng, 0.0) {}

template <typename T>
Matrix<T> OcclusionClassifier<T>::logits(const Matrix<T>& queries, Cache* cache) const {
  return mlp_.forward(queries, cache);
}

template <typename T>
Matrix<T> OcclusionClassifier<T>::probabilities(const Matrix<T>& queries) const {
  return logits(queries, nullptr).unaryExpr([](T v) { return sigmoid(v); });
}

template <typename T>
Matrix<T> OcclusionClassifier<T>::backward(const Matrix<T>& dlogits, const Cache& cache) {
  return mlp_.backward(dlogits, cache);
}

template HeadOutput<float> decode_head<float>(const HeadRaw<float>&, double);
template HeadOutput<double> decode_head<double>(const HeadRaw<double>&, double);
template Matrix<float> car_probability<float>(const Matrix<float>&);
template Matrix<double> car_probability<double>(const Matrix<double>&);
template class DetectionHead<float>;
template class DetectionHead<double>;
template class OcclusionClassifier<float>;
template class OcclusionClassifier<double>;

}  // namespace maskdet::model
