#include "maskdet/model/completion.hpp"

#include "maskdet/core/error.hpp"

namespace maskdet::model {

template <typename T>
CompletionNet<T>::CompletionNet(const Config& config, nn::Rng& rng) : dim_(config.query_dim) {
  if (config.completion_layout == CompletionLayout::Signal) {
    length_ = dim_;
    kernel_ = config.completion_kernel;
    widths_ = {1, config.completion_width, config.completion_bottleneck, config.completion_width, 1};
  } else {
    length_ = 1;
    kernel_ = 1;
    widths_ = {dim_, dim_ / 2, dim_ / 4, dim_ / 2, dim_};
  }
  for (int i = 0; i < kBlocks; ++i) {
    convs_[i] = nn::Conv1d<T>(widths_[i], widths_[i + 1], kernel_, rng);
    norms_[i] = nn::BatchNorm<T>(widths_[i + 1]);
  }
}

template <typename T>
Matrix<T> CompletionNet<T>::to_rows(const Matrix<T>& queries) const {
  if (queries.cols() != dim_) {
    throw ShapeError("completion expects " + std::to_string(dim_) + " channels, got " +
                     std::to_string(queries.cols()));
  }
  if (length_ == 1) return queries;
  // Row-major storage: query n, channel t lands on row n*C + t.
  return Eigen::Map<const Matrix<T>>(queries.data(), queries.rows() * dim_, 1);
}

template <typename T>
Matrix<T> CompletionNet<T>::from_rows(const Matrix<T>& rows, Eigen::Index n) const {
  if (length_ == 1) return rows;
  return Eigen::Map<const Matrix<T>>(rows.data(), n, dim_);
}

template <typename T>
Matrix<T> CompletionNet<T>::forward(const Matrix<T>& queries, bool training, Cache* cache) {
  const Eigen::Index n = queries.rows();
  if (n == 0) return Matrix<T>(0, dim_);
  Matrix<T> x = to_rows(queries);
  for (int i = 0; i < kBlocks; ++i) {
    Matrix<T> y = convs_[i].forward(x, length_, cache ? &cache->conv[i] : nullptr);
    y = norms_[i].forward(y, training, cache ? &cache->norm[i] : nullptr);
    if (i + 1 < kBlocks) {
      x = nn::relu<T>(y);
      if (cache) cache->pre_relu[i] = std::move(y);
    } else {
      x = std::move(y);
    }
  }
  return from_rows(x, n);
}

template <typename T>
Matrix<T> CompletionNet<T>::backward(const Matrix<T>& dout, const Cache& cache) {
  const Eigen::Index n = dout.rows();
  if (n == 0) return Matrix<T>(0, dim_);
  Matrix<T> d = to_rows(dout);
  for (int i = kBlocks; i-- > 0;) {
    if (i + 1 < kBlocks) d = nn::relu_backward<T>(cache.pre_relu[i], d);
    d = norms_[i].backward(d, cache.norm[i]);
    d = convs_[i].backward(d, length_, cache.conv[i]);
  }
  return from_rows(d, n);
}

template <typename T>
std::size_t CompletionNet<T>::macs_per_query() const {
  std::size_t macs = 0;
  for (int i = 0; i < kBlocks; ++i) {
    macs += static_cast<std::size_t>(length_) * kernel_ * widths_[i] * widths_[i + 1];
  }
  return macs;
}

template class CompletionNet<float>;
template class CompletionNet<double>;

}  // namespace maskdet::model
