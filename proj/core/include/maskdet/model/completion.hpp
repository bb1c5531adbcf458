#pragma once

#include <array>

#include "maskdet/core/config.hpp"
#include "maskdet/nn/layers.hpp"

namespace maskdet::model {

using nn::Matrix;

/// Hourglass completion network: three conv-bn-relu blocks and one conv-bn
/// block. In the Signal layout each query is a one-channel signal of length C
/// and the channel widths go 1 -> width -> bottleneck -> width -> 1. In the
/// Channel layout each query is a length-1 signal with C channels and the
/// widths go C -> C/2 -> C/4 -> C/2 -> C (kernel 1).
template <typename T>
class CompletionNet {
 public:
  static constexpr int kBlocks = 4;

  struct Cache {
    std::array<typename nn::Conv1d<T>::Cache, kBlocks> conv;
    std::array<typename nn::BatchNorm<T>::Cache, kBlocks> norm;
    std::array<Matrix<T>, kBlocks - 1> pre_relu;
  };

  CompletionNet() = default;
  CompletionNet(const Config& config, nn::Rng& rng);

  /// queries: N x C. Training mode uses batch statistics over all N queries.
  Matrix<T> forward(const Matrix<T>& queries, bool training, Cache* cache);
  Matrix<T> backward(const Matrix<T>& dout, const Cache& cache);

  /// Multiply-accumulate count of one query's forward pass.
  std::size_t macs_per_query() const;

  template <typename F>
  void visit(F&& f) {
    for (int i = 0; i < kBlocks; ++i) {
      convs_[i].visit("completion.conv" + std::to_string(i), f);
      norms_[i].visit("completion.bn" + std::to_string(i), f);
    }
  }
  template <typename F>
  void visit_buffers(F&& f) {
    for (int i = 0; i < kBlocks; ++i) norms_[i].visit_buffers("completion.bn" + std::to_string(i), f);
  }

 private:
  Matrix<T> to_rows(const Matrix<T>& queries) const;
  Matrix<T> from_rows(const Matrix<T>& rows, Eigen::Index n) const;

  int dim_ = 0;
  int length_ = 0;
  std::array<int, kBlocks + 1> widths_{};
  int kernel_ = 1;
  std::array<nn::Conv1d<T>, kBlocks> convs_;
  std::array<nn::BatchNorm<T>, kBlocks> norms_;
};

}  // namespace maskdet::model
