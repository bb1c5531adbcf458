#pragma once

#include <string>
#include <utility>

#include "maskdet/nn/tensor.hpp"

namespace maskdet::nn {

// Every layer keeps only its parameters. forward() returns what backward()
// needs in an explicit cache so several forward passes can coexist.

template <typename T>
class Linear {
 public:
  Linear() = default;
  /// Glorot-uniform weights scaled by `gain`; zero bias.
  Linear(int in, int out, Rng& rng, double gain = 1.0);

  Matrix<T> forward(const Matrix<T>& x) const;
  /// Accumulates parameter gradients and returns dL/dx.
  Matrix<T> backward(const Matrix<T>& x, const Matrix<T>& dy);

  int in_features() const { return static_cast<int>(weight.value.rows()); }
  int out_features() const { return static_cast<int>(weight.value.cols()); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  Parameter<T> weight;
  Parameter<T> bias;
};

template <typename T>
Matrix<T> relu(const Matrix<T>& x);
/// dy masked by x > 0.
template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& dy);

/// Normalises every row over its columns.
template <typename T>
class LayerNorm {
 public:
  struct Cache {
    Matrix<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
  };

  LayerNorm() = default;
  explicit LayerNorm(int features);

  Matrix<T> forward(const Matrix<T>& x, Cache* cache) const;
  Matrix<T> backward(const Matrix<T>& dy, const Cache& cache);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }

  Parameter<T> gamma;
  Parameter<T> beta;
  T eps = T(1e-5);
};

/// Normalises every column over the rows of the batch. Running statistics
/// are used in evaluation mode.
template <typename T>
class BatchNorm {
 public:
  struct Cache {
    Matrix<T> xhat;
    RowVector<T> inv_std;
    bool training = true;
  };

  BatchNorm() = default;
  explicit BatchNorm(int features);

  /// Training mode updates the running statistics.
  Matrix<T> forward(const Matrix<T>& x, bool training, Cache* cache);
  Matrix<T> backward(const Matrix<T>& dy, const Cache& cache);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
  template <typename F>
  void visit_buffers(const std::string& prefix, F&& f) {
    f(prefix + ".running_mean", running_mean);
    f(prefix + ".running_var", running_var);
  }

  Parameter<T> gamma;
  Parameter<T> beta;
  Matrix<T> running_mean;
  Matrix<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

/// 2-D convolution over channels-last feature maps via im2col.
template <typename T>
class Conv2d {
 public:
  struct Cache {
    Matrix<T> columns;
    int in_height = 0;
    int in_width = 0;
  };

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, Rng& rng);

  FeatureMap<T> forward(const FeatureMap<T>& x, Cache* cache) const;
  /// Returns dL/dx; pass need_input_grad = false for the first layer.
  FeatureMap<T> backward(const FeatureMap<T>& dy, const Cache& cache, bool need_input_grad = true);

  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  Parameter<T> weight;  // (kernel*kernel*in) x out
  Parameter<T> bias;

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  int padding_ = 0;
};

/// 1-D convolution, stride 1, "same" zero padding. Input rows are
/// (signal, position) pairs: row n*length + t, one column per channel.
template <typename T>
class Conv1d {
 public:
  struct Cache {
    Matrix<T> columns;
  };

  Conv1d() = default;
  Conv1d(int in_channels, int out_channels, int kernel, Rng& rng);

  Matrix<T> forward(const Matrix<T>& x, int length, Cache* cache) const;
  Matrix<T> backward(const Matrix<T>& dy, int length, const Cache& cache);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  Parameter<T> weight;  // (kernel*in) x out
  Parameter<T> bias;

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
};

/// Single-head scaled dot-product attention with input and output projections.
template <typename T>
class Attention {
 public:
  struct Cache {
    Matrix<T> xq;
    Matrix<T> xkv;
    Matrix<T> q;
    Matrix<T> k;
    Matrix<T> v;
    Matrix<T> attn;
    Matrix<T> context;
  };

  Attention() = default;
  Attention(int dim, Rng& rng);

  Matrix<T> forward(const Matrix<T>& xq, const Matrix<T>& xkv, Cache* cache) const;
  /// Returns (dL/dxq, dL/dxkv).
  std::pair<Matrix<T>, Matrix<T>> backward(const Matrix<T>& dy, const Cache& cache);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    wq.visit(prefix + ".q", f);
    wk.visit(prefix + ".k", f);
    wv.visit(prefix + ".v", f);
    wo.visit(prefix + ".out", f);
  }

  Linear<T> wq, wk, wv, wo;
};

/// Linear -> ReLU -> Linear.
template <typename T>
class Mlp {
 public:
  struct Cache {
    Matrix<T> x;
    Matrix<T> hidden_pre;
  };

  Mlp() = default;
  Mlp(int in, int hidden, int out, Rng& rng, double out_gain = 1.0);

  Matrix<T> forward(const Matrix<T>& x, Cache* cache) const;
  Matrix<T> backward(const Matrix<T>& dy, const Cache& cache);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    fc1.visit(prefix + ".fc1", f);
    fc2.visit(prefix + ".fc2", f);
  }

  Linear<T> fc1, fc2;
};

}  // namespace maskdet::nn
