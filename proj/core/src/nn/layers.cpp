#include "maskdet/nn/layers.hpp"

#include <cmath>

namespace maskdet::nn {

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in, int out, Rng& rng, double gain) {
  weight.resize(in, out);
  bias.resize(1, out);
  fill_uniform(weight.value, gain * std::sqrt(6.0 / (in + out)), rng);
}

template <typename T>
Matrix<T> Linear<T>::forward(const Matrix<T>& x) const {
  Matrix<T> y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

template <typename T>
Matrix<T> Linear<T>::backward(const Matrix<T>& x, const Matrix<T>& dy) {
  weight.grad.noalias() += x.transpose() * dy;
  bias.grad += dy.colwise().sum();
  return dy * weight.value.transpose();
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Matrix<T> relu(const Matrix<T>& x) {
  return x.cwiseMax(T(0));
}

template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
  return (x.array() > T(0)).select(dy, T(0));
}

// ---------------------------------------------------------------- LayerNorm

template <typename T>
LayerNorm<T>::LayerNorm(int features) {
  gamma.resize(1, features);
  beta.resize(1, features);
  gamma.value.setOnes();
}

template <typename T>
Matrix<T> LayerNorm<T>::forward(const Matrix<T>& x, Cache* cache) const {
  const auto n = x.cols();
  const Eigen::Matrix<T, Eigen::Dynamic, 1> mean = x.rowwise().mean();
  Matrix<T> centered = x.colwise() - mean;
  const Eigen::Matrix<T, Eigen::Dynamic, 1> var =
      centered.array().square().rowwise().sum() / static_cast<T>(n);
  const Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std = (var.array() + eps).rsqrt();
  Matrix<T> xhat = centered.array().colwise() * inv_std.array();
  Matrix<T> y = xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

template <typename T>
Matrix<T> LayerNorm<T>::backward(const Matrix<T>& dy, const Cache& c) {
  const auto n = static_cast<T>(dy.cols());
  gamma.grad += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  beta.grad += dy.colwise().sum();
  const Matrix<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  const Eigen::Matrix<T, Eigen::Dynamic, 1> sum_d = dxhat.rowwise().sum();
  const Eigen::Matrix<T, Eigen::Dynamic, 1> sum_dx = (dxhat.array() * c.xhat.array()).rowwise().sum();
  Matrix<T> dx = (n * dxhat.array() - (c.xhat.array().colwise() * sum_dx.array())).colwise() -
                 sum_d.array();
  dx.array().colwise() *= c.inv_std.array() / n;
  return dx;
}

// ---------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(int features) {
  gamma.resize(1, features);
  beta.resize(1, features);
  gamma.value.setOnes();
  running_mean = Matrix<T>::Zero(1, features);
  running_var = Matrix<T>::Ones(1, features);
}

template <typename T>
Matrix<T> BatchNorm<T>::forward(const Matrix<T>& x, bool training, Cache* cache) {
  RowVector<T> mean, inv_std;
  if (training) {
    const auto n = x.rows();
    mean = x.colwise().mean();
    const RowVector<T> var = (x.rowwise() - mean).array().square().colwise().sum() / static_cast<T>(n);
    inv_std = (var.array() + eps).rsqrt();
    const T unbias = n > 1 ? static_cast<T>(n) / static_cast<T>(n - 1) : T(1);
    running_mean = (T(1) - momentum) * running_mean + momentum * mean;
    running_var = (T(1) - momentum) * running_var + momentum * unbias * var;
  } else {
    mean = running_mean.row(0);
    inv_std = (running_var.row(0).array() + eps).rsqrt();
  }
  Matrix<T> xhat = (x.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix<T> y = xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
    cache->training = training;
  }
  return y;
}

template <typename T>
Matrix<T> BatchNorm<T>::backward(const Matrix<T>& dy, const Cache& c) {
  gamma.grad += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  beta.grad += dy.colwise().sum();
  const Matrix<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  if (!c.training) return dxhat.array().rowwise() * c.inv_std.array();
  const auto n = static_cast<T>(dy.rows());
  const RowVector<T> sum_d = dxhat.colwise().sum();
  const RowVector<T> sum_dx = (dxhat.array() * c.xhat.array()).colwise().sum();
  Matrix<T> dx = (n * dxhat.array() - (c.xhat.array().rowwise() * sum_dx.array())).rowwise() -
                 sum_d.array();
  dx.array().rowwise() *= c.inv_std.array() / n;
  return dx;
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, Rng& rng)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), padding_(padding) {
  const int fan_in = kernel * kernel * in_channels;
  weight.resize(fan_in, out_channels);
  bias.resize(1, out_channels);
  fill_uniform(weight.value, std::sqrt(6.0 / fan_in), rng);
}

template <typename T>
FeatureMap<T> Conv2d<T>::forward(const FeatureMap<T>& x, Cache* cache) const {
  const int oh = out_size(x.height);
  const int ow = out_size(x.width);
  Matrix<T> cols = Matrix<T>::Zero(static_cast<Eigen::Index>(oh) * ow, kernel_ * kernel_ * in_);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index row = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < kernel_; ++ky) {
        const int iy = oy * stride_ - padding_ + ky;
        if (iy < 0 || iy >= x.height) continue;
        for (int kx = 0; kx < kernel_; ++kx) {
          const int ix = ox * stride_ - padding_ + kx;
          if (ix < 0 || ix >= x.width) continue;
          cols.block(row, (ky * kernel_ + kx) * in_, 1, in_) =
              x.data.row(static_cast<Eigen::Index>(iy) * x.width + ix);
        }
      }
    }
  }
  FeatureMap<T> y{oh, ow, cols * weight.value};
  y.data.rowwise() += bias.value.row(0);
  if (cache) {
    cache->columns = std::move(cols);
    cache->in_height = x.height;
    cache->in_width = x.width;
  }
  return y;
}

template <typename T>
FeatureMap<T> Conv2d<T>::backward(const FeatureMap<T>& dy, const Cache& c, bool need_input_grad) {
  weight.grad.noalias() += c.columns.transpose() * dy.data;
  bias.grad += dy.data.colwise().sum();
  FeatureMap<T> dx{c.in_height, c.in_width, {}};
  if (!need_input_grad) return dx;
  const Matrix<T> dcols = dy.data * weight.value.transpose();
  dx.data = Matrix<T>::Zero(static_cast<Eigen::Index>(c.in_height) * c.in_width, in_);
  for (int oy = 0; oy < dy.height; ++oy) {
    for (int ox = 0; ox < dy.width; ++ox) {
      const Eigen::Index row = static_cast<Eigen::Index>(oy) * dy.width + ox;
      for (int ky = 0; ky < kernel_; ++ky) {
        const int iy = oy * stride_ - padding_ + ky;
        if (iy < 0 || iy >= c.in_height) continue;
        for (int kx = 0; kx < kernel_; ++kx) {
          const int ix = ox * stride_ - padding_ + kx;
          if (ix < 0 || ix >= c.in_width) continue;
          dx.data.row(static_cast<Eigen::Index>(iy) * c.in_width + ix) +=
              dcols.block(row, (ky * kernel_ + kx) * in_, 1, in_);
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Conv1d

template <typename T>
Conv1d<T>::Conv1d(int in_channels, int out_channels, int kernel, Rng& rng)
    : in_(in_channels), out_(out_channels), kernel_(kernel) {
  weight.resize(kernel * in_channels, out_channels);
  bias.resize(1, out_channels);
  fill_uniform(weight.value, std::sqrt(6.0 / (kernel * in_channels)), rng);
}

template <typename T>
Matrix<T> Conv1d<T>::forward(const Matrix<T>& x, int length, Cache* cache) const {
  const Eigen::Index rows = x.rows();
  const Eigen::Index signals = rows / length;
  const int pad = kernel_ / 2;
  Matrix<T> cols = Matrix<T>::Zero(rows, kernel_ * in_);
  for (Eigen::Index n = 0; n < signals; ++n) {
    for (int t = 0; t < length; ++t) {
      for (int k = 0; k < kernel_; ++k) {
        const int src = t - pad + k;
        if (src < 0 || src >= length) continue;
        cols.block(n * length + t, k * in_, 1, in_) = x.row(n * length + src);
      }
    }
  }
  Matrix<T> y = cols * weight.value;
  y.rowwise() += bias.value.row(0);
  if (cache) cache->columns = std::move(cols);
  return y;
}

template <typename T>
Matrix<T> Conv1d<T>::backward(const Matrix<T>& dy, int length, const Cache& c) {
  weight.grad.noalias() += c.columns.transpose() * dy;
  bias.grad += dy.colwise().sum();
  const Matrix<T> dcols = dy * weight.value.transpose();
  const Eigen::Index rows = dy.rows();
  const Eigen::Index signals = rows / length;
  const int pad = kernel_ / 2;
  Matrix<T> dx = Matrix<T>::Zero(rows, in_);
  for (Eigen::Index n = 0; n < signals; ++n) {
    for (int t = 0; t < length; ++t) {
      for (int k = 0; k < kernel_; ++k) {
        const int src = t - pad + k;
        if (src < 0 || src >= length) continue;
        dx.row(n * length + src) += dcols.block(n * length + t, k * in_, 1, in_);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Attention

template <typename T>
Attention<T>::Attention(int dim, Rng& rng)
    : wq(dim, dim, rng), wk(dim, dim, rng), wv(dim, dim, rng), wo(dim, dim, rng) {}

template <typename T>
Matrix<T> Attention<T>::forward(const Matrix<T>& xq, const Matrix<T>& xkv, Cache* cache) const {
  const T scale = T(1) / std::sqrt(static_cast<T>(wq.out_features()));
  Matrix<T> q = wq.forward(xq);
  Matrix<T> k = wk.forward(xkv);
  Matrix<T> v = wv.forward(xkv);
  Matrix<T> scores = (q * k.transpose()) * scale;
  const Eigen::Matrix<T, Eigen::Dynamic, 1> row_max = scores.rowwise().maxCoeff();
  Matrix<T> attn = (scores.colwise() - row_max).array().exp();
  const Eigen::Matrix<T, Eigen::Dynamic, 1> row_sum = attn.rowwise().sum();
  attn.array().colwise() /= row_sum.array();
  Matrix<T> context = attn * v;
  Matrix<T> y = wo.forward(context);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
    cache->context = std::move(context);
  }
  return y;
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> Attention<T>::backward(const Matrix<T>& dy, const Cache& c) {
  const T scale = T(1) / std::sqrt(static_cast<T>(wq.out_features()));
  const Matrix<T> dcontext = wo.backward(c.context, dy);
  const Matrix<T> dattn = dcontext * c.v.transpose();
  const Matrix<T> dv = c.attn.transpose() * dcontext;
  const Eigen::Matrix<T, Eigen::Dynamic, 1> dot = (dattn.array() * c.attn.array()).rowwise().sum();
  const Matrix<T> dscores = c.attn.array() * (dattn.array().colwise() - dot.array());
  const Matrix<T> dq = (dscores * c.k) * scale;
  const Matrix<T> dk = (dscores.transpose() * c.q) * scale;
  Matrix<T> dxq = wq.backward(c.xq, dq);
  Matrix<T> dxkv = wk.backward(c.xkv, dk);
  dxkv += wv.backward(c.xkv, dv);
  return {std::move(dxq), std::move(dxkv)};
}

// ---------------------------------------------------------------- Mlp

template <typename T>
Mlp<T>::Mlp(int in, int hidden, int out, Rng& rng, double out_gain)
    : fc1(in, hidden, rng, std::sqrt(2.0)), fc2(hidden, out, rng, out_gain) {}

template <typename T>
Matrix<T> Mlp<T>::forward(const Matrix<T>& x, Cache* cache) const {
  Matrix<T> pre = fc1.forward(x);
  Matrix<T> y = fc2.forward(relu(pre));
  if (cache) {
    cache->x = x;
    cache->hidden_pre = std::move(pre);
  }
  return y;
}

template <typename T>
Matrix<T> Mlp<T>::backward(const Matrix<T>& dy, const Cache& c) {
  const Matrix<T> dh = fc2.backward(relu(c.hidden_pre), dy);
  return fc1.backward(c.x, relu_backward(c.hidden_pre, dh));
}

#define MASKDET_INSTANTIATE(T)                                                   \
  template class Linear<T>;                                                      \
  template class LayerNorm<T>;                                                   \
  template class BatchNorm<T>;                                                   \
  template class Conv2d<T>;                                                      \
  template class Conv1d<T>;                                                      \
  template class Attention<T>;                                                   \
  template class Mlp<T>;                                                         \
  template Matrix<T> relu<T>(const Matrix<T>&);                                  \
  template Matrix<T> relu_backward<T>(const Matrix<T>&, const Matrix<T>&);

MASKDET_INSTANTIATE(float)
MASKDET_INSTANTIATE(double)

#undef MASKDET_INSTANTIATE

}  // namespace maskdet::nn
