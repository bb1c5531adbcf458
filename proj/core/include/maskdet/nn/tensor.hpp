#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Core>

namespace maskdet::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Rng = std::mt19937_64;

/// A learnable array and its accumulated gradient.
template <typename T>
struct Parameter {
  Matrix<T> value;
  Matrix<T> grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Matrix<T>::Zero(rows, cols);
    grad = Matrix<T>::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

/// Uniform(-bound, bound) fill.
template <typename T>
void fill_uniform(Matrix<T>& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> d(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(d(rng));
}

/// Channels-last feature map: data has height*width rows and one column per channel.
template <typename T>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix<T> data;

  Eigen::Index channels() const { return data.cols(); }
};

}  // namespace maskdet::nn
