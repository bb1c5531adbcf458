#pragma once

#include <cstdint>
#include <vector>

#include "maskdet/model/checkpoint.hpp"
#include "maskdet/model/network.hpp"

namespace maskdet::train {

/// Adam with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
template <typename T>
class AdamW {
 public:
  AdamW(double learning_rate, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(model::Network<T>& net);
  std::uint64_t steps() const noexcept { return steps_; }

  /// Moments are stored as "adam.m.<name>" / "adam.v.<name>".
  void export_state(model::Network<T>& net, model::Checkpoint& ckpt) const;
  void import_state(model::Network<T>& net, const model::Checkpoint& ckpt);

 private:
  void ensure_state(model::Network<T>& net);

  double lr_;
  double wd_;
  double beta1_;
  double beta2_;
  double eps_;
  std::uint64_t steps_ = 0;
  std::vector<nn::Matrix<T>> m_;
  std::vector<nn::Matrix<T>> v_;
};

/// Scales gradients so their global L2 norm is at most `max_norm`; returns
/// the norm before scaling. max_norm <= 0 only measures.
template <typename T>
double clip_grad_norm(model::Network<T>& net, double max_norm);

}  // namespace maskdet::train
