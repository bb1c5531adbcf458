#include "maskdet/train/optimizer.hpp"

#include <cmath>

#include "maskdet/core/error.hpp"

namespace maskdet::train {

template <typename T>
AdamW<T>::AdamW(double learning_rate, double weight_decay, double beta1, double beta2, double eps)
    : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

template <typename T>
void AdamW<T>::ensure_state(model::Network<T>& net) {
  if (!m_.empty()) return;
  net.visit_parameters([&](const std::string&, nn::Parameter<T>& p) {
    m_.push_back(nn::Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(nn::Matrix<T>::Zero(p.value.rows(), p.value.cols()));
  });
}

template <typename T>
void AdamW<T>::step(model::Network<T>& net) {
  ensure_state(net);
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const T b1 = static_cast<T>(beta1_);
  const T b2 = static_cast<T>(beta2_);
  const T step_size = static_cast<T>(lr_ / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(eps_);
  const T decay = static_cast<T>(lr_ * wd_);
  std::size_t i = 0;
  net.visit_parameters([&](const std::string&, nn::Parameter<T>& p) {
    auto& m = m_[i];
    auto& v = v_[i];
    ++i;
    m = b1 * m + (T(1) - b1) * p.grad;
    v = b2 * v + (T(1) - b2) * p.grad.cwiseAbs2();
    const nn::Matrix<T> update =
        step_size * (m.array() / ((v.array().sqrt() * inv_sqrt_bc2) + eps)).matrix() + decay * p.value;
    p.value -= update;
  });
}

template <typename T>
void AdamW<T>::export_state(model::Network<T>& net, model::Checkpoint& ckpt) const {
  ckpt.scalars["adam.steps"] = static_cast<double>(steps_);
  if (m_.empty()) return;
  std::size_t i = 0;
  net.visit_parameters([&](const std::string& name, nn::Parameter<T>&) {
    ckpt.arrays["adam.m." + name] = m_[i].template cast<double>();
    ckpt.arrays["adam.v." + name] = v_[i].template cast<double>();
    ++i;
  });
}

template <typename T>
void AdamW<T>::import_state(model::Network<T>& net, const model::Checkpoint& ckpt) {
  steps_ = static_cast<std::uint64_t>(ckpt.scalar("adam.steps"));
  m_.clear();
  v_.clear();
  if (steps_ == 0) return;
  net.visit_parameters([&](const std::string& name, nn::Parameter<T>& p) {
    for (const char* kind : {"adam.m.", "adam.v."}) {
      const auto it = ckpt.arrays.find(kind + name);
      if (it == ckpt.arrays.end() || it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
        throw ShapeError("checkpoint optimizer state missing or mismatched for " + name);
      }
      (kind[5] == 'm' ? m_ : v_).push_back(it->second.template cast<T>());
    }
  });
}

template <typename T>
double clip_grad_norm(model::Network<T>& net, double max_norm) {
  double sq = 0.0;
  net.visit_parameters([&](const std::string&, nn::Parameter<T>& p) {
    sq += p.grad.template cast<double>().squaredNorm();
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    net.visit_parameters([&](const std::string&, nn::Parameter<T>& p) { p.grad *= scale; });
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm<float>(model::Network<float>&, double);
template double clip_grad_norm<double>(model::Network<double>&, double);

}  // namespace maskdet::train
