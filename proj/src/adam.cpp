#include "gsmooth/adam.hpp"

#include <cmath>

namespace gsmooth {

Adam::Adam(ParamList params, float lr, float beta1, float beta2, float eps,
           int epochs_per_halving)
    : params_(std::move(params)),
      base_lr_(lr),
      lr_now_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      epochs_per_halving_(epochs_per_halving) {
  if (lr <= 0.0f) throw std::invalid_argument("Adam: learning rate must be > 0");
  if (epochs_per_halving < 1)
    throw std::invalid_argument("Adam: epochs_per_halving must be >= 1");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(ArrayF::Zero(p.tensor.size()));
    v_.push_back(ArrayF::Zero(p.tensor.size()));
  }
}

void Adam::step() {
  ++step_;
  const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(step_));
  const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    if (t.node()->grad.size() != t.size())
      throw std::runtime_error("Adam: parameter '" + params_[i].name +
                               "' has no gradient");
    const ArrayF& g = t.node()->grad;
    m_[i] = beta1_ * m_[i] + (1.0f - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0f - beta2_) * g.square();
    t.values() -= lr_now_ * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::note_epoch(int epoch) {
  lr_now_ =
      base_lr_ * std::pow(0.5f, static_cast<float>(epoch / epochs_per_halving_));
}

}  // namespace gsmooth
