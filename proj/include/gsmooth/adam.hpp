#pragma once

#include <vector>

#include "gsmooth/layers.hpp"

namespace gsmooth {

// Adam with the usual defaults and a step-wise halving schedule: the
// effective rate is base_lr * 0.5^(epoch / epochs_per_halving).
class Adam {
 public:
  explicit Adam(ParamList params, float lr = 1e-3f, float beta1 = 0.9f,
                float beta2 = 0.999f, float eps = 1e-8f,
                int epochs_per_halving = 50);

  // Applies one update from the accumulated gradients, then leaves grads
  // untouched (call zero_grad() before the next backward pass).
  void step();
  void zero_grad();
  // Epoch counting drives the decay schedule; call once per epoch.
  void note_epoch(int epoch);

  float learning_rate() const { return lr_now_; }
  long long step_count() const { return step_; }

 private:
  ParamList params_;
  std::vector<ArrayF> m_, v_;
  float base_lr_, lr_now_, beta1_, beta2_, eps_;
  int epochs_per_halving_;
  long long step_ = 0;
};

}  // namespace gsmooth
