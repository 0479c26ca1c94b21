#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "convit/tensor.hpp"

namespace convit {

// Per-parameter velocity buffers, keyed by parameter name and created lazily
// at zero on first use.
template <typename S>
struct OptimizerState {
  std::map<std::string, std::vector<S>> velocity;
};

using OptimizerStateF = OptimizerState<float>;

// Momentum SGD with weight decay:
//   g' = g + weight_decay * w;  v = momentum * v + g';  w = w - lr * v.
// Parameters with requires_grad == false are skipped entirely (frozen).
// A parameter with no gradient buffer yet contributes g = 0 (its velocity
// still decays).
template <typename S>
void sgd_step(std::vector<std::pair<std::string, Tensor<S>>>& params, OptimizerState<S>& state,
              S lr, S momentum, S weight_decay) {
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) continue;
    auto node = p.node();
    auto& v = state.velocity[name];
    if (v.empty()) v.assign(static_cast<std::size_t>(p.numel()), S(0));
    if (v.size() != node->value.size())
      throw ShapeError("sgd_step: velocity/parameter size mismatch for " + name);
    const bool has_g = !node->grad.empty();
    if (has_g && node->grad.size() != node->value.size())
      throw ShapeError("sgd_step: gradient/parameter size mismatch for " + name);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const S g = (has_g ? node->grad[i] : S(0)) + weight_decay * node->value[i];
      v[i] = momentum * v[i] + g;
      node->value[i] -= lr * v[i];
    }
  }
}

// Stepped schedule: base_lr * factor^floor(epoch / every).
inline double lr_at_epoch(int epoch, double base_lr, double decay_factor, int decay_every) {
  if (epoch < 0) throw ContractError("lr_at_epoch: epoch must be >= 0");
  if (decay_every < 1) throw ConfigError("lr_at_epoch: decay interval must be >= 1");
  return base_lr * std::pow(decay_factor, epoch / decay_every);
}

}  // namespace convit
