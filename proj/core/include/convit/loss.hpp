#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "convit/ops.hpp"

namespace convit {

enum class LossKind { SoftmaxCe, SigmoidBce };

// Multi-class cross entropy on logits: mean_i sum_k t_ik * (lse_i - z_ik),
// where lse is the row log-sum-exp. Targets are probability vectors, so mixup
// needs no special-casing. Differentiable in both logits and targets.
template <typename S>
Tensor<S> softmax_ce(const Tensor<S>& logits, const Tensor<S>& targets) {
  if (logits.rank() != 2 || logits.shape() != targets.shape())
    throw ShapeError("softmax_ce: logits and targets must share a [B,K] shape, got " +
                     shape_str(logits.shape()) + " and " + shape_str(targets.shape()));
  const int B = logits.dim(0), K = logits.dim(1);
  const auto& z = logits.value();
  const auto& t = targets.value();

  auto probs = std::make_shared<std::vector<S>>(z.size());
  auto lse = std::make_shared<std::vector<S>>(static_cast<std::size_t>(B));
  S total = 0;
  for (int i = 0; i < B; ++i) {
    const S* zi = z.data() + static_cast<std::size_t>(i) * K;
    const S* ti = t.data() + static_cast<std::size_t>(i) * K;
    S m = zi[0];
    for (int k = 1; k < K; ++k) m = std::max(m, zi[k]);
    S acc = 0;
    for (int k = 0; k < K; ++k) acc += std::exp(zi[k] - m);
    const S l = m + std::log(acc);
    (*lse)[static_cast<std::size_t>(i)] = l;
    S* si = probs->data() + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      si[k] = std::exp(zi[k] - l);
      total += ti[k] * (l - zi[k]);
    }
  }
  Tensor<S> result({1}, {total / static_cast<S>(B)});

  if (detail::want_record<S>({&logits, &targets})) {
    result.set_requires_grad(true);
    auto zn = logits.node(), tn = targets.node(), on = result.node();
    active_tape<S>()->record(on, [zn, tn, on, probs, lse, B, K]() {
      const S g = on->grad[0] / static_cast<S>(B);
      if (zn->requires_grad) {
        zn->ensure_grad();
        for (int i = 0; i < B; ++i) {
          const S* si = probs->data() + static_cast<std::size_t>(i) * K;
          const S* ti = tn->value.data() + static_cast<std::size_t>(i) * K;
          S tsum = 0;
          for (int k = 0; k < K; ++k) tsum += ti[k];
          S* gz = zn->grad.data() + static_cast<std::size_t>(i) * K;
          for (int k = 0; k < K; ++k) gz[k] += (si[k] * tsum - ti[k]) * g;
        }
      }
      if (tn->requires_grad) {
        tn->ensure_grad();
        for (int i = 0; i < B; ++i) {
          const S l = (*lse)[static_cast<std::size_t>(i)];
          const S* zi = zn->value.data() + static_cast<std::size_t>(i) * K;
          S* gt = tn->grad.data() + static_cast<std::size_t>(i) * K;
          for (int k = 0; k < K; ++k) gt[k] += (l - zi[k]) * g;
        }
      }
    });
  }
  return result;
}

// Per-class binary cross entropy on logits, mean over batch and classes,
// in the stable form max(z,0) - z*t + log1p(exp(-|z|)).
template <typename S>
Tensor<S> sigmoid_bce(const Tensor<S>& logits, const Tensor<S>& targets) {
  if (logits.rank() != 2 || logits.shape() != targets.shape())
    throw ShapeError("sigmoid_bce: logits and targets must share a [B,K] shape, got " +
                     shape_str(logits.shape()) + " and " + shape_str(targets.shape()));
  const auto& z = logits.value();
  const auto& t = targets.value();
  const auto n = z.size();
  S total = 0;
  for (std::size_t i = 0; i < n; ++i)
    total += std::max(z[i], S(0)) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
  Tensor<S> result({1}, {total / static_cast<S>(n)});

  if (detail::want_record<S>({&logits, &targets})) {
    result.set_requires_grad(true);
    auto zn = logits.node(), tn = targets.node(), on = result.node();
    active_tape<S>()->record(on, [zn, tn, on, n]() {
      const S g = on->grad[0] / static_cast<S>(n);
      if (zn->requires_grad) {
        zn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const S zi = zn->value[i];
          const S sig = zi >= 0 ? S(1) / (S(1) + std::exp(-zi))
                                : std::exp(zi) / (S(1) + std::exp(zi));
          zn->grad[i] += (sig - tn->value[i]) * g;
        }
      }
      if (tn->requires_grad) {
        tn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) tn->grad[i] += -zn->value[i] * g;
      }
    });
  }
  return result;
}

template <typename S>
Tensor<S> loss(const Tensor<S>& logits, const Tensor<S>& targets, LossKind kind) {
  return kind == LossKind::SoftmaxCe ? softmax_ce(logits, targets) : sigmoid_bce(logits, targets);
}

}  // namespace convit
