#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "convit/branch.hpp"
#include "convit/dataset.hpp"
#include "convit/loss.hpp"
#include "convit/model.hpp"
#include "convit/optim.hpp"

namespace convit {

struct TrainConfig {
  double base_lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 3e-5;
  int batch_size = 16;
  int epochs = 50;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 10;
  double mixup_alpha = 0.4;
  double crop_keep_fraction = 0.7;
  double flip_prob = 0.5;  // set 0 for relational data: flip swaps left/right
  std::uint64_t seed = 42;
  LossKind loss_kind = LossKind::SoftmaxCe;
};

void validate_train_config(const TrainConfig& cfg);

inline double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  return lr_at_epoch(epoch, cfg.base_lr, cfg.lr_decay_factor, cfg.lr_decay_every);
}

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
};

// Target probability vector for a sample's label set: softmax_ce spreads mass
// uniformly over the labels (sums to 1); sigmoid_bce marks each label 1.
std::vector<float> target_vector(const std::vector<int>& labels, int num_classes, LossKind kind);

// Stage 1: train the full ConViT on shuffled mini-batches with flip, crop and
// batch-internal mixup. Emits `epoch <n> lr <float> loss <float>` per epoch
// to `log` when given. Aborts with NumericError if the loss goes non-finite.
std::vector<EpochLog> train_convit(const ModelConfig& cfg, ModelParams<float>& params,
                                   const Manifest& data, const TrainConfig& tc,
                                   std::ostream* log = nullptr);

// Stage 2: freeze every ConViT parameter (no grads, batch-norm eval), cache
// backbone feature maps once per image, and train only the branch on RoI
// pooled person regions. No pixel-space augmentation (features are frozen).
std::vector<EpochLog> train_branch(const ModelConfig& cfg, ModelParams<float>& convit,
                                   const BranchConfig& bcfg, BranchParams<float>& branch,
                                   const Manifest& data, const TrainConfig& tc,
                                   std::ostream* log = nullptr);

}  // namespace convit
