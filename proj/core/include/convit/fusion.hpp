#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "convit/errors.hpp"

namespace convit {

// Convex score-fusion weights for combining the image-level classifier with
// the person-branch classifier.
struct FusionWeights {
  double w_convit = 0.5;
  double w_human = 0.5;
};

inline void validate_fusion_weights(const FusionWeights& w) {
  if (w.w_convit < 0.0 || w.w_human < 0.0)
    throw ConfigError("fusion: weights must be nonnegative");
  if (std::abs(w.w_convit + w.w_human - 1.0) > 1e-9)
    throw ConfigError("fusion: weights must sum to 1 (got " +
                      std::to_string(w.w_convit + w.w_human) + ")");
}

// P_final = w_convit * P_convit + w_human * P_human, elementwise.
inline std::vector<double> fuse_predictions(const std::vector<double>& p_convit,
                                            const std::vector<double>& p_human,
                                            const FusionWeights& w) {
  validate_fusion_weights(w);
  if (p_convit.size() != p_human.size())
    throw ShapeError("fusion: score vectors have different lengths (" +
                     std::to_string(p_convit.size()) + " vs " + std::to_string(p_human.size()) +
                     ")");
  std::vector<double> out(p_convit.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = w.w_convit * p_convit[i] + w.w_human * p_human[i];
  return out;
}

// Loss evaluated on probability vectors (scores are already normalized by the
// time they are fused, so these operate on probabilities, not logits).
enum class ScoreLoss { CrossEntropy, BinaryCrossEntropy };

namespace detail {
inline double clamp_prob(double p) {
  constexpr double lo = 1e-12;
  return std::min(1.0 - lo, std::max(lo, p));
}
}  // namespace detail

// Mean loss of fused probability rows against (multi-)hot targets.
inline double score_loss(const std::vector<std::vector<double>>& probs,
                         const std::vector<std::vector<double>>& targets, ScoreLoss kind) {
  if (probs.empty()) throw ContractError("score_loss: empty prediction set");
  if (probs.size() != targets.size())
    throw ShapeError("score_loss: prediction/target count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != targets[i].size())
      throw ShapeError("score_loss: row length mismatch at sample " + std::to_string(i));
    double row = 0.0;
    for (std::size_t k = 0; k < probs[i].size(); ++k) {
      const double p = detail::clamp_prob(probs[i][k]);
      const double t = targets[i][k];
      if (kind == ScoreLoss::CrossEntropy)
        row -= t * std::log(p);
      else
        row -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    if (kind == ScoreLoss::BinaryCrossEntropy) row /= static_cast<double>(probs[i].size());
    total += row;
  }
  return total / static_cast<double>(probs.size());
}

// Candidate grid {0, step, 2 step, ..., 1}; the final point is pinned to
// exactly 1 so the Eq.-style weight pairs are representable bit-exactly.
inline std::vector<double> fusion_weight_grid(double step) {
  if (!(step > 0.0) || step > 1.0)
    throw ConfigError("fusion: search step must lie in (0, 1]");
  std::vector<double> grid;
  for (int k = 0;; ++k) {
    const double w = k * step;
    if (w >= 1.0 - 1e-12) break;
    grid.push_back(w);
  }
  grid.push_back(1.0);
  return grid;
}

// Exhaustive grid search minimizing mean training loss of the fused scores.
// Scans from w_convit = 1 downward and keeps the incumbent on ties, so ties
// resolve toward the larger ConViT weight.
inline FusionWeights search_fusion_weights(const std::vector<std::vector<double>>& preds_convit,
                                           const std::vector<std::vector<double>>& preds_human,
                                           const std::vector<std::vector<double>>& targets,
                                           ScoreLoss kind, double step = 0.01) {
  if (preds_convit.empty()) throw ContractError("fusion search: empty prediction set");
  if (preds_convit.size() != preds_human.size() || preds_convit.size() != targets.size())
    throw ShapeError("fusion search: prediction/target count mismatch");
  const std::vector<double> grid = fusion_weight_grid(step);

  FusionWeights best;
  double best_loss = 0.0;
  bool have_best = false;
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    const FusionWeights w{*it, 1.0 - *it};
    std::vector<std::vector<double>> fused(preds_convit.size());
    for (std::size_t i = 0; i < preds_convit.size(); ++i)
      fused[i] = fuse_predictions(preds_convit[i], preds_human[i], w);
    const double loss = score_loss(fused, targets, kind);
    if (!have_best || loss < best_loss) {
      best = w;
      best_loss = loss;
      have_best = true;
    }
  }
  return best;
}

}  // namespace convit
