#pragma once

#include <vector>

#include "convit/branch.hpp"
#include "convit/dataset.hpp"
#include "convit/model.hpp"

namespace convit {

// Center-crop (identity when sizes match) + per-channel normalization into a
// [1,H,W,3] model input.
TensorF prepare_input(const Image& img, const ModelConfig& cfg);

// A box given in original-image coordinates, translated into the center-crop
// window prepare_input uses (clipped; BoxError if it falls entirely outside).
BoundingBox box_in_center_crop(const BoundingBox& box, int img_h, int img_w, int out_h,
                               int out_w);

// Logits -> probabilities: softmax for single-label, per-class sigmoid for
// multi-label.
std::vector<double> probabilities(const std::vector<float>& logits, bool multi_label);

// Eval-mode image-level class probabilities, one row per sample. Batch norm
// modes are forced to eval and restored.
std::vector<std::vector<double>> score_images(const ModelConfig& cfg, ModelParams<float>& params,
                                              const Manifest& data);

struct PersonRef {
  int sample = 0;
  BoundingBox box;
  int label = 0;
};

std::vector<PersonRef> collect_persons(const Manifest& data);

// Eval-mode branch probabilities per person (backbone feature maps computed
// once per image and RoI-pooled per person).
std::vector<std::vector<double>> score_persons(const ModelConfig& cfg,
                                               ModelParams<float>& params,
                                               const BranchConfig& bcfg,
                                               const BranchParams<float>& branch,
                                               const Manifest& data,
                                               const std::vector<PersonRef>& persons);

}  // namespace convit
