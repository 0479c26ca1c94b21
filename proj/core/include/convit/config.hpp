#pragma once

#include <string>

#include "convit/branch.hpp"
#include "convit/model.hpp"
#include "convit/train.hpp"

namespace convit {

// One run's full configuration: model preset + branch geometry + training
// hyperparameters.
struct RunConfig {
  std::string preset = "toy";  // "toy" | "paper-geometry"
  ModelConfig model;
  BranchConfig branch;
  TrainConfig train;
};

// Build the defaults for a named preset.
RunConfig preset_run_config(const std::string& preset, int num_classes = 4);

// Load from a JSON file with the fixed schema:
//   {
//     "preset": "toy",             // or "paper-geometry"
//     "num_classes": 4,
//     "multi_label": false,
//     "use_vits": true,
//     "train": { "base_lr": 0.001, "momentum": 0.9, "weight_decay": 3e-5,
//                "batch_size": 16, "epochs": 50, "lr_decay_factor": 0.1,
//                "lr_decay_every": 10, "mixup_alpha": 0.4,
//                "crop_keep_fraction": 0.7, "flip_prob": 0.5,
//                "seed": 42, "loss_kind": "softmax_ce" }   // or "sigmoid_bce"
//   }
// Every key is optional; unknown keys are rejected with ConfigError.
RunConfig load_run_config(const std::string& path);

// Parse from a JSON string (exposed for tests; `origin` names the source in
// error messages).
RunConfig parse_run_config(const std::string& json_text, const std::string& origin);

}  // namespace convit
