#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace convit {

struct SuiteResult {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Finite-difference sweeps at 64-bit precision, >= 10 seeded random inputs
// per case (kink-adjacent inputs resampled). Tolerance 1e-4 unless noted.
std::vector<SuiteResult> op_gradient_suite(std::uint64_t seed);

// Layer-level sweeps: conv/pool/norm/linear/GAP and the loss heads.
std::vector<SuiteResult> layer_gradient_suite(std::uint64_t seed);

// Attention, encoder blocks, vit_forward, and end-to-end spot checks of the
// full toy ConViT and the branch stack (tolerance 1e-3 on the end-to-end
// cases, fewer trials — each trial is a whole-model FD probe).
std::vector<SuiteResult> model_gradient_suite(std::uint64_t seed);

// All suites concatenated (the `gradcheck` command runs this).
std::vector<SuiteResult> full_gradient_suite(std::uint64_t seed);

}  // namespace convit
