#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convit/errors.hpp"

namespace convit {

// All-points average precision: sort by score descending (ties broken by
// original index ascending), AP = (1/R) * sum over relevant ranks k of
// precision@k. Zero relevant items is undefined (ContractError; callers skip
// the class).
double average_precision(const std::vector<double>& scores, const std::vector<bool>& relevance);

// Unweighted mean over classes with at least one positive. `scores[c][i]` is
// class c's score for sample i; `relevance[c][i]` its ground truth. Classes
// without positives are skipped; no evaluable class is an error.
double mean_average_precision(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<bool>>& relevance,
                              std::vector<double>* per_class_ap = nullptr);

// Entry (i,j) counts samples with truth i predicted j.
std::vector<std::vector<std::int64_t>> confusion_matrix(const std::vector<int>& predictions,
                                                        const std::vector<int>& truths, int K);

// `class <name> ap <float>` per class (skipped classes get `ap undefined`),
// then `map <float>`.
std::string format_eval_report(const std::vector<std::string>& class_names,
                               const std::vector<double>& per_class_ap, double map_value);

// Plain-text grid, rows = truth, columns = prediction.
std::string format_confusion(const std::vector<std::vector<std::int64_t>>& matrix,
                             const std::vector<std::string>& class_names);

}  // namespace convit
