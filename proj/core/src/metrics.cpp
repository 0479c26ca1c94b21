#include "convit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "convit/format.hpp"

namespace convit {

double average_precision(const std::vector<double>& scores, const std::vector<bool>& relevance) {
  if (scores.size() != relevance.size())
    throw ShapeError("average_precision: scores/relevance length mismatch");
  if (scores.empty()) throw ContractError("average_precision: empty ranking");
  for (double s : scores)
    if (!std::isfinite(s)) throw ContractError("average_precision: non-finite score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];  // stable: ties keep original index order
  });

  std::int64_t relevant_total = 0;
  for (bool r : relevance) relevant_total += r ? 1 : 0;
  if (relevant_total == 0)
    throw ContractError("average_precision: no relevant items (AP undefined)");

  double ap = 0.0;
  std::int64_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (relevance[order[k]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(relevant_total);
}

double mean_average_precision(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<bool>>& relevance,
                              std::vector<double>* per_class_ap) {
  if (scores.size() != relevance.size())
    throw ShapeError("mean_average_precision: class count mismatch");
  if (per_class_ap) per_class_ap->assign(scores.size(), std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  int evaluable = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    bool any_positive = false;
    for (bool r : relevance[c]) any_positive = any_positive || r;
    if (!any_positive) continue;  // skipped, recorded as NaN
    const double ap = average_precision(scores[c], relevance[c]);
    if (per_class_ap) (*per_class_ap)[c] = ap;
    total += ap;
    ++evaluable;
  }
  if (evaluable == 0) throw ContractError("mean_average_precision: no evaluable class");
  return total / evaluable;
}

std::vector<std::vector<std::int64_t>> confusion_matrix(const std::vector<int>& predictions,
                                                        const std::vector<int>& truths, int K) {
  if (K < 1) throw ConfigError("confusion_matrix: K must be >= 1");
  if (predictions.size() != truths.size())
    throw ShapeError("confusion_matrix: predictions/truths length mismatch");
  std::vector<std::vector<std::int64_t>> m(static_cast<std::size_t>(K),
                                           std::vector<std::int64_t>(static_cast<std::size_t>(K),
                                                                     0));
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i], p = predictions[i];
    if (t < 0 || t >= K || p < 0 || p >= K)
      throw ContractError("confusion_matrix: class index out of range at sample " +
                          std::to_string(i));
    ++m[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return m;
}

std::string format_eval_report(const std::vector<std::string>& class_names,
                               const std::vector<double>& per_class_ap, double map_value) {
  if (class_names.size() != per_class_ap.size())
    throw ShapeError("format_eval_report: names/ap length mismatch");
  std::ostringstream out;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    out << "class " << class_names[c] << " ap ";
    if (std::isnan(per_class_ap[c]))
      out << "undefined";
    else
      out << fmt_double(per_class_ap[c]);
    out << '\n';
  }
  out << "map " << fmt_double(map_value) << '\n';
  return out.str();
}

std::string format_confusion(const std::vector<std::vector<std::int64_t>>& matrix,
                             const std::vector<std::string>& class_names) {
  if (matrix.size() != class_names.size())
    throw ShapeError("format_confusion: matrix/names size mismatch");
  std::size_t width = 5;
  for (const auto& name : class_names) width = std::max(width, name.size() + 1);
  std::ostringstream out;
  out << std::string(width, ' ');
  for (const auto& name : class_names)
    out << std::string(width - name.size(), ' ') << name;
  out << '\n';
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out << class_names[i] << std::string(width - class_names[i].size(), ' ');
    for (std::size_t j = 0; j < matrix[i].size(); ++j) {
      const std::string v = std::to_string(matrix[i][j]);
      out << std::string(width - v.size(), ' ') << v;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace convit
