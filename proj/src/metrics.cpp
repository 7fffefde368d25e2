#include "dg/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "dg/error.hpp"

namespace dg {

namespace {

void check_lengths(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw MetricError("metrics: label vectors must be nonempty and equal length");
}

}  // namespace

double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  check_lengths(y_true, y_pred);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (y_true[i] == y_pred[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& y_true,
                                               const std::vector<int>& y_pred,
                                               int num_classes) {
  check_lengths(y_true, y_pred);
  std::vector<std::vector<int>> m(static_cast<std::size_t>(num_classes),
                                  std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= num_classes || y_pred[i] < 0 ||
        y_pred[i] >= num_classes)
      throw MetricError("confusion_matrix: label outside 0.." +
                        std::to_string(num_classes - 1));
    ++m[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  }
  return m;
}

std::vector<double> sensitivities(const std::vector<int>& y_true,
                                  const std::vector<int>& y_pred,
                                  int num_classes) {
  const auto m = confusion_matrix(y_true, y_pred, num_classes);
  std::vector<double> out(static_cast<std::size_t>(num_classes), 0.0);
  for (int c = 0; c < num_classes; ++c) {
    const auto& row = m[static_cast<std::size_t>(c)];
    const long total = std::accumulate(row.begin(), row.end(), 0L);
    if (total == 0)
      throw MetricError("sensitivities: class " + std::to_string(c) +
                        " absent from y_true");
    out[static_cast<std::size_t>(c)] =
        static_cast<double>(row[static_cast<std::size_t>(c)]) /
        static_cast<double>(total);
  }
  return out;
}

double balanced_accuracy(const std::vector<int>& y_true,
                         const std::vector<int>& y_pred) {
  const int k = 1 + std::max(*std::max_element(y_true.begin(), y_true.end()),
                             *std::max_element(y_pred.begin(), y_pred.end()));
  const auto sens = sensitivities(y_true, y_pred, k);
  return std::accumulate(sens.begin(), sens.end(), 0.0) /
         static_cast<double>(sens.size());
}

double roc_auc(const std::vector<int>& is_positive,
               const std::vector<double>& scores) {
  if (is_positive.size() != scores.size() || scores.empty())
    throw MetricError("roc_auc: label/score length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  double pos = 0.0, neg = 0.0, pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // midrank of the tie group [i, j), 1-based ranks
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t) {
      if (is_positive[order[t]]) {
        pos += 1.0;
        pos_rank_sum += midrank;
      } else {
        neg += 1.0;
      }
    }
    i = j;
  }
  if (pos == 0.0 || neg == 0.0)
    throw MetricError("roc_auc: needs both positive and negative samples");
  return (pos_rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double auc_ovr_macro(const std::vector<int>& y_true,
                     const std::vector<std::vector<double>>& y_proba,
                     int num_classes) {
  if (y_true.size() != y_proba.size() || y_true.empty())
    throw MetricError("auc_ovr_macro: label/probability length mismatch");
  for (const auto& row : y_proba)
    if (row.size() != static_cast<std::size_t>(num_classes))
      throw MetricError("auc_ovr_macro: probability row width mismatch");

  auto column_auc = [&](int c) {
    std::vector<int> pos(y_true.size());
    std::vector<double> scores(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      pos[i] = y_true[i] == c ? 1 : 0;
      scores[i] = y_proba[i][static_cast<std::size_t>(c)];
    }
    return roc_auc(pos, scores);
  };

  if (num_classes == 2) return column_auc(1);  // positive-class column only
  double total = 0.0;
  for (int c = 0; c < num_classes; ++c) total += column_auc(c);
  return total / static_cast<double>(num_classes);
}

int argmax_class(const std::vector<double>& proba) {
  if (proba.empty()) throw MetricError("argmax_class: empty probabilities");
  int best = 0;
  for (int c = 1; c < static_cast<int>(proba.size()); ++c)
    if (proba[static_cast<std::size_t>(c)] > proba[static_cast<std::size_t>(best)])
      best = c;  // strict: ties keep the lowest class code
  return best;
}

}  // namespace dg
