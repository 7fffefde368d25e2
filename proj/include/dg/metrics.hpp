#pragma once

#include <vector>

namespace dg {

// Labels are task-local codes 0..K-1; probability rows are length K.

double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred);

// Mean over classes of per-class recall. Every true class must be nonempty.
double balanced_accuracy(const std::vector<int>& y_true,
                         const std::vector<int>& y_pred);

// Per-class recall; its mean equals balanced_accuracy exactly.
std::vector<double> sensitivities(const std::vector<int>& y_true,
                                  const std::vector<int>& y_pred,
                                  int num_classes);

// confusion[true][pred] counts.
std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& y_true,
                                               const std::vector<int>& y_pred,
                                               int num_classes);

// ROC AUC of one score column against binary labels, equal to
// P(score_pos > score_neg) + 0.5 * P(tie) (the trapezoidal value over all
// thresholds), computed via midranks.
double roc_auc(const std::vector<int>& is_positive,
               const std::vector<double>& scores);

// Macro one-vs-rest AUC over probability columns. Binary tasks use the
// positive-class column only (class code 1).
double auc_ovr_macro(const std::vector<int>& y_true,
                     const std::vector<std::vector<double>>& y_proba,
                     int num_classes);

// argmax with ties resolved to the lowest class code.
int argmax_class(const std::vector<double>& proba);

}  // namespace dg
