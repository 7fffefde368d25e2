#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dg/classifiers.hpp"
#include "dg/dataset.hpp"
#include "dg/features.hpp"
#include "dg/grader.hpp"
#include "dg/metrics.hpp"

namespace dg {

// --- fold planning -------------------------------------------------------------

// Ten folds d1..d10 with the appendix role rotation: in iteration i the
// seven folds starting at d_{i+1} train the graders and classifiers, the
// next fold validates the classifiers, the next calibrates the ensemble
// coefficient, and the last one is tested.
struct FoldPlan {
  int n_folds = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> folds;

  struct Roles {
    std::vector<int> train_folds;
    int val_fold = -1;
    int cal_fold = -1;
    int test_fold = -1;
  };
  Roles roles(int iteration) const;

  std::size_t total_subjects() const;
};

// Deterministic stratified split: per-fold class counts stay within one of
// the ideal proportion. Every class needs at least n_folds members.
FoldPlan stratified_folds(const std::vector<int>& labels, int n_folds,
                          std::uint64_t seed);

// --- tasks -----------------------------------------------------------------------

struct TaskSpec {
  std::string name;
  std::vector<std::string> class_names;
  std::array<int, 3> mapping{};  // DiagnosticClass code -> task label or -1

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int map(DiagnosticClass c) const {
    return mapping[static_cast<std::size_t>(c)];
  }

  static const std::vector<TaskSpec>& all();
  static const TaskSpec& by_name(const std::string& name);
};

// --- reports ----------------------------------------------------------------------

struct EvalReport {
  std::string task;
  std::string domain;  // "in" | "out"
  int n = 0;
  double acc = 0.0;
  double bacc = 0.0;
  double auc = 0.0;
  std::vector<double> sens;
  std::vector<std::vector<int>> confusion;
};

EvalReport make_report(const TaskSpec& task, const std::string& domain,
                       const std::vector<int>& y_true,
                       const std::vector<int>& y_pred, const Matrix& y_proba);

// --- cross-validation driver --------------------------------------------------------

struct CrossValidationConfig {
  int k = 2;
  Dims patch_dims{16, 24, 16};
  GraderConfig grader;
  MlpConfig mlp;
  SvmTrainOptions svm;
  std::vector<std::string> tasks;  // empty = all five
  int n_folds = 10;
  std::uint64_t seed = 0;
};

// Everything the classifier stage of one (iteration, task) may see.
struct TaskTrainingData {
  const TaskSpec* task = nullptr;
  Matrix dc_train, vol_train;
  std::vector<int> y_train, idx_train;
  Matrix dc_val, vol_val;
  std::vector<int> y_val, idx_val;
  Matrix dc_cal, vol_cal;
  std::vector<int> y_cal, idx_cal;
  MlpConfig mlp_config;
  SvmTrainOptions svm_options;
  std::uint64_t seed = 0;
};

struct TrainedStage {
  std::function<std::vector<double>(int subject_index,
                                    const StructureFeatures&)> predict;
  std::optional<EnsembleModel> model;  // present on the production path
  double lambda = 0.0;
  double cal_bacc_mlp = 0.0;
  double cal_bacc_svm = 0.0;
  double cal_bacc_ensemble = 0.0;
};

using ClassifierFactory = std::function<TrainedStage(const TaskTrainingData&)>;

// MLP on structure DC + SVM on volumes + lambda calibration on the d9 fold.
TrainedStage default_classifier_factory(const TaskTrainingData& data);

struct TaskResult {
  TaskSpec task;
  EvalReport in_domain;
  std::vector<EnsembleModel> models;  // per iteration; production path only
  std::vector<double> lambdas;
  std::vector<double> cal_bacc_mlp, cal_bacc_svm, cal_bacc_ensemble;
  // per dataset subject: iteration where it was tested (-1 = not in task)
  std::vector<int> test_iteration;
  Matrix test_proba;
  std::vector<int> test_pred;
};

struct CrossValidationResult {
  FoldPlan plan;
  std::vector<GraderEnsemble> graders;                    // per iteration
  std::vector<std::vector<StructureFeatures>> features;   // [iteration][subject]
  std::vector<TaskResult> tasks;

  const TaskResult& task(const std::string& name) const;
  // features of a subject in the iteration that tested it
  const StructureFeatures& test_features(int subject) const;
};

// Runs the full 10-iteration protocol. The classifier factory is injectable
// so protocol plumbing can be exercised with an oracle stage; production
// callers use the default.
CrossValidationResult run_cross_validation(
    const std::vector<SubjectData>& subjects, const CrossValidationConfig& config,
    const ClassifierFactory& factory = default_classifier_factory);

// --- out-of-domain evaluation ----------------------------------------------------------

struct OodTaskResult {
  TaskSpec task;
  EvalReport report;
  std::vector<int> subject_indices;  // rows of proba, into the OOD dataset
  Matrix proba;                      // averaged over the 10 models
  std::vector<int> pred;
};

// Averages the 10 per-iteration pipelines (grader ensemble + classifier)
// over each out-of-domain subject and scores the argmax predictions.
std::vector<OodTaskResult> evaluate_out_of_domain(
    const CrossValidationResult& result,
    const std::vector<SubjectData>& ood_subjects);

}  // namespace dg
