#include <algorithm>
#include <set>

#include "dg/error.hpp"
#include "dg/eval.hpp"
#include "dg/parallel.hpp"
#include "dg/rng.hpp"

namespace dg {

const std::vector<TaskSpec>& TaskSpec::all() {
  static const std::vector<TaskSpec> tasks = {
      {"dem-vs-cn", {"CN", "DEM"}, {0, 1, 1}},
      {"ad-vs-cn", {"CN", "AD"}, {0, 1, -1}},
      {"ftd-vs-cn", {"CN", "FTD"}, {0, -1, 1}},
      {"ad-vs-ftd", {"AD", "FTD"}, {-1, 0, 1}},
      {"three-class", {"CN", "AD", "FTD"}, {0, 1, 2}},
  };
  return tasks;
}

const TaskSpec& TaskSpec::by_name(const std::string& name) {
  for (const TaskSpec& t : all())
    if (t.name == name) return t;
  throw ParameterError("unknown task '" + name + "'");
}

EvalReport make_report(const TaskSpec& task, const std::string& domain,
                       const std::vector<int>& y_true,
                       const std::vector<int>& y_pred, const Matrix& y_proba) {
  EvalReport r;
  r.task = task.name;
  r.domain = domain;
  r.n = static_cast<int>(y_true.size());
  r.acc = accuracy(y_true, y_pred);
  r.sens = sensitivities(y_true, y_pred, task.num_classes());
  double total = 0.0;
  for (double s : r.sens) total += s;
  r.bacc = total / static_cast<double>(r.sens.size());
  r.auc = auc_ovr_macro(y_true, y_proba, task.num_classes());
  r.confusion = confusion_matrix(y_true, y_pred, task.num_classes());
  return r;
}

TrainedStage default_classifier_factory(const TaskTrainingData& data) {
  const TaskSpec& task = *data.task;
  TrainedStage stage;

  MlpConfig mlp_cfg = data.mlp_config;
  SvmTrainOptions svm_opt = data.svm_options;
  MlpModel mlp = mlp_train(data.dc_train, data.y_train, data.dc_val, data.y_val,
                           task.num_classes(), mlp_cfg,
                           mix_seed(data.seed, 0x317));
  SvmModel svm = svm_train(data.vol_train, data.y_train, data.vol_val,
                           data.y_val, task.num_classes(),
                           mix_seed(data.seed, 0x513), svm_opt);

  // calibration probabilities on the d9 fold
  Matrix p_mlp, p_svm;
  for (std::size_t i = 0; i < data.dc_cal.size(); ++i) {
    p_mlp.push_back(mlp_predict_proba(mlp, data.dc_cal[i]));
    p_svm.push_back(svm_predict_proba(svm, data.vol_cal[i]));
  }
  const double lambda = ensemble_calibrate(p_mlp, p_svm, data.y_cal);

  auto bacc_of = [&](const Matrix& p) {
    std::vector<int> pred;
    pred.reserve(p.size());
    for (const auto& row : p) pred.push_back(argmax_class(row));
    return balanced_accuracy(data.y_cal, pred);
  };
  stage.cal_bacc_mlp = bacc_of(p_mlp);
  stage.cal_bacc_svm = bacc_of(p_svm);
  Matrix p_mix(p_mlp.size());
  for (std::size_t i = 0; i < p_mlp.size(); ++i) {
    p_mix[i].resize(p_mlp[i].size());
    for (std::size_t c = 0; c < p_mlp[i].size(); ++c)
      p_mix[i][c] = lambda * p_mlp[i][c] + (1.0 - lambda) * p_svm[i][c];
  }
  stage.cal_bacc_ensemble = bacc_of(p_mix);

  EnsembleModel model;
  model.lambda = lambda;
  model.mlp = std::move(mlp);
  model.svm = std::move(svm);
  for (DiagnosticClass c : kAllClasses)
    if (task.map(c) >= 0) model.class_codes.push_back(static_cast<int>(c));
  stage.lambda = lambda;
  stage.model = model;
  stage.predict = [model](int, const StructureFeatures& f) {
    return ensemble_predict(model, f.dc_flat(), f.volumes);
  };
  return stage;
}

const TaskResult& CrossValidationResult::task(const std::string& name) const {
  for (const TaskResult& t : tasks)
    if (t.task.name == name) return t;
  throw ParameterError("task '" + name + "' not part of this run");
}

const StructureFeatures& CrossValidationResult::test_features(int subject) const {
  for (int it = 0; it < plan.n_folds; ++it) {
    const auto& fold =
        plan.folds[static_cast<std::size_t>(plan.roles(it).test_fold)];
    if (std::find(fold.begin(), fold.end(), subject) != fold.end())
      return features[static_cast<std::size_t>(it)][static_cast<std::size_t>(subject)];
  }
  throw ProtocolError("subject " + std::to_string(subject) +
                      " never appears in a test fold");
}

namespace {

void check_roles(const FoldPlan& plan, const FoldPlan::Roles& roles,
                 std::size_t n_subjects) {
  std::set<int> seen;
  std::size_t total = 0;
  auto add_fold = [&](int f) {
    const auto& fold = plan.folds[static_cast<std::size_t>(f)];
    total += fold.size();
    seen.insert(fold.begin(), fold.end());
  };
  for (int f : roles.train_folds) add_fold(f);
  add_fold(roles.val_fold);
  add_fold(roles.cal_fold);
  add_fold(roles.test_fold);
  if (seen.size() != total)
    throw ProtocolError("fold roles overlap: a subject appears in two roles");
  if (seen.size() != n_subjects)
    throw ProtocolError("fold roles do not cover the dataset");
}

std::vector<int> fold_subjects(const FoldPlan& plan, const std::vector<int>& folds) {
  std::vector<int> out;
  for (int f : folds) {
    const auto& fold = plan.folds[static_cast<std::size_t>(f)];
    out.insert(out.end(), fold.begin(), fold.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

CrossValidationResult run_cross_validation(
    const std::vector<SubjectData>& subjects,
    const CrossValidationConfig& config, const ClassifierFactory& factory) {
  if (subjects.empty()) throw DataError("run_cross_validation: empty dataset");
  if (config.n_folds != 10)
    throw ProtocolError("the d1..d10 protocol requires exactly 10 folds");

  const Dims down_dims = subjects.front().down.dims();
  for (const SubjectData& s : subjects)
    if (!(s.down.dims() == down_dims))
      throw GeometryError("run_cross_validation: subject " + s.id +
                          " downscaled dims differ");

  std::vector<int> labels;
  labels.reserve(subjects.size());
  for (const SubjectData& s : subjects) labels.push_back(static_cast<int>(s.cls));

  CrossValidationResult result;
  result.plan = stratified_folds(labels, config.n_folds, config.seed);
  const GridSpec grid = GridSpec::make(down_dims, config.patch_dims, config.k);

  std::vector<const TaskSpec*> tasks;
  if (config.tasks.empty()) {
    for (const TaskSpec& t : TaskSpec::all()) tasks.push_back(&t);
  } else {
    for (const std::string& name : config.tasks)
      tasks.push_back(&TaskSpec::by_name(name));
  }
  for (const TaskSpec* t : tasks) {
    TaskResult tr;
    tr.task = *t;
    tr.test_iteration.assign(subjects.size(), -1);
    tr.test_proba.assign(subjects.size(), {});
    tr.test_pred.assign(subjects.size(), -1);
    result.tasks.push_back(std::move(tr));
  }

  for (int it = 0; it < config.n_folds; ++it) {
    const FoldPlan::Roles roles = result.plan.roles(it);
    check_roles(result.plan, roles, subjects.size());

    const std::vector<int> train_subjects = fold_subjects(result.plan, roles.train_folds);
    const std::vector<int> val_subjects = fold_subjects(result.plan, {roles.val_fold});
    const std::vector<int> cal_subjects = fold_subjects(result.plan, {roles.cal_fold});
    const std::vector<int> test_subjects = fold_subjects(result.plan, {roles.test_fold});

    std::vector<GraderSubject> train_views;
    train_views.reserve(train_subjects.size());
    for (int s : train_subjects)
      train_views.push_back(grader_view(subjects[static_cast<std::size_t>(s)]));

    GraderEnsemble ensemble = train_ensemble(
        train_views, grid, config.grader,
        mix_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(it)));

    // features of every subject under this iteration's graders
    std::vector<StructureFeatures> feats(subjects.size());
    parallel_for(subjects.size(), [&](std::size_t s) {
      const SubjectData& subject = subjects[s];
      const DCMap map = grade_volume(subject.down, ensemble, subject.original_dims);
      feats[s] = compute_features(map, subject.labels);
    });

    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      const TaskSpec& task = *tasks[ti];
      TaskResult& tr = result.tasks[ti];

      TaskTrainingData data;
      data.task = &task;
      data.mlp_config = config.mlp;
      data.svm_options = config.svm;
      data.seed = mix_seed(config.seed, 0x2000 + static_cast<std::uint64_t>(it) * 16 +
                                            static_cast<std::uint64_t>(ti));
      auto fill = [&](const std::vector<int>& ids, Matrix& dc, Matrix& vol,
                      std::vector<int>& y, std::vector<int>& idx) {
        for (int s : ids) {
          const int label = task.map(subjects[static_cast<std::size_t>(s)].cls);
          if (label < 0) continue;  // subjects with irrelevant classes are removed
          dc.push_back(feats[static_cast<std::size_t>(s)].dc_flat());
          vol.push_back(feats[static_cast<std::size_t>(s)].volumes);
          y.push_back(label);
          idx.push_back(s);
        }
      };
      fill(train_subjects, data.dc_train, data.vol_train, data.y_train, data.idx_train);
      fill(val_subjects, data.dc_val, data.vol_val, data.y_val, data.idx_val);
      fill(cal_subjects, data.dc_cal, data.vol_cal, data.y_cal, data.idx_cal);

      TrainedStage stage = factory(data);
      tr.lambdas.push_back(stage.lambda);
      tr.cal_bacc_mlp.push_back(stage.cal_bacc_mlp);
      tr.cal_bacc_svm.push_back(stage.cal_bacc_svm);
      tr.cal_bacc_ensemble.push_back(stage.cal_bacc_ensemble);
      if (stage.model) tr.models.push_back(std::move(*stage.model));

      for (int s : test_subjects) {
        const SubjectData& subject = subjects[static_cast<std::size_t>(s)];
        const int label = task.map(subject.cls);
        if (label < 0) continue;
        if (tr.test_iteration[static_cast<std::size_t>(s)] >= 0)
          throw ProtocolError("subject " + subject.id +
                              " tested in two iterations");
        const std::vector<double> proba =
            stage.predict(s, feats[static_cast<std::size_t>(s)]);
        tr.test_iteration[static_cast<std::size_t>(s)] = it;
        tr.test_proba[static_cast<std::size_t>(s)] = proba;
        tr.test_pred[static_cast<std::size_t>(s)] = argmax_class(proba);
      }
    }

    result.features.push_back(std::move(feats));
    result.graders.push_back(std::move(ensemble));
  }

  // concatenate the ten test folds and score once per task
  for (TaskResult& tr : result.tasks) {
    std::vector<int> y_true, y_pred;
    Matrix proba;
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      const int label = tr.task.map(subjects[s].cls);
      if (label < 0) continue;
      if (tr.test_iteration[s] < 0)
        throw ProtocolError("subject " + subjects[s].id + " was never tested");
      y_true.push_back(label);
      y_pred.push_back(tr.test_pred[s]);
      proba.push_back(tr.test_proba[s]);
    }
    tr.in_domain = make_report(tr.task, "in", y_true, y_pred, proba);
  }
  return result;
}

std::vector<OodTaskResult> evaluate_out_of_domain(
    const CrossValidationResult& result,
    const std::vector<SubjectData>& ood_subjects) {
  if (result.graders.size() != 10)
    throw ProtocolError("out-of-domain evaluation requires exactly 10 models, have " +
                        std::to_string(result.graders.size()));
  for (const TaskResult& tr : result.tasks)
    if (tr.models.size() != result.graders.size())
      throw ProtocolError("task " + tr.task.name +
                          " lacks trained ensemble models for averaging");
  if (ood_subjects.empty())
    throw DataError("evaluate_out_of_domain: empty dataset");

  // features of every OOD subject under every iteration's graders
  const std::size_t n = ood_subjects.size();
  std::vector<std::vector<StructureFeatures>> feats(
      result.graders.size(), std::vector<StructureFeatures>(n));
  for (std::size_t it = 0; it < result.graders.size(); ++it) {
    parallel_for(n, [&](std::size_t s) {
      const SubjectData& subject = ood_subjects[s];
      const DCMap map =
          grade_volume(subject.down, result.graders[it], subject.original_dims);
      feats[it][s] = compute_features(map, subject.labels);
    });
  }

  std::vector<OodTaskResult> out;
  for (const TaskResult& tr : result.tasks) {
    OodTaskResult o;
    o.task = tr.task;
    std::vector<int> y_true;
    for (std::size_t s = 0; s < n; ++s) {
      const int label = o.task.map(ood_subjects[s].cls);
      if (label < 0) continue;
      std::vector<double> mean(static_cast<std::size_t>(o.task.num_classes()), 0.0);
      for (std::size_t it = 0; it < tr.models.size(); ++it) {
        const std::vector<double> p =
            ensemble_predict(tr.models[it], feats[it][s].dc_flat(),
                             feats[it][s].volumes);
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
      }
      for (double& v : mean) v /= static_cast<double>(tr.models.size());
      o.subject_indices.push_back(static_cast<int>(s));
      o.proba.push_back(std::move(mean));
      o.pred.push_back(argmax_class(o.proba.back()));
      y_true.push_back(label);
    }
    o.report = make_report(o.task, "out", y_true, o.pred, o.proba);
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace dg
