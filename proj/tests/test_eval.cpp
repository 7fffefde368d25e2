#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <set>

#include "dg/error.hpp"
#include "dg/eval.hpp"
#include "dg/rng.hpp"
#include "dg/synth.hpp"

using namespace dg;

namespace {

// exhaustive pair-counting oracle: AUC = P(s_pos > s_neg) + 0.5 P(tie)
double auc_pair_oracle(const std::vector<int>& pos,
                       const std::vector<double>& scores) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < pos.size(); ++j) {
      if (pos[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("stratified folds deal balanced classes evenly") {
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) labels.push_back(i % 3);
  FoldPlan plan = stratified_folds(labels, 10, 42);
  REQUIRE(plan.folds.size() == 10);
  for (const auto& fold : plan.folds) {
    REQUIRE(fold.size() == 3);
    std::set<int> classes;
    for (int s : fold) classes.insert(labels[static_cast<std::size_t>(s)]);
    CHECK(classes.size() == 3);  // exactly one of each class
  }
}

TEST_CASE("stratified folds split 60/40 into 6/4 per fold") {
  std::vector<int> labels(100, 0);
  for (int i = 60; i < 100; ++i) labels[static_cast<std::size_t>(i)] = 1;
  FoldPlan plan = stratified_folds(labels, 10, 7);
  for (const auto& fold : plan.folds) {
    int c0 = 0, c1 = 0;
    for (int s : fold) (labels[static_cast<std::size_t>(s)] == 0 ? c0 : c1)++;
    CHECK(c0 == 6);
    CHECK(c1 == 4);
  }
}

TEST_CASE("uneven class sizes stay within one of the ideal proportion") {
  std::vector<int> labels(101, 0);
  for (int i = 61; i < 101; ++i) labels[static_cast<std::size_t>(i)] = 1;
  FoldPlan plan = stratified_folds(labels, 10, 11);
  std::size_t total = 0;
  for (const auto& fold : plan.folds) {
    int c0 = 0, c1 = 0;
    for (int s : fold) (labels[static_cast<std::size_t>(s)] == 0 ? c0 : c1)++;
    CHECK(std::abs(c0 - 6.1) <= 1.0);
    CHECK(std::abs(c1 - 4.0) <= 1.0);
    total += fold.size();
  }
  CHECK(total == labels.size());
}

TEST_CASE("folds are deterministic, disjoint, and covering") {
  std::vector<int> labels;
  for (int i = 0; i < 47; ++i) labels.push_back(i % 2);
  FoldPlan a = stratified_folds(labels, 10, 5);
  FoldPlan b = stratified_folds(labels, 10, 5);
  CHECK(a.folds == b.folds);
  FoldPlan c = stratified_folds(labels, 10, 6);
  CHECK(a.folds != c.folds);

  std::set<int> seen;
  for (const auto& fold : a.folds) seen.insert(fold.begin(), fold.end());
  CHECK(seen.size() == labels.size());
}

TEST_CASE("classes smaller than the fold count are rejected") {
  std::vector<int> labels(30, 0);
  labels[0] = 1;  // class 1 has a single member
  CHECK_THROWS_AS(stratified_folds(labels, 10, 1), DataError);
}

TEST_CASE("role rotation tests every fold exactly once") {
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) labels.push_back(i % 2);
  FoldPlan plan = stratified_folds(labels, 10, 3);
  std::set<int> test_folds;
  for (int it = 0; it < 10; ++it) {
    const auto roles = plan.roles(it);
    CHECK(roles.train_folds.size() == 7);
    std::set<int> all(roles.train_folds.begin(), roles.train_folds.end());
    all.insert(roles.val_fold);
    all.insert(roles.cal_fold);
    all.insert(roles.test_fold);
    CHECK(all.size() == 10);  // pairwise distinct roles
    test_folds.insert(roles.test_fold);
  }
  CHECK(test_folds.size() == 10);
}

TEST_CASE("balanced accuracy worked examples") {
  CHECK(balanced_accuracy({0, 1, 2}, {0, 1, 2}) == 1.0);
  // constant predictor over three balanced classes
  CHECK(balanced_accuracy({0, 1, 2, 0, 1, 2}, {0, 0, 0, 0, 0, 0}) ==
        doctest::Approx(1.0 / 3));
  // constructed recalls (1.0, 0.5, 0.75): class sizes 2, 4, 4
  const std::vector<int> y_true{0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  const std::vector<int> y_pred{0, 0, 1, 1, 0, 0, 2, 2, 2, 1};
  CHECK(balanced_accuracy(y_true, y_pred) == doctest::Approx(0.75));
  const auto sens = sensitivities(y_true, y_pred, 3);
  CHECK(sens[0] == 1.0);
  CHECK(sens[1] == 0.5);
  CHECK(sens[2] == 0.75);
  const double mean = std::accumulate(sens.begin(), sens.end(), 0.0) / 3.0;
  CHECK(mean == balanced_accuracy(y_true, y_pred));  // exact
}

TEST_CASE("sensitivity edge cases") {
  const auto sens = sensitivities({0, 0, 1, 1}, {0, 0, 0, 0}, 2);
  CHECK(sens[0] == 1.0);
  CHECK(sens[1] == 0.0);
  CHECK_THROWS_AS(sensitivities({0, 0}, {0, 0}, 2), MetricError);
}

TEST_CASE("metrics ignore sample order") {
  Rng rng(91);
  std::vector<int> y_true, y_pred;
  for (int i = 0; i < 30; ++i) {
    y_true.push_back(static_cast<int>(rng.uniform_below(3)));
    y_pred.push_back(static_cast<int>(rng.uniform_below(3)));
  }
  for (int c = 0; c < 3; ++c) {
    y_true.push_back(c);
    y_pred.push_back(c);
  }
  std::vector<std::size_t> perm(y_true.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<int> t2, p2;
  for (std::size_t i : perm) {
    t2.push_back(y_true[i]);
    p2.push_back(y_pred[i]);
  }
  CHECK(balanced_accuracy(y_true, y_pred) == balanced_accuracy(t2, p2));
  CHECK(accuracy(y_true, y_pred) == accuracy(t2, p2));
}

TEST_CASE("AUC worked examples") {
  // perfectly separating scores
  CHECK(roc_auc({0, 0, 1, 1}, {0.1, 0.2, 0.8, 0.9}) == 1.0);
  // identical scores: degenerate ROC = 0.5
  CHECK(roc_auc({0, 1, 0, 1}, {0.5, 0.5, 0.5, 0.5}) == 0.5);
  // 6-sample handcrafted table vs the pair-counting oracle
  const std::vector<int> pos{1, 0, 1, 0, 1, 0};
  const std::vector<double> scores{0.9, 0.9, 0.7, 0.3, 0.2, 0.1};
  CHECK(roc_auc(pos, scores) == auc_pair_oracle(pos, scores));
}

TEST_CASE("AUC equals the pair-counting oracle exactly on small instances") {
  Rng rng(92);
  for (int rep = 0; rep < 500; ++rep) {
    const int n = 3 + static_cast<int>(rng.uniform_below(10));  // up to 12
    std::vector<int> pos(static_cast<std::size_t>(n));
    std::vector<double> scores(static_cast<std::size_t>(n));
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      pos[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_below(2));
      // coarse grid scores force plenty of ties
      scores[static_cast<std::size_t>(i)] =
          static_cast<double>(rng.uniform_below(5)) / 4.0;
      (pos[static_cast<std::size_t>(i)] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    CHECK(roc_auc(pos, scores) == auc_pair_oracle(pos, scores));
  }
}

TEST_CASE("macro OvR AUC and its error paths") {
  // three classes, probability columns that rank class c top for class c
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  Matrix proba{{0.8, 0.1, 0.1}, {0.7, 0.2, 0.1}, {0.1, 0.8, 0.1},
               {0.2, 0.6, 0.2}, {0.1, 0.2, 0.7}, {0.0, 0.1, 0.9}};
  CHECK(auc_ovr_macro(y, proba, 3) == 1.0);
  // a class missing from y_true is a metric error
  CHECK_THROWS_AS(auc_ovr_macro({0, 0, 1, 1, 1, 1}, proba, 3), MetricError);
}

TEST_CASE("binary AUC uses the positive-class column") {
  const std::vector<int> y{0, 0, 1, 1};
  const Matrix proba{{0.9, 0.1}, {0.6, 0.4}, {0.35, 0.65}, {0.2, 0.8}};
  std::vector<int> pos{0, 0, 1, 1};
  std::vector<double> col1{0.1, 0.4, 0.65, 0.8};
  CHECK(auc_ovr_macro(y, proba, 2) == roc_auc(pos, col1));
}

namespace {

// tiny phantom dataset for protocol plumbing; the grader is minimal
std::vector<SubjectData> tiny_dataset(int per_class, std::uint64_t seed) {
  PhantomSpec spec;
  spec.dims = Dims{16, 24, 16};
  spec.blocks_x = 1;
  spec.blocks_y = 3;
  spec.blocks_z = 1;
  spec.ad_structures = {2};
  spec.ftd_structures = {1};
  spec.seed = seed;
  std::vector<SubjectData> subjects;
  for (int i = 0; i < per_class; ++i)
    for (DiagnosticClass c : kAllClasses) {
      const PhantomSubject ph = generate_subject(
          c, spec, static_cast<std::uint64_t>(i) * 4 + static_cast<int>(c));
      SubjectData s;
      s.id = class_name(c) + std::to_string(i);
      s.cls = c;
      s.domain = "in";
      s.original_dims = ph.intensity.dims();
      s.down = downscale_by_2(normalize_intensity(ph.intensity));
      s.icc_down = downscale_mask(ph.labels);
      s.labels = ph.labels;
      subjects.push_back(std::move(s));
    }
  return subjects;
}

CrossValidationConfig tiny_config() {
  CrossValidationConfig cfg;
  cfg.k = 2;
  cfg.patch_dims = Dims{6, 8, 6};
  cfg.grader.patch_dims = cfg.patch_dims;
  cfg.grader.base_channels = 2;
  cfg.grader.max_epochs = 1;
  cfg.grader.early_stop_first = 1;
  cfg.grader.early_stop_rest = 1;
  cfg.mlp.max_epochs = 10;
  cfg.svm.c_grid_size = 5;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("cross-validation tests every subject exactly once per task") {
  const auto subjects = tiny_dataset(10, 500);
  CrossValidationConfig cfg = tiny_config();
  cfg.tasks = {"three-class", "ad-vs-cn"};
  const auto result = run_cross_validation(subjects, cfg);

  const TaskResult& three = result.task("three-class");
  for (std::size_t s = 0; s < subjects.size(); ++s)
    CHECK(three.test_iteration[s] >= 0);
  CHECK(three.in_domain.n == static_cast<int>(subjects.size()));

  // the binary task drops FTD subjects
  const TaskResult& advscn = result.task("ad-vs-cn");
  int tested = 0;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    if (subjects[s].cls == DiagnosticClass::FTD) {
      CHECK(advscn.test_iteration[s] == -1);
    } else {
      CHECK(advscn.test_iteration[s] >= 0);
      ++tested;
    }
  }
  CHECK(advscn.in_domain.n == tested);
}

TEST_CASE("an injected oracle classifier yields perfect reports") {
  const auto subjects = tiny_dataset(10, 501);
  CrossValidationConfig cfg = tiny_config();
  cfg.tasks = {"three-class"};

  ClassifierFactory oracle = [&](const TaskTrainingData& data) {
    TrainedStage stage;
    const TaskSpec* task = data.task;
    stage.predict = [&subjects, task](int subject,
                                      const StructureFeatures&) {
      std::vector<double> p(static_cast<std::size_t>(task->num_classes()), 0.0);
      p[static_cast<std::size_t>(
          task->map(subjects[static_cast<std::size_t>(subject)].cls))] = 1.0;
      return p;
    };
    return stage;
  };

  const auto result = run_cross_validation(subjects, cfg, oracle);
  const EvalReport& r = result.task("three-class").in_domain;
  CHECK(r.acc == 1.0);
  CHECK(r.bacc == 1.0);
  CHECK(r.auc == 1.0);
  for (double s : r.sens) CHECK(s == 1.0);
}

TEST_CASE("out-of-domain averaging with identical inputs matches in-domain behavior") {
  const auto subjects = tiny_dataset(10, 502);
  CrossValidationConfig cfg = tiny_config();
  cfg.tasks = {"three-class"};
  const auto result = run_cross_validation(subjects, cfg);

  const auto ood = tiny_dataset(2, 777);
  const auto reports = evaluate_out_of_domain(result, ood);
  REQUIRE(reports.size() == 1);
  const OodTaskResult& o = reports.front();
  CHECK(o.report.domain == "out");
  CHECK(o.report.n == static_cast<int>(ood.size()));
  // averaged probabilities are still distributions
  for (const auto& row : o.proba) {
    double total = 0.0;
    for (double v : row) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("out-of-domain evaluation demands ten models") {
  const auto subjects = tiny_dataset(10, 503);
  CrossValidationConfig cfg = tiny_config();
  cfg.tasks = {"three-class"};
  auto result = run_cross_validation(subjects, cfg);
  result.graders.pop_back();
  const auto ood = tiny_dataset(1, 88);
  CHECK_THROWS_AS(evaluate_out_of_domain(result, ood), ProtocolError);
}
