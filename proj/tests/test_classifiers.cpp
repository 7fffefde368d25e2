#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dg/classifiers.hpp"
#include "dg/error.hpp"
#include "dg/metrics.hpp"
#include "dg/rng.hpp"

using namespace dg;

namespace {

// linearly separable 2-class blob pair in 2D
void blob_data(Matrix& x, std::vector<int>& y, int per_class, Rng& rng,
               double gap = 2.0) {
  for (int i = 0; i < per_class; ++i) {
    x.push_back({-gap + rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)});
    y.push_back(0);
    x.push_back({gap + rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)});
    y.push_back(1);
  }
}

}  // namespace

TEST_CASE("mlp reaches perfect accuracy on a separable toy set") {
  Rng rng(71);
  Matrix x;
  std::vector<int> y;
  blob_data(x, y, 20, rng);
  MlpConfig cfg;
  cfg.hidden = 16;
  cfg.max_epochs = 200;
  cfg.patience = 50;
  cfg.learning_rate = 3e-3;
  MlpModel m = mlp_train(x, y, x, y, 2, cfg, 5);
  int hits = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (argmax_class(mlp_predict_proba(m, x[i])) == y[i]) ++hits;
  CHECK(hits == static_cast<int>(x.size()));
}

TEST_CASE("mlp training is deterministic per seed") {
  Rng rng(72);
  Matrix x;
  std::vector<int> y;
  blob_data(x, y, 10, rng);
  MlpConfig cfg;
  cfg.max_epochs = 20;
  MlpModel a = mlp_train(x, y, x, y, 2, cfg, 9);
  MlpModel b = mlp_train(x, y, x, y, 2, cfg, 9);
  CHECK(a.params == b.params);
}

TEST_CASE("mlp softmax cross-entropy gradients match finite differences") {
  Rng rng(73);
  Matrix x;
  std::vector<int> y;
  for (int i = 0; i < 6; ++i) {
    x.push_back({rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)});
    y.push_back(static_cast<int>(rng.uniform_below(3)));
  }
  MlpModel m;
  m.input_dim = 3;
  m.hidden = 5;
  m.num_classes = 3;
  m.params.resize(m.param_count());
  for (auto& p : m.params) p = rng.normal(0.0, 0.5);

  std::vector<double> grad;
  mlp_loss_and_grad(m, x, y, grad);
  const double h = 1e-5;
  for (int probe = 0; probe < 60; ++probe) {
    const std::size_t off = rng.uniform_below(m.param_count());
    const double saved = m.params[off];
    m.params[off] = saved + h;
    const double up = mlp_loss(m, x, y);
    m.params[off] = saved - h;
    const double down = mlp_loss(m, x, y);
    m.params[off] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double rel = std::abs(grad[off] - fd) /
                       std::max({std::abs(grad[off]), std::abs(fd), 1e-8});
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("zero-weight mlp predicts the uniform distribution") {
  MlpModel m;
  m.input_dim = 4;
  m.hidden = 8;
  m.num_classes = 3;
  m.params.assign(m.param_count(), 0.0);
  const auto p = mlp_predict_proba(m, {1.0, -2.0, 0.5, 3.0});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("mlp probabilities always sum to one") {
  Rng rng(74);
  MlpModel m;
  m.input_dim = 6;
  m.hidden = 8;
  m.num_classes = 3;
  m.params.resize(m.param_count());
  for (auto& p : m.params) p = rng.normal(0.0, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(6);
    for (auto& v : x) v = rng.normal(0.0, 3.0);
    const auto p = mlp_predict_proba(m, x);
    double total = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("mlp argmax matches the nearest prototype on the blob set") {
  Rng rng(75);
  Matrix x;
  std::vector<int> y;
  blob_data(x, y, 15, rng);
  MlpConfig cfg;
  cfg.hidden = 16;
  cfg.max_epochs = 300;
  cfg.patience = 60;
  cfg.learning_rate = 3e-3;
  MlpModel m = mlp_train(x, y, x, y, 2, cfg, 4);

  // class prototypes = training centroids
  std::vector<std::vector<double>> centroid(2, {0.0, 0.0});
  std::vector<int> counts(2, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    centroid[y[i]][0] += x[i][0];
    centroid[y[i]][1] += x[i][1];
    ++counts[y[i]];
  }
  for (int c = 0; c < 2; ++c) {
    centroid[c][0] /= counts[c];
    centroid[c][1] /= counts[c];
  }
  Matrix probes;
  std::vector<int> dummy;
  blob_data(probes, dummy, 20, rng);
  for (const auto& probe : probes) {
    auto d2 = [&](int c) {
      const double dx = probe[0] - centroid[c][0];
      const double dy = probe[1] - centroid[c][1];
      return dx * dx + dy * dy;
    };
    const int proto = d2(0) < d2(1) ? 0 : 1;
    CHECK(argmax_class(mlp_predict_proba(m, probe)) == proto);
  }
}

TEST_CASE("mlp rejects single-class training data") {
  Matrix x{{0.0}, {1.0}};
  std::vector<int> y{1, 1};
  CHECK_THROWS_AS(mlp_train(x, y, x, y, 2, MlpConfig{}, 1), DataError);
}

TEST_CASE("smo solves the two-point problem analytically") {
  // {(-1,0) -> -1, (1,0) -> +1}: maximum margin at x = 0, alpha = (0.5, 0.5)
  const Matrix x{{-1.0, 0.0}, {1.0, 0.0}};
  Matrix k(2, std::vector<double>(2));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      k[i][j] = kernel_eval(SvmKernel::Linear, 1.0, x[i], x[j]);
  const std::vector<int> y{-1, 1};
  const std::vector<double> c{1e6, 1e6};
  const SmoSolution sol = smo_solve(k, y, c, 1e-12, 100000);
  CHECK(sol.alpha[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.alpha[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.bias == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(smo_kkt_violation(k, y, c, sol) <= 1e-6);
}

TEST_CASE("smo satisfies KKT on random separable 2D sets") {
  Rng rng(76);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix x;
    std::vector<int> y;
    const int n = 4 + static_cast<int>(rng.uniform_below(8));
    for (int i = 0; i < n; ++i) {
      const int cls = i % 2 == 0 ? -1 : 1;
      x.push_back({cls * (1.5 + rng.uniform01()), rng.normal(0.0, 0.5)});
      y.push_back(cls);
    }
    Matrix k(x.size(), std::vector<double>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x.size(); ++j)
        k[i][j] = kernel_eval(SvmKernel::Linear, 1.0, x[i], x[j]);
    const std::vector<double> c(x.size(), 100.0);
    const SmoSolution sol = smo_solve(k, y, c, 1e-10, 1000000);
    CHECK(smo_kkt_violation(k, y, c, sol) <= 1e-6);
  }
}

TEST_CASE("svm_train separates the two-point toy problem") {
  const Matrix x{{-1.0, 0.0}, {1.0, 0.0}};
  const std::vector<int> y{0, 1};
  SvmTrainOptions opt;
  opt.c_grid_size = 20;  // smaller grid keeps the unit test quick
  SvmModel m = svm_train(x, y, x, y, 2, 0, opt);
  CHECK(svm_predict(m, {2.0, 0.0}) == 1);
  CHECK(svm_predict(m, {-2.0, 0.0}) == 0);
}

TEST_CASE("duplicating every training point keeps the selected parameters") {
  Rng rng(77);
  Matrix x, xv;
  std::vector<int> y, yv;
  blob_data(x, y, 8, rng, 1.2);
  blob_data(xv, yv, 4, rng, 1.2);
  SvmTrainOptions opt;
  opt.c_grid_size = 25;
  SvmModel a = svm_train(x, y, xv, yv, 2, 0, opt);
  Matrix x2 = x;
  std::vector<int> y2 = y;
  x2.insert(x2.end(), x.begin(), x.end());
  y2.insert(y2.end(), y.begin(), y.end());
  SvmModel b = svm_train(x2, y2, xv, yv, 2, 0, opt);
  CHECK(a.kernel == b.kernel);
  CHECK(a.c_value == doctest::Approx(b.c_value));
}

TEST_CASE("balanced weights center the boundary under 9:1 imbalance") {
  // nine copies at x = -1, one at x = +1, small C so slack binds; balanced
  // weights equalize the class pulls and keep the midpoint at 0
  Matrix x;
  std::vector<int> y;
  for (int i = 0; i < 9; ++i) {
    x.push_back({-1.0, 0.0});
    y.push_back(0);
  }
  x.push_back({1.0, 0.0});
  y.push_back(1);
  SvmTrainOptions opt;
  opt.c_grid_size = 12;
  SvmModel m = svm_train(x, y, x, y, 2, 0, opt);
  const auto at = [&](double px) {
    const auto f = svm_decision_values(m, {px, 0.0});
    return f[1] - f[0];
  };
  CHECK(at(0.5) > 0.0);
  CHECK(at(-0.5) < 0.0);
  CHECK(std::abs(at(0.0)) < std::abs(at(0.9)));
}

TEST_CASE("confident points get confident calibrated probabilities") {
  Rng rng(78);
  Matrix x, xv;
  std::vector<int> y, yv;
  blob_data(x, y, 12, rng);
  blob_data(xv, yv, 8, rng);
  SvmTrainOptions opt;
  opt.c_grid_size = 15;
  SvmModel m = svm_train(x, y, xv, yv, 2, 0, opt);
  const auto p = svm_predict_proba(m, {4.0, 0.0});
  CHECK(p[1] > 0.9);
  const auto q = svm_predict_proba(m, {-4.0, 0.0});
  CHECK(q[0] > 0.9);
}

TEST_CASE("svm probabilities sum to one and mirror symmetric problems") {
  Rng rng(79);
  Matrix x;
  std::vector<int> y;
  blob_data(x, y, 10, rng);
  SvmTrainOptions opt;
  opt.c_grid_size = 10;
  SvmModel m = svm_train(x, y, x, y, 2, 0, opt);
  for (double px : {-3.0, -1.0, 0.0, 0.5, 2.5}) {
    const auto p = svm_predict_proba(m, {px, 0.0});
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p[0] >= 0.0);
    CHECK(p[1] >= 0.0);
  }

  // mirrored features with swapped labels give mirrored probabilities
  Matrix xm;
  std::vector<int> ym;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xm.push_back({-x[i][0], x[i][1]});
    ym.push_back(1 - y[i]);
  }
  SvmModel mm = svm_train(xm, ym, xm, ym, 2, 0, opt);
  for (double px : {-2.0, -0.5, 1.5}) {
    const auto p = svm_predict_proba(m, {px, 0.0});
    const auto q = svm_predict_proba(mm, {-px, 0.0});
    CHECK(p[1] == doctest::Approx(q[0]).epsilon(1e-6));
  }
}

TEST_CASE("svm_train requires a validation set") {
  Matrix x{{-1.0}, {1.0}};
  std::vector<int> y{0, 1};
  CHECK_THROWS_AS(svm_train(x, y, {}, {}, 2, 0), ProtocolError);
}

TEST_CASE("lambda calibration worked examples") {
  // identical probabilities: every lambda ties, the smallest wins
  Matrix p1{{0.8, 0.2}, {0.3, 0.7}};
  Matrix p2 = p1;
  std::vector<int> y{0, 1};
  CHECK(ensemble_calibrate(p1, p2, y) == 0.0);

  // a barely-perfect MLP against a maximally wrong SVM: only lambda = 1.00
  // on the grid classifies every sample correctly
  Matrix good{{0.504, 0.496}, {0.496, 0.504}};
  Matrix bad{{0.0, 1.0}, {1.0, 0.0}};
  CHECK(ensemble_calibrate(good, bad, y) == 1.0);

  CHECK_THROWS_AS(ensemble_calibrate({}, {}, {}), ProtocolError);
}

TEST_CASE("a handcrafted 6-sample case pins lambda near 0.5") {
  // a is the MLP's class-0 probability, b the SVM's; a class-0 sample is
  // correct iff lambda*a + (1-lambda)*b > 0.5, a class-1 sample iff < 0.5.
  // The six bands intersect only on roughly (0.465, 0.523).
  Matrix p1, p2;
  std::vector<int> y;
  auto add = [&](double a, double b, int label) {
    p1.push_back({a, 1.0 - a});
    p2.push_back({b, 1.0 - b});
    y.push_back(label);
  };
  add(0.95, 0.11, 0);  // lambda > 0.464
  add(0.93, 0.13, 0);  // lambda > 0.463
  add(0.96, 0.10, 0);  // lambda > 0.465
  add(0.90, 0.03, 1);  // lambda < 0.540
  add(0.88, 0.05, 1);  // lambda < 0.542
  add(0.92, 0.04, 1);  // lambda < 0.523

  // oracle: exhaustive grid evaluation with the same tie-break
  double best_lambda = 0.0, best_bacc = -1.0;
  for (int step = 0; step <= 100; ++step) {
    const double lambda = step / 100.0;
    std::vector<int> pred;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double q0 = lambda * p1[i][0] + (1 - lambda) * p2[i][0];
      pred.push_back(q0 >= 0.5 ? 0 : 1);
    }
    const double bacc = balanced_accuracy(y, pred);
    if (bacc > best_bacc) {
      best_bacc = bacc;
      best_lambda = lambda;
    }
  }
  const double lambda = ensemble_calibrate(p1, p2, y);
  CHECK(lambda == doctest::Approx(best_lambda));
  CHECK(lambda >= 0.45);
  CHECK(lambda <= 0.55);
}

TEST_CASE("ensemble prediction endpoints and arithmetic") {
  Rng rng(80);
  Matrix x;
  std::vector<int> y;
  blob_data(x, y, 10, rng);
  MlpConfig mcfg;
  mcfg.max_epochs = 60;
  mcfg.learning_rate = 3e-3;
  SvmTrainOptions opt;
  opt.c_grid_size = 10;

  EnsembleModel e;
  e.mlp = mlp_train(x, y, x, y, 2, mcfg, 3);
  e.svm = svm_train(x, y, x, y, 2, 0, opt);
  e.class_codes = {0, 1};

  const std::vector<double> probe{1.3, 0.2};
  e.lambda = 1.0;
  CHECK(ensemble_predict(e, probe, probe) == mlp_predict_proba(e.mlp, probe));
  e.lambda = 0.0;
  CHECK(ensemble_predict(e, probe, probe) == svm_predict_proba(e.svm, probe));
  e.lambda = 0.5;
  const auto pm = mlp_predict_proba(e.mlp, probe);
  const auto ps = svm_predict_proba(e.svm, probe);
  const auto mix = ensemble_predict(e, probe, probe);
  for (std::size_t c = 0; c < mix.size(); ++c)
    CHECK(mix[c] == doctest::Approx(0.5 * pm[c] + 0.5 * ps[c]).epsilon(1e-12));
}

TEST_CASE("calibrated lambda never loses to either endpoint on the fold") {
  Rng rng(81);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 12;
    Matrix p1, p2;
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      const double a = rng.uniform01(), b = rng.uniform01();
      p1.push_back({a, 1.0 - a});
      p2.push_back({b, 1.0 - b});
      y.push_back(static_cast<int>(rng.uniform_below(2)));
    }
    const double lambda = ensemble_calibrate(p1, p2, y);
    auto bacc_at = [&](double l) {
      std::vector<int> pred;
      for (int i = 0; i < n; ++i) {
        std::vector<double> mix{l * p1[i][0] + (1 - l) * p2[i][0],
                                l * p1[i][1] + (1 - l) * p2[i][1]};
        pred.push_back(argmax_class(mix));
      }
      return balanced_accuracy(y, pred);
    };
    CHECK(bacc_at(lambda) >= bacc_at(0.0));
    CHECK(bacc_at(lambda) >= bacc_at(1.0));
  }
}

TEST_CASE("classifier bundles round trip") {
  Rng rng(82);
  Matrix x;
  std::vector<int> y;
  blob_data(x, y, 8, rng);
  MlpConfig mcfg;
  mcfg.max_epochs = 30;
  SvmTrainOptions opt;
  opt.c_grid_size = 8;
  EnsembleModel e;
  e.mlp = mlp_train(x, y, x, y, 2, mcfg, 3);
  e.svm = svm_train(x, y, x, y, 2, 0, opt);
  e.class_codes = {0, 2};
  e.lambda = 0.37;

  const auto path = std::filesystem::temp_directory_path() / "dg_bundle.dgc";
  write_classifier_bundle(e, path);
  EnsembleModel r = read_classifier_bundle(path);
  CHECK(r.lambda == doctest::Approx(e.lambda).epsilon(1e-12));
  CHECK(r.class_codes == e.class_codes);
  CHECK(r.mlp.params.size() == e.mlp.params.size());
  CHECK(r.svm.kernel == e.svm.kernel);
  CHECK(r.svm.c_value == doctest::Approx(e.svm.c_value).epsilon(1e-12));
  // float32 payload: predictions agree to float precision
  const std::vector<double> probe{0.4, -0.2};
  const auto pa = ensemble_predict(e, probe, probe);
  const auto pb = ensemble_predict(r, probe, probe);
  for (std::size_t c = 0; c < pa.size(); ++c)
    CHECK(pa[c] == doctest::Approx(pb[c]).epsilon(1e-5));
  std::filesystem::remove(path);
}
