#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace dg {

using Matrix = std::vector<std::vector<double>>;

// --- MLP on structure DC features -------------------------------------------

struct MlpConfig {
  int hidden = 64;
  double learning_rate = 3e-4;
  int batch_size = 8;
  int patience = 50;    // epochs without validation improvement
  int max_epochs = 2000;
};

// One hidden ReLU layer, softmax head, trained with cross-entropy and Adam.
// Parameters are flat: W1 (hidden x in), b1, W2 (K x hidden), b2.
struct MlpModel {
  int input_dim = 0;
  int hidden = 0;
  int num_classes = 0;
  std::vector<double> params;

  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const {
    return static_cast<std::size_t>(hidden) * input_dim;
  }
  std::size_t w2_offset() const {
    return b1_offset() + static_cast<std::size_t>(hidden);
  }
  std::size_t b2_offset() const {
    return w2_offset() + static_cast<std::size_t>(num_classes) * hidden;
  }
  std::size_t param_count() const {
    return b2_offset() + static_cast<std::size_t>(num_classes);
  }
};

MlpModel mlp_train(const Matrix& x_train, const std::vector<int>& y_train,
                   const Matrix& x_val, const std::vector<int>& y_val,
                   int num_classes, const MlpConfig& config, std::uint64_t seed);

std::vector<double> mlp_predict_proba(const MlpModel& m,
                                      const std::vector<double>& x);

// Mean cross-entropy over the batch plus its parameter gradient; exposed for
// the finite-difference checks.
double mlp_loss_and_grad(const MlpModel& m, const Matrix& x,
                         const std::vector<int>& y, std::vector<double>& grad);
double mlp_loss(const MlpModel& m, const Matrix& x, const std::vector<int>& y);

// --- kernel SVM on structure volumes -----------------------------------------

enum class SvmKernel : int { Linear = 0, Poly3 = 1, Rbf = 2 };
const std::string& kernel_name(SvmKernel k);
SvmKernel parse_kernel(const std::string& name);

struct SvmMachine {
  Matrix support_vectors;
  std::vector<double> dual_coef;  // alpha_i * y_i per support vector
  double bias = 0.0;
  double platt_a = 0.0;  // P(class | f) = 1 / (1 + exp(a*f + b))
  double platt_b = 0.0;
};

struct SvmModel {
  int num_classes = 0;
  int input_dim = 0;
  SvmKernel kernel = SvmKernel::Linear;
  double c_value = 1.0;
  double gamma = 1.0;
  std::vector<SvmMachine> machines;  // one-vs-rest, one per class
};

struct SvmTrainOptions {
  int c_grid_size = 500;  // log-uniform over [c_min, c_max]
  double c_min = 1e-5;
  double c_max = 1e5;
  double smo_eps = 1e-8;
  int smo_max_iter = 10'000'000;
};

// Grid search over 3 kernels x c_grid_size values of C, one-vs-rest SMO with
// class-balanced per-sample C, selection by validation balanced accuracy
// (ties: smaller C, then linear < polynomial < RBF), then Platt calibration
// of each machine on the validation decision values.
SvmModel svm_train(const Matrix& x_train, const std::vector<int>& y_train,
                   const Matrix& x_val, const std::vector<int>& y_val,
                   int num_classes, std::uint64_t seed,
                   const SvmTrainOptions& options = {});

// Per-machine decision values f_c(x).
std::vector<double> svm_decision_values(const SvmModel& m,
                                        const std::vector<double>& x);

// Per-machine Platt sigmoid, renormalized to sum to one.
std::vector<double> svm_predict_proba(const SvmModel& m,
                                      const std::vector<double>& x);

int svm_predict(const SvmModel& m, const std::vector<double>& x);

// --- SMO internals, exposed for the analytic toy checks ----------------------

double kernel_eval(SvmKernel k, double gamma, const std::vector<double>& a,
                   const std::vector<double>& b);

struct SmoSolution {
  std::vector<double> alpha;
  double bias = 0.0;
  int iterations = 0;
};

// Solves the dual with per-sample box constraints 0 <= alpha_i <= c[i] and
// the equality constraint sum(alpha_i * y_i) = 0 by maximal-violating-pair
// updates over a precomputed kernel matrix.
SmoSolution smo_solve(const Matrix& kernel_matrix, const std::vector<int>& y_pm,
                      const std::vector<double>& c, double eps, int max_iter);

// Largest KKT residual of a solution; used by the correctness gates.
double smo_kkt_violation(const Matrix& kernel_matrix,
                         const std::vector<int>& y_pm,
                         const std::vector<double>& c, const SmoSolution& sol);

// Platt sigmoid fit A, B for P(y=1|f) = 1/(1+exp(A f + B)).
std::pair<double, double> platt_fit(const std::vector<double>& decisions,
                                    const std::vector<int>& is_positive);

// --- ensembling ---------------------------------------------------------------

// Grid search lambda in {0.00, 0.01, ..., 1.00} maximizing the balanced
// accuracy of argmax(lambda*p_mlp + (1-lambda)*p_svm); ties take the
// smallest lambda.
double ensemble_calibrate(const Matrix& p_mlp, const Matrix& p_svm,
                          const std::vector<int>& y);

struct EnsembleModel {
  double lambda = 0.0;
  MlpModel mlp;
  SvmModel svm;
  std::vector<int> class_codes;  // original DiagnosticClass codes per label
};

// lambda*p_mlp(dc) + (1-lambda)*p_svm(volumes).
std::vector<double> ensemble_predict(const EnsembleModel& e,
                                     const std::vector<double>& dc_features,
                                     const std::vector<double>& volumes);

// --- DGC1 classifier bundle ---------------------------------------------------
// Little-endian: magic "DGC1"; u32 version; u64 JSON header length; JSON
// header (task classes, lambda, MLP shape, SVM hyperparameters and Platt
// coefficients); float32 payloads (MLP parameters, then per machine the dual
// coefficients and support vectors).

void write_classifier_bundle(const EnsembleModel& e,
                             const std::filesystem::path& path);
EnsembleModel read_classifier_bundle(const std::filesystem::path& path);

}  // namespace dg
