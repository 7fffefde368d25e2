#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dg/classifiers.hpp"
#include "dg/error.hpp"
#include "dg/metrics.hpp"
#include "dg/parallel.hpp"

namespace dg {

const std::string& kernel_name(SvmKernel k) {
  static const std::string names[3] = {"linear", "polynomial", "rbf"};
  return names[static_cast<int>(k)];
}

SvmKernel parse_kernel(const std::string& name) {
  for (SvmKernel k : {SvmKernel::Linear, SvmKernel::Poly3, SvmKernel::Rbf})
    if (kernel_name(k) == name) return k;
  throw ParameterError("unknown SVM kernel '" + name + "'");
}

double kernel_eval(SvmKernel k, double gamma, const std::vector<double>& a,
                   const std::vector<double>& b) {
  if (a.size() != b.size())
    throw GeometryError("kernel_eval: dimension mismatch");
  switch (k) {
    case SvmKernel::Linear: {
      double dot = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
      return dot;
    }
    case SvmKernel::Poly3: {
      double dot = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
      const double base = gamma * dot + 1.0;
      return base * base * base;
    }
    case SvmKernel::Rbf: {
      double d2 = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
      }
      return std::exp(-gamma * d2);
    }
  }
  throw ParameterError("invalid kernel code");
}

SmoSolution smo_solve(const Matrix& kernel_matrix, const std::vector<int>& y_pm,
                      const std::vector<double>& c, double eps, int max_iter) {
  const std::size_t n = y_pm.size();
  if (kernel_matrix.size() != n || c.size() != n || n == 0)
    throw GeometryError("smo_solve: inconsistent problem sizes");
  for (const auto& row : kernel_matrix)
    if (row.size() != n) throw GeometryError("smo_solve: kernel matrix not square");
  for (int y : y_pm)
    if (y != 1 && y != -1) throw ParameterError("smo_solve: labels must be +-1");

  SmoSolution sol;
  sol.alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);  // G_i = sum_j Q_ij a_j - 1

  auto q = [&](std::size_t i, std::size_t j) {
    return y_pm[i] * y_pm[j] * kernel_matrix[i][j];
  };

  int it = 0;
  double m_up = 0.0, m_low = 0.0;
  for (; it < max_iter; ++it) {
    // maximal violating pair
    std::size_t i_up = n, i_low = n;
    m_up = -std::numeric_limits<double>::infinity();
    m_low = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y_pm[t] * grad[t];
      const bool in_up = (y_pm[t] > 0 && sol.alpha[t] < c[t]) ||
                         (y_pm[t] < 0 && sol.alpha[t] > 0.0);
      const bool in_low = (y_pm[t] > 0 && sol.alpha[t] > 0.0) ||
                          (y_pm[t] < 0 && sol.alpha[t] < c[t]);
      if (in_up && v > m_up) {
        m_up = v;
        i_up = t;
      }
      if (in_low && v < m_low) {
        m_low = v;
        i_low = t;
      }
    }
    if (i_up == n || i_low == n || m_up - m_low <= eps) break;

    const std::size_t i = i_up, j = i_low;
    // curvature along the feasible pair direction; the label factors cancel
    double a = kernel_matrix[i][i] + kernel_matrix[j][j] -
               2.0 * kernel_matrix[i][j];
    if (a <= 0.0) a = 1e-12;
    double d = (m_up - m_low) / a;

    // clip the step to the box, preserving sum(alpha*y) = 0
    const double yi = y_pm[i], yj = y_pm[j];
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    if (yi > 0) {
      lo = std::max(lo, -sol.alpha[i]);
      hi = std::min(hi, c[i] - sol.alpha[i]);
    } else {
      lo = std::max(lo, sol.alpha[i] - c[i]);
      hi = std::min(hi, sol.alpha[i]);
    }
    if (yj > 0) {
      lo = std::max(lo, sol.alpha[j] - c[j]);
      hi = std::min(hi, sol.alpha[j]);
    } else {
      lo = std::max(lo, -sol.alpha[j]);
      hi = std::min(hi, c[j] - sol.alpha[j]);
    }
    d = std::clamp(d, lo, hi);
    if (d == 0.0) break;  // boxed in; no progress possible on this pair

    const double delta_i = yi * d;
    const double delta_j = -yj * d;
    sol.alpha[i] += delta_i;
    sol.alpha[j] += delta_j;
    for (std::size_t t = 0; t < n; ++t)
      grad[t] += q(t, i) * delta_i + q(t, j) * delta_j;
  }
  sol.iterations = it;

  // bias from free vectors, else the midpoint of the feasible interval
  double free_sum = 0.0;
  int free_count = 0;
  const double bound_tol = 1e-10;
  for (std::size_t t = 0; t < n; ++t)
    if (sol.alpha[t] > bound_tol && sol.alpha[t] < c[t] - bound_tol) {
      free_sum += -y_pm[t] * grad[t];
      ++free_count;
    }
  sol.bias = free_count > 0 ? free_sum / free_count : (m_up + m_low) / 2.0;
  return sol;
}

double smo_kkt_violation(const Matrix& kernel_matrix,
                         const std::vector<int>& y_pm,
                         const std::vector<double>& c, const SmoSolution& sol) {
  const std::size_t n = y_pm.size();
  double worst = 0.0;
  const double bound_tol = 1e-10;
  for (std::size_t i = 0; i < n; ++i) {
    double f = sol.bias;
    for (std::size_t j = 0; j < n; ++j)
      f += sol.alpha[j] * y_pm[j] * kernel_matrix[i][j];
    const double margin = y_pm[i] * f;
    double violation;
    if (sol.alpha[i] <= bound_tol)
      violation = std::max(0.0, 1.0 - margin);
    else if (sol.alpha[i] >= c[i] - bound_tol)
      violation = std::max(0.0, margin - 1.0);
    else
      violation = std::abs(margin - 1.0);
    worst = std::max(worst, violation);
  }
  return worst;
}

std::pair<double, double> platt_fit(const std::vector<double>& decisions,
                                    const std::vector<int>& is_positive) {
  if (decisions.size() != is_positive.size() || decisions.empty())
    throw DataError("platt_fit: empty or mismatched inputs");
  double prior1 = 0.0, prior0 = 0.0;
  for (int p : is_positive) (p ? prior1 : prior0) += 1.0;

  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  const std::size_t n = decisions.size();
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = is_positive[i] ? hi : lo;

  double a = 0.0;
  double b = std::log((prior0 + 1.0) / (prior1 + 1.0));

  auto objective = [&](double pa, double pb) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = pa * decisions[i] + pb;
      if (f >= 0.0)
        err += target[i] * f + std::log1p(std::exp(-f));
      else
        err += (target[i] - 1.0) * f + std::log1p(std::exp(f));
    }
    return err;
  };

  const double sigma = 1e-12;  // Hessian ridge
  double fval = objective(a, b);
  for (int it = 0; it < 200; ++it) {
    double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = a * decisions[i] + b;
      double p, q;
      if (f >= 0.0) {
        const double e = std::exp(-f);
        p = e / (1.0 + e);
        q = 1.0 / (1.0 + e);
      } else {
        const double e = std::exp(f);
        p = 1.0 / (1.0 + e);
        q = e / (1.0 + e);
      }
      const double d2 = p * q;
      h11 += decisions[i] * decisions[i] * d2;
      h22 += d2;
      h21 += decisions[i] * d2;
      const double d1 = target[i] - p;
      g1 += decisions[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-10 && std::abs(g2) < 1e-10) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double expect = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= 1e-10) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * expect) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < 1e-10) break;
  }
  return {a, b};
}

// --- training -----------------------------------------------------------------

namespace {

Matrix kernel_matrix_for(SvmKernel k, double gamma, const Matrix& x) {
  const std::size_t n = x.size();
  Matrix m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = kernel_eval(k, gamma, x[i], x[j]);
      m[i][j] = v;
      m[j][i] = v;
    }
  return m;
}

// cross kernel: rows = val samples, cols = train samples
Matrix kernel_cross_for(SvmKernel k, double gamma, const Matrix& val,
                        const Matrix& train) {
  Matrix m(val.size(), std::vector<double>(train.size(), 0.0));
  for (std::size_t i = 0; i < val.size(); ++i)
    for (std::size_t j = 0; j < train.size(); ++j)
      m[i][j] = kernel_eval(k, gamma, val[i], train[j]);
  return m;
}

struct OvrFit {
  std::vector<SmoSolution> machines;  // one per class
};

OvrFit fit_ovr(const Matrix& kmat, const std::vector<int>& y, int num_classes,
               double c_value, const std::vector<double>& class_weight,
               const SvmTrainOptions& opt) {
  OvrFit fit;
  const std::size_t n = y.size();
  for (int cls = 0; cls < num_classes; ++cls) {
    std::vector<int> y_pm(n);
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) {
      y_pm[i] = y[i] == cls ? 1 : -1;
      c[i] = c_value * class_weight[static_cast<std::size_t>(y[i])];
    }
    fit.machines.push_back(
        smo_solve(kmat, y_pm, c, opt.smo_eps, opt.smo_max_iter));
  }
  return fit;
}

// decision value of machine cls for validation row v
double ovr_decision(const OvrFit& fit, const std::vector<int>& y, int cls,
                    const Matrix& kcross, std::size_t v) {
  const SmoSolution& sol = fit.machines[static_cast<std::size_t>(cls)];
  double f = sol.bias;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (sol.alpha[j] == 0.0) continue;
    const int y_pm = y[j] == cls ? 1 : -1;
    f += sol.alpha[j] * y_pm * kcross[v][j];
  }
  return f;
}

}  // namespace

SvmModel svm_train(const Matrix& x_train, const std::vector<int>& y_train,
                   const Matrix& x_val, const std::vector<int>& y_val,
                   int num_classes, std::uint64_t /*seed: fit is deterministic*/,
                   const SvmTrainOptions& options) {
  if (x_train.empty() || x_train.size() != y_train.size())
    throw DataError("svm_train: empty training set or label mismatch");
  if (x_val.empty() || x_val.size() != y_val.size())
    throw ProtocolError("svm_train: empty validation set");
  if (num_classes < 2) throw DataError("svm_train: needs at least 2 classes");
  std::set<int> present(y_train.begin(), y_train.end());
  if (present.size() < 2)
    throw DataError("svm_train: training data holds a single class");
  const int dim = static_cast<int>(x_train.front().size());
  for (const auto& r : x_train)
    if (static_cast<int>(r.size()) != dim)
      throw GeometryError("svm_train: ragged training matrix");
  for (const auto& r : x_val)
    if (static_cast<int>(r.size()) != dim)
      throw GeometryError("svm_train: validation width mismatch");

  // balanced class weights w_c = N / (k * N_c) on the training labels
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int c : y_train) {
    if (c < 0 || c >= num_classes)
      throw DataError("svm_train: label outside 0.." +
                      std::to_string(num_classes - 1));
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  std::vector<double> class_weight(static_cast<std::size_t>(num_classes), 0.0);
  for (int c = 0; c < num_classes; ++c)
    if (counts[static_cast<std::size_t>(c)] > 0.0)
      class_weight[static_cast<std::size_t>(c)] =
          static_cast<double>(y_train.size()) /
          (static_cast<double>(num_classes) * counts[static_cast<std::size_t>(c)]);

  // gamma = 1 / (dim * var(all feature entries)), the common scaling default
  double mean = 0.0, var = 0.0;
  const double total = static_cast<double>(x_train.size()) * dim;
  for (const auto& r : x_train)
    for (double v : r) mean += v;
  mean /= total;
  for (const auto& r : x_train)
    for (double v : r) var += (v - mean) * (v - mean);
  var /= total;
  const double gamma = var > 0.0 ? 1.0 / (dim * var) : 1.0 / dim;

  // C grid, log-uniform over [c_min, c_max]
  std::vector<double> c_grid(static_cast<std::size_t>(options.c_grid_size));
  const double log_lo = std::log10(options.c_min);
  const double log_hi = std::log10(options.c_max);
  for (int i = 0; i < options.c_grid_size; ++i)
    c_grid[static_cast<std::size_t>(i)] = std::pow(
        10.0, log_lo + (log_hi - log_lo) * i /
                           std::max(1, options.c_grid_size - 1));

  const std::vector<SvmKernel> kernels = {SvmKernel::Linear, SvmKernel::Poly3,
                                          SvmKernel::Rbf};
  struct Cell {
    double bacc = -1.0;
  };
  std::vector<Cell> cells(kernels.size() * c_grid.size());

  for (std::size_t ki = 0; ki < kernels.size(); ++ki) {
    const SvmKernel kernel = kernels[ki];
    const Matrix kmat = kernel_matrix_for(kernel, gamma, x_train);
    const Matrix kcross = kernel_cross_for(kernel, gamma, x_val, x_train);
    parallel_for(c_grid.size(), [&](std::size_t cidx) {
      const OvrFit fit = fit_ovr(kmat, y_train, num_classes,
                                 c_grid[cidx], class_weight, options);
      std::vector<int> pred(x_val.size());
      for (std::size_t v = 0; v < x_val.size(); ++v) {
        int best = 0;
        double best_f = -std::numeric_limits<double>::infinity();
        for (int cls = 0; cls < num_classes; ++cls) {
          const double f = ovr_decision(fit, y_train, cls, kcross, v);
          if (f > best_f) {
            best_f = f;
            best = cls;
          }
        }
        pred[v] = best;
      }
      // per-class recall over the known class list; validation is expected
      // to hold every class (stratified folds guarantee it)
      std::vector<double> correct(static_cast<std::size_t>(num_classes), 0.0);
      std::vector<double> seen(static_cast<std::size_t>(num_classes), 0.0);
      for (std::size_t v = 0; v < x_val.size(); ++v) {
        seen[static_cast<std::size_t>(y_val[v])] += 1.0;
        if (pred[v] == y_val[v])
          correct[static_cast<std::size_t>(y_val[v])] += 1.0;
      }
      double bacc = 0.0;
      int classes_seen = 0;
      for (int c = 0; c < num_classes; ++c)
        if (seen[static_cast<std::size_t>(c)] > 0.0) {
          bacc += correct[static_cast<std::size_t>(c)] /
                  seen[static_cast<std::size_t>(c)];
          ++classes_seen;
        }
      cells[ki * c_grid.size() + cidx].bacc = bacc / classes_seen;
    });
  }

  // selection: highest BACC, ties to smaller C, then linear < poly < rbf
  std::size_t best_k = 0, best_c = 0;
  double best_bacc = -1.0;
  for (std::size_t cidx = 0; cidx < c_grid.size(); ++cidx)
    for (std::size_t ki = 0; ki < kernels.size(); ++ki) {
      const double bacc = cells[ki * c_grid.size() + cidx].bacc;
      if (bacc > best_bacc) {
        best_bacc = bacc;
        best_k = ki;
        best_c = cidx;
      }
    }

  SvmModel model;
  model.num_classes = num_classes;
  model.input_dim = dim;
  model.kernel = kernels[best_k];
  model.c_value = c_grid[best_c];
  model.gamma = gamma;

  const Matrix kmat = kernel_matrix_for(model.kernel, gamma, x_train);
  const Matrix kcross = kernel_cross_for(model.kernel, gamma, x_val, x_train);
  const OvrFit fit = fit_ovr(kmat, y_train, num_classes, model.c_value,
                             class_weight, options);
  for (int cls = 0; cls < num_classes; ++cls) {
    const SmoSolution& sol = fit.machines[static_cast<std::size_t>(cls)];
    SvmMachine machine;
    machine.bias = sol.bias;
    for (std::size_t j = 0; j < x_train.size(); ++j) {
      if (std::abs(sol.alpha[j]) < 1e-12) continue;
      const int y_pm = y_train[j] == cls ? 1 : -1;
      machine.support_vectors.push_back(x_train[j]);
      machine.dual_coef.push_back(sol.alpha[j] * y_pm);
    }
    std::vector<double> decisions(x_val.size());
    std::vector<int> is_pos(x_val.size());
    for (std::size_t v = 0; v < x_val.size(); ++v) {
      decisions[v] = ovr_decision(fit, y_train, cls, kcross, v);
      is_pos[v] = y_val[v] == cls ? 1 : 0;
    }
    const auto [a, b] = platt_fit(decisions, is_pos);
    machine.platt_a = a;
    machine.platt_b = b;
    model.machines.push_back(std::move(machine));
  }
  return model;
}

std::vector<double> svm_decision_values(const SvmModel& m,
                                        const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != m.input_dim)
    throw GeometryError("svm: input width " + std::to_string(x.size()) +
                        ", expected " + std::to_string(m.input_dim));
  std::vector<double> out;
  out.reserve(m.machines.size());
  for (const SvmMachine& machine : m.machines) {
    double f = machine.bias;
    for (std::size_t j = 0; j < machine.support_vectors.size(); ++j)
      f += machine.dual_coef[j] *
           kernel_eval(m.kernel, m.gamma, machine.support_vectors[j], x);
    out.push_back(f);
  }
  return out;
}

std::vector<double> svm_predict_proba(const SvmModel& m,
                                      const std::vector<double>& x) {
  const std::vector<double> f = svm_decision_values(m, x);
  std::vector<double> p(f.size());
  double total = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) {
    const double z = m.machines[c].platt_a * f[c] + m.machines[c].platt_b;
    p[c] = z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
    total += p[c];
  }
  for (double& v : p) v /= total;
  return p;
}

int svm_predict(const SvmModel& m, const std::vector<double>& x) {
  const std::vector<double> f = svm_decision_values(m, x);
  int best = 0;
  for (std::size_t c = 1; c < f.size(); ++c)
    if (f[c] > f[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  return best;
}

}  // namespace dg
