#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dg/classifiers.hpp"
#include "dg/error.hpp"
#include "dg/grader.hpp"  // AdamState / adam_step
#include "dg/rng.hpp"

namespace dg {

namespace {

void check_rows(const Matrix& x, int dim, const char* what) {
  for (const auto& row : x)
    if (row.size() != static_cast<std::size_t>(dim))
      throw GeometryError(std::string(what) + ": feature row of width " +
                          std::to_string(row.size()) + ", expected " +
                          std::to_string(dim));
}

// forward one sample; returns probabilities, fills hidden activations
std::vector<double> forward(const MlpModel& m, const std::vector<double>& x,
                            std::vector<double>* hidden_out) {
  if (x.size() != static_cast<std::size_t>(m.input_dim))
    throw GeometryError("mlp: input width " + std::to_string(x.size()) +
                        ", expected " + std::to_string(m.input_dim));
  const double* w1 = m.params.data() + m.w1_offset();
  const double* b1 = m.params.data() + m.b1_offset();
  const double* w2 = m.params.data() + m.w2_offset();
  const double* b2 = m.params.data() + m.b2_offset();

  std::vector<double> h(static_cast<std::size_t>(m.hidden));
  for (int j = 0; j < m.hidden; ++j) {
    double acc = b1[j];
    const double* row = w1 + static_cast<std::size_t>(j) * m.input_dim;
    for (int i = 0; i < m.input_dim; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
    h[static_cast<std::size_t>(j)] = acc > 0.0 ? acc : 0.0;
  }
  std::vector<double> logits(static_cast<std::size_t>(m.num_classes));
  for (int c = 0; c < m.num_classes; ++c) {
    double acc = b2[c];
    const double* row = w2 + static_cast<std::size_t>(c) * m.hidden;
    for (int j = 0; j < m.hidden; ++j) acc += row[j] * h[static_cast<std::size_t>(j)];
    logits[static_cast<std::size_t>(c)] = acc;
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - peak);
    total += l;
  }
  for (double& l : logits) l /= total;
  if (hidden_out) *hidden_out = std::move(h);
  return logits;
}

}  // namespace

std::vector<double> mlp_predict_proba(const MlpModel& m,
                                      const std::vector<double>& x) {
  return forward(m, x, nullptr);
}

double mlp_loss(const MlpModel& m, const Matrix& x, const std::vector<int>& y) {
  if (x.empty() || x.size() != y.size())
    throw DataError("mlp_loss: empty batch or label mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = forward(m, x[i], nullptr);
    const double q = std::max(p[static_cast<std::size_t>(y[i])], 1e-300);
    total -= std::log(q);
  }
  return total / static_cast<double>(x.size());
}

double mlp_loss_and_grad(const MlpModel& m, const Matrix& x,
                         const std::vector<int>& y, std::vector<double>& grad) {
  if (x.empty() || x.size() != y.size())
    throw DataError("mlp_loss_and_grad: empty batch or label mismatch");
  grad.assign(m.param_count(), 0.0);
  const double* w2 = m.params.data() + m.w2_offset();
  double* gw1 = grad.data() + m.w1_offset();
  double* gb1 = grad.data() + m.b1_offset();
  double* gw2 = grad.data() + m.w2_offset();
  double* gb2 = grad.data() + m.b2_offset();
  const double inv_n = 1.0 / static_cast<double>(x.size());

  double total = 0.0;
  std::vector<double> h;
  for (std::size_t s = 0; s < x.size(); ++s) {
    const auto p = forward(m, x[s], &h);
    total -= std::log(std::max(p[static_cast<std::size_t>(y[s])], 1e-300));

    // d loss / d logits = softmax - onehot
    std::vector<double> dl(p.begin(), p.end());
    dl[static_cast<std::size_t>(y[s])] -= 1.0;

    std::vector<double> dh(static_cast<std::size_t>(m.hidden), 0.0);
    for (int c = 0; c < m.num_classes; ++c) {
      const double g = dl[static_cast<std::size_t>(c)] * inv_n;
      gb2[c] += g;
      const double* w2row = w2 + static_cast<std::size_t>(c) * m.hidden;
      double* gw2row = gw2 + static_cast<std::size_t>(c) * m.hidden;
      for (int j = 0; j < m.hidden; ++j) {
        gw2row[j] += g * h[static_cast<std::size_t>(j)];
        dh[static_cast<std::size_t>(j)] +=
            dl[static_cast<std::size_t>(c)] * w2row[j];
      }
    }
    for (int j = 0; j < m.hidden; ++j) {
      if (h[static_cast<std::size_t>(j)] <= 0.0) continue;  // ReLU mask
      const double g = dh[static_cast<std::size_t>(j)] * inv_n;
      gb1[j] += g;
      double* gw1row = gw1 + static_cast<std::size_t>(j) * m.input_dim;
      for (int i = 0; i < m.input_dim; ++i)
        gw1row[i] += g * x[s][static_cast<std::size_t>(i)];
    }
  }
  return total * inv_n;
}

MlpModel mlp_train(const Matrix& x_train, const std::vector<int>& y_train,
                   const Matrix& x_val, const std::vector<int>& y_val,
                   int num_classes, const MlpConfig& config, std::uint64_t seed) {
  if (x_train.empty() || x_train.size() != y_train.size())
    throw DataError("mlp_train: empty training set or label mismatch");
  if (x_val.size() != y_val.size())
    throw DataError("mlp_train: validation label mismatch");
  if (num_classes < 2) throw DataError("mlp_train: needs at least 2 classes");
  if (config.hidden < 1 || config.batch_size < 1 || config.patience < 1 ||
      config.max_epochs < 1 || !(config.learning_rate > 0.0))
    throw ParameterError("mlp_train: invalid config");
  std::set<int> present(y_train.begin(), y_train.end());
  if (present.size() < 2)
    throw DataError("mlp_train: training data holds a single class");
  for (int c : present)
    if (c < 0 || c >= num_classes)
      throw DataError("mlp_train: label outside 0.." +
                      std::to_string(num_classes - 1));

  MlpModel m;
  m.input_dim = static_cast<int>(x_train.front().size());
  m.hidden = config.hidden;
  m.num_classes = num_classes;
  check_rows(x_train, m.input_dim, "mlp_train");
  check_rows(x_val, m.input_dim, "mlp_train");

  Rng rng(seed);
  m.params.assign(m.param_count(), 0.0);
  const double lim1 = std::sqrt(6.0 / m.input_dim);
  for (std::size_t i = 0; i < static_cast<std::size_t>(m.hidden) * m.input_dim; ++i)
    m.params[m.w1_offset() + i] = (rng.uniform01() * 2.0 - 1.0) * lim1;
  const double lim2 = std::sqrt(6.0 / m.hidden);
  for (std::size_t i = 0;
       i < static_cast<std::size_t>(m.num_classes) * m.hidden; ++i)
    m.params[m.w2_offset() + i] = (rng.uniform01() * 2.0 - 1.0) * lim2;

  AdamState adam(m.param_count());
  std::vector<double> grad(m.param_count());
  std::vector<int> order(x_train.size());
  std::iota(order.begin(), order.end(), 0);

  // early stopping tracks the validation fold; degenerate callers without a
  // validation set fall back to the training loss
  const Matrix& ex = x_val.empty() ? x_train : x_val;
  const std::vector<int>& ey = x_val.empty() ? y_train : y_val;

  std::vector<double> best_params = m.params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t b0 = 0; b0 < order.size();
         b0 += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t b1 =
          std::min(order.size(), b0 + static_cast<std::size_t>(config.batch_size));
      Matrix bx;
      std::vector<int> by;
      bx.reserve(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) {
        bx.push_back(x_train[static_cast<std::size_t>(order[i])]);
        by.push_back(y_train[static_cast<std::size_t>(order[i])]);
      }
      mlp_loss_and_grad(m, bx, by, grad);
      adam_step(adam, m.params, grad, config.learning_rate);
    }
    const double val = mlp_loss(m, ex, ey);
    if (val < best_val) {
      best_val = val;
      best_params = m.params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  m.params = std::move(best_params);
  for (double& p : m.params) p = static_cast<float>(p);
  return m;
}

}  // namespace dg
