#include "dg/grader.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dg/error.hpp"
#include "dg/parallel.hpp"

namespace dg {

void GraderConfig::validate() const {
  if (patch_dims.x <= 0 || patch_dims.y <= 0 || patch_dims.z <= 0)
    throw ParameterError("grader: patch dims must be positive");
  if (base_channels < 1) throw ParameterError("grader: base_channels must be >= 1");
  if (levels < 2) throw ParameterError("grader: levels must be >= 2");
  const int div = 1 << (levels - 1);
  if (patch_dims.x % div || patch_dims.y % div || patch_dims.z % div)
    throw ParameterError("grader: patch dims " + to_string(patch_dims) +
                         " must be divisible by " + std::to_string(div));
  if (!(learning_rate > 0.0)) throw ParameterError("grader: learning rate must be > 0");
  if (batch_size < 1) throw ParameterError("grader: batch size must be >= 1");
  if (early_stop_first < 1 || early_stop_rest < 1)
    throw ParameterError("grader: early-stop patience must be positive");
  if (max_epochs < 0) throw ParameterError("grader: max_epochs must be >= 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ParameterError("grader: validation fraction must lie in (0, 1)");
}

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw GeometryError("adam_step: parameter/gradient/state size mismatch");
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty())
    throw GeometryError("mse_loss: shape mismatch (" +
                        std::to_string(pred.size()) + " vs " +
                        std::to_string(target.size()) + ")");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target[i];
    sum += r * r;
  }
  return sum / static_cast<double>(pred.size());
}

// --- kernels ----------------------------------------------------------------

namespace {

inline std::size_t vox(const Dims& d) { return d.count(); }

// acc[x] += w3[0]*irow[x-1] + w3[1]*irow[x] + w3[2]*irow[x+1], clipped at the
// row ends. Rows stay in L1, which is what makes the 3^3 stencil fast.
inline void row_conv3(const double* __restrict irow, const double* __restrict w3,
                      double* __restrict acc, int X) {
  if (X == 1) {
    acc[0] += w3[1] * irow[0];
    return;
  }
  acc[0] += w3[1] * irow[0] + w3[2] * irow[1];
  const double w0 = w3[0], w1 = w3[1], w2 = w3[2];
  for (int x = 1; x < X - 1; ++x)
    acc[x] += w0 * irow[x - 1] + w1 * irow[x] + w2 * irow[x + 1];
  acc[X - 1] += w0 * irow[X - 2] + w1 * irow[X - 1];
}

// acc3[t] += sum_x grow[x] * irow[x + t - 1], clipped at the row ends.
inline void row_dot3(const double* __restrict grow, const double* __restrict irow,
                     double* __restrict acc3, int X) {
  if (X == 1) {
    acc3[1] += grow[0] * irow[0];
    return;
  }
  double a0 = 0.0, a1 = grow[0] * irow[0], a2 = grow[0] * irow[1];
  for (int x = 1; x < X - 1; ++x) {
    a0 += grow[x] * irow[x - 1];
    a1 += grow[x] * irow[x];
    a2 += grow[x] * irow[x + 1];
  }
  a0 += grow[X - 1] * irow[X - 2];
  a1 += grow[X - 1] * irow[X - 1];
  acc3[0] += a0;
  acc3[1] += a1;
  acc3[2] += a2;
}

void conv3_forward(const double* in, int cin, const double* w, const double* b,
                   double* out, int cout, const Dims& d, bool relu) {
  const int X = d.x, Y = d.y, Z = d.z;
  const std::size_t n = vox(d);
  for (int co = 0; co < cout; ++co) {
    double* o = out + static_cast<std::size_t>(co) * n;
    const double* wco = w + static_cast<std::size_t>(co) * cin * 27;
    for (int z = 0; z < Z; ++z)
      for (int y = 0; y < Y; ++y) {
        double* orow = o + (static_cast<std::size_t>(z) * Y + y) * X;
        std::fill(orow, orow + X, b[co]);
        const int kz_lo = z > 0 ? -1 : 0, kz_hi = z < Z - 1 ? 1 : 0;
        const int ky_lo = y > 0 ? -1 : 0, ky_hi = y < Y - 1 ? 1 : 0;
        for (int ci = 0; ci < cin; ++ci) {
          const double* src = in + static_cast<std::size_t>(ci) * n;
          const double* wk = wco + static_cast<std::size_t>(ci) * 27;
          for (int kz = kz_lo; kz <= kz_hi; ++kz)
            for (int ky = ky_lo; ky <= ky_hi; ++ky) {
              const double* irow =
                  src + (static_cast<std::size_t>(z + kz) * Y + (y + ky)) * X;
              row_conv3(irow, wk + (kz + 1) * 9 + (ky + 1) * 3, orow, X);
            }
        }
        if (relu)
          for (int x = 0; x < X; ++x)
            if (orow[x] < 0.0) orow[x] = 0.0;
      }
  }
}

// gout must already be masked for a fused ReLU. gin may be null (input layer)
// and must be zero-initialized by the caller otherwise.
void conv3_backward(const double* in, const double* gout, const double* w,
                    double* gin, double* gw, double* gb, int cin, int cout,
                    const Dims& d) {
  const int X = d.x, Y = d.y, Z = d.z;
  const std::size_t n = vox(d);

  // bias and weight gradients
  for (int co = 0; co < cout; ++co) {
    const double* g = gout + static_cast<std::size_t>(co) * n;
    double acc_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc_b += g[i];
    gb[co] += acc_b;
    for (int ci = 0; ci < cin; ++ci) {
      const double* src = in + static_cast<std::size_t>(ci) * n;
      double local[27] = {0.0};
      for (int z = 0; z < Z; ++z) {
        const int kz_lo = z > 0 ? -1 : 0, kz_hi = z < Z - 1 ? 1 : 0;
        for (int y = 0; y < Y; ++y) {
          const double* grow = g + (static_cast<std::size_t>(z) * Y + y) * X;
          const int ky_lo = y > 0 ? -1 : 0, ky_hi = y < Y - 1 ? 1 : 0;
          for (int kz = kz_lo; kz <= kz_hi; ++kz)
            for (int ky = ky_lo; ky <= ky_hi; ++ky) {
              const double* irow =
                  src + (static_cast<std::size_t>(z + kz) * Y + (y + ky)) * X;
              row_dot3(grow, irow, local + (kz + 1) * 9 + (ky + 1) * 3, X);
            }
        }
      }
      double* gwk = gw + (static_cast<std::size_t>(co) * cin + ci) * 27;
      for (int k = 0; k < 27; ++k) gwk[k] += local[k];
    }
  }

  // input gradient: a correlation of gout with the flipped kernel
  if (!gin) return;
  for (int ci = 0; ci < cin; ++ci) {
    double* gi = gin + static_cast<std::size_t>(ci) * n;
    for (int z = 0; z < Z; ++z) {
      const int kz_lo = z > 0 ? -1 : 0, kz_hi = z < Z - 1 ? 1 : 0;
      for (int y = 0; y < Y; ++y) {
        double* girow = gi + (static_cast<std::size_t>(z) * Y + y) * X;
        const int ky_lo = y > 0 ? -1 : 0, ky_hi = y < Y - 1 ? 1 : 0;
        for (int co = 0; co < cout; ++co) {
          const double* g = gout + static_cast<std::size_t>(co) * n;
          const double* wk = w + (static_cast<std::size_t>(co) * cin + ci) * 27;
          for (int kz = kz_lo; kz <= kz_hi; ++kz)
            for (int ky = ky_lo; ky <= ky_hi; ++ky) {
              const double* grow =
                  g + (static_cast<std::size_t>(z + kz) * Y + (y + ky)) * X;
              // flipped taps: gin(v) += w[-k] * gout(v - (-k))
              const double* wf = wk + (1 - kz) * 9 + (1 - ky) * 3;
              const double w3f[3] = {wf[2], wf[1], wf[0]};
              row_conv3(grow, w3f, girow, X);
            }
        }
      }
    }
  }
}

void conv1_forward(const double* in, int cin, const double* w, const double* b,
                   double* out, int cout, const Dims& d, bool relu) {
  const std::size_t n = vox(d);
  for (int co = 0; co < cout; ++co) {
    double* o = out + static_cast<std::size_t>(co) * n;
    std::fill(o, o + n, b[co]);
    for (int ci = 0; ci < cin; ++ci) {
      const double wgt = w[static_cast<std::size_t>(co) * cin + ci];
      const double* src = in + static_cast<std::size_t>(ci) * n;
      for (std::size_t i = 0; i < n; ++i) o[i] += wgt * src[i];
    }
    if (relu)
      for (std::size_t i = 0; i < n; ++i)
        if (o[i] < 0.0) o[i] = 0.0;
  }
}

void conv1_backward(const double* in, const double* gout, const double* w,
                    double* gin, double* gw, double* gb, int cin, int cout,
                    const Dims& d) {
  const std::size_t n = vox(d);
  for (int co = 0; co < cout; ++co) {
    const double* g = gout + static_cast<std::size_t>(co) * n;
    double acc_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc_b += g[i];
    gb[co] += acc_b;
    for (int ci = 0; ci < cin; ++ci) {
      const double* src = in + static_cast<std::size_t>(ci) * n;
      double acc_w = 0.0;
      if (gin) {
        double* gsrc = gin + static_cast<std::size_t>(ci) * n;
        const double wgt = w[static_cast<std::size_t>(co) * cin + ci];
        for (std::size_t i = 0; i < n; ++i) {
          acc_w += g[i] * src[i];
          gsrc[i] += wgt * g[i];
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) acc_w += g[i] * src[i];
      }
      gw[static_cast<std::size_t>(co) * cin + ci] += acc_w;
    }
  }
}

void pool_forward(const double* in, int channels, const Dims& din, double* out,
                  std::int32_t* argmax, const Dims& dout) {
  const std::size_t nin = vox(din), nout = vox(dout);
  for (int c = 0; c < channels; ++c) {
    const double* src = in + static_cast<std::size_t>(c) * nin;
    double* o = out + static_cast<std::size_t>(c) * nout;
    std::int32_t* am = argmax + static_cast<std::size_t>(c) * nout;
    std::size_t oi = 0;
    for (int z = 0; z < dout.z; ++z)
      for (int y = 0; y < dout.y; ++y)
        for (int x = 0; x < dout.x; ++x, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          std::int32_t best_i = -1;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t ii =
                    static_cast<std::size_t>(2 * x + dx) +
                    static_cast<std::size_t>(din.x) *
                        (static_cast<std::size_t>(2 * y + dy) +
                         static_cast<std::size_t>(din.y) *
                             static_cast<std::size_t>(2 * z + dz));
                if (src[ii] > best) {  // strict: ties keep the first in scan order
                  best = src[ii];
                  best_i = static_cast<std::int32_t>(ii);
                }
              }
          o[oi] = best;
          am[oi] = best_i;
        }
  }
}

void pool_backward(const double* gout, const std::int32_t* argmax, int channels,
                   const Dims& din, const Dims& dout, double* gin) {
  const std::size_t nin = vox(din), nout = vox(dout);
  for (int c = 0; c < channels; ++c) {
    const double* g = gout + static_cast<std::size_t>(c) * nout;
    const std::int32_t* am = argmax + static_cast<std::size_t>(c) * nout;
    double* gi = gin + static_cast<std::size_t>(c) * nin;
    for (std::size_t i = 0; i < nout; ++i) gi[am[i]] += g[i];
  }
}

void upsample_forward(const double* in, int channels, const Dims& din,
                      double* out, const Dims& dout) {
  const std::size_t nin = vox(din), nout = vox(dout);
  for (int c = 0; c < channels; ++c) {
    const double* src = in + static_cast<std::size_t>(c) * nin;
    double* o = out + static_cast<std::size_t>(c) * nout;
    std::size_t oi = 0;
    for (int z = 0; z < dout.z; ++z)
      for (int y = 0; y < dout.y; ++y) {
        const double* srow =
            src + (static_cast<std::size_t>(z / 2) * din.y + (y / 2)) * din.x;
        for (int x = 0; x < dout.x; ++x, ++oi) o[oi] = srow[x / 2];
      }
  }
}

void upsample_backward(const double* gout, int channels, const Dims& din,
                       const Dims& dout, double* gin) {
  const std::size_t nin = vox(din), nout = vox(dout);
  for (int c = 0; c < channels; ++c) {
    const double* g = gout + static_cast<std::size_t>(c) * nout;
    double* gi = gin + static_cast<std::size_t>(c) * nin;
    std::size_t oi = 0;
    for (int z = 0; z < dout.z; ++z)
      for (int y = 0; y < dout.y; ++y) {
        double* grow =
            gi + (static_cast<std::size_t>(z / 2) * din.y + (y / 2)) * din.x;
        for (int x = 0; x < dout.x; ++x, ++oi) grow[x / 2] += g[oi];
      }
  }
}

}  // namespace

// --- plan --------------------------------------------------------------------

struct GraderNet::Op {
  enum Kind { kConv3, kConv1, kPool, kUpsample, kConcat } kind;
  int in_a = -1;
  int in_b = -1;
  int out = -1;
  int layer = -1;       // index into layers_ for convs
  int pool_store = -1;  // index into pool_argmax for pools
  std::string name;
};

GraderNet::~GraderNet() = default;
GraderNet::GraderNet(GraderNet&&) noexcept = default;
GraderNet& GraderNet::operator=(GraderNet&&) noexcept = default;

GraderNet::GraderNet(const GraderConfig& config) : config_(config) {
  config.validate();
  const int levels = config.levels;
  const int bc = config.base_channels;

  auto level_dims = [&](int l) {
    return Dims{config.patch_dims.x >> l, config.patch_dims.y >> l,
                config.patch_dims.z >> l};
  };
  auto add_slot = [&](int channels, Dims dims) {
    slots_.push_back({channels, dims});
    return static_cast<int>(slots_.size() - 1);
  };
  auto add_conv = [&](const std::string& name, bool one_cubed, int in_slot,
                      int out_channels, bool relu) {
    const Slot& in = slots_[in_slot];
    LayerDescriptor ld;
    ld.name = name;
    ld.kind = one_cubed ? "conv1" : "conv3";
    ld.in_channels = in.channels;
    ld.out_channels = out_channels;
    ld.relu = relu;
    ld.weight_offset = param_count_;
    ld.weight_count = static_cast<std::size_t>(out_channels) * in.channels *
                      (one_cubed ? 1 : 27);
    ld.bias_offset = ld.weight_offset + ld.weight_count;
    ld.bias_count = static_cast<std::size_t>(out_channels);
    param_count_ = ld.bias_offset + ld.bias_count;
    layers_.push_back(ld);

    Op op;
    op.kind = one_cubed ? Op::kConv1 : Op::kConv3;
    op.in_a = in_slot;
    op.out = add_slot(out_channels, in.dims);
    op.layer = static_cast<int>(layers_.size() - 1);
    op.name = name;
    ops_.push_back(op);
    return op.out;
  };

  int cur = add_slot(1, level_dims(0));
  std::vector<int> skip(levels, -1);
  for (int l = 0; l < levels; ++l) {
    if (l > 0) {
      Op op;
      op.kind = Op::kPool;
      op.in_a = cur;
      op.out = add_slot(slots_[cur].channels, level_dims(l));
      op.pool_store = pool_stores_++;
      op.name = "pool" + std::to_string(l - 1);
      ops_.push_back(op);
      cur = op.out;
    }
    const int ch = bc << l;
    const std::string base = "enc" + std::to_string(l);
    cur = add_conv(base + ".conv0", false, cur, ch, true);
    cur = add_conv(base + ".conv1", false, cur, ch, true);
    skip[l] = cur;
  }
  for (int l = levels - 2; l >= 0; --l) {
    Op up;
    up.kind = Op::kUpsample;
    up.in_a = cur;
    up.out = add_slot(slots_[cur].channels, level_dims(l));
    up.name = "up" + std::to_string(l);
    ops_.push_back(up);

    Op cat;
    cat.kind = Op::kConcat;
    cat.in_a = skip[l];
    cat.in_b = up.out;
    cat.out = add_slot(slots_[skip[l]].channels + slots_[up.out].channels,
                       level_dims(l));
    cat.name = "concat" + std::to_string(l);
    ops_.push_back(cat);
    cur = cat.out;

    const int ch = bc << l;
    const std::string base = "dec" + std::to_string(l);
    cur = add_conv(base + ".conv0", false, cur, ch, true);
    cur = add_conv(base + ".conv1", false, cur, ch, true);
  }
  cur = add_conv("head", true, cur, 2, false);
  output_slot_ = cur;
}

std::size_t GraderNet::output_size() const { return 2 * vox(config_.patch_dims); }

std::vector<double> GraderNet::initial_params(Rng& rng) const {
  std::vector<double> params(param_count_, 0.0);
  for (const LayerDescriptor& ld : layers_) {
    const double fan_in =
        static_cast<double>(ld.in_channels) * (ld.kind == "conv3" ? 27.0 : 1.0);
    const double limit = std::sqrt(6.0 / fan_in);
    for (std::size_t i = 0; i < ld.weight_count; ++i)
      params[ld.weight_offset + i] = (rng.uniform01() * 2.0 - 1.0) * limit;
    // biases stay zero
  }
  return params;
}

GraderNet::Workspace GraderNet::make_workspace() const {
  Workspace ws;
  ws.act.resize(slots_.size());
  ws.grad.resize(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i)
    ws.act[i].resize(static_cast<std::size_t>(slots_[i].channels) *
                     vox(slots_[i].dims));
  ws.pool_argmax.resize(pool_stores_);
  for (const Op& op : ops_)
    if (op.kind == Op::kPool)
      ws.pool_argmax[op.pool_store].resize(ws.act[op.out].size());
  return ws;
}

void GraderNet::check_finite(const Workspace& ws, const Op& op) const {
  for (double v : ws.act[op.out])
    if (!std::isfinite(v))
      throw NumericError("grader: non-finite activation in layer " + op.name);
}

void GraderNet::forward(std::span<const double> patch,
                        std::span<const double> params, Workspace& ws) const {
  if (patch.size() != vox(config_.patch_dims))
    throw GeometryError("grader forward: patch has " +
                        std::to_string(patch.size()) + " voxels, expected " +
                        std::to_string(vox(config_.patch_dims)));
  if (params.size() != param_count_)
    throw GeometryError("grader forward: parameter count mismatch");
  std::copy(patch.begin(), patch.end(), ws.act[0].begin());

  for (const Op& op : ops_) {
    const Slot& sin = slots_[op.in_a];
    const Slot& sout = slots_[op.out];
    switch (op.kind) {
      case Op::kConv3: {
        const LayerDescriptor& ld = layers_[op.layer];
        conv3_forward(ws.act[op.in_a].data(), ld.in_channels,
                      params.data() + ld.weight_offset,
                      params.data() + ld.bias_offset, ws.act[op.out].data(),
                      ld.out_channels, sin.dims, ld.relu);
        break;
      }
      case Op::kConv1: {
        const LayerDescriptor& ld = layers_[op.layer];
        conv1_forward(ws.act[op.in_a].data(), ld.in_channels,
                      params.data() + ld.weight_offset,
                      params.data() + ld.bias_offset, ws.act[op.out].data(),
                      ld.out_channels, sin.dims, ld.relu);
        break;
      }
      case Op::kPool:
        pool_forward(ws.act[op.in_a].data(), sin.channels, sin.dims,
                     ws.act[op.out].data(),
                     ws.pool_argmax[op.pool_store].data(), sout.dims);
        break;
      case Op::kUpsample:
        upsample_forward(ws.act[op.in_a].data(), sin.channels, sin.dims,
                         ws.act[op.out].data(), sout.dims);
        break;
      case Op::kConcat: {
        const auto& a = ws.act[op.in_a];
        const auto& b = ws.act[op.in_b];
        std::copy(a.begin(), a.end(), ws.act[op.out].begin());
        std::copy(b.begin(), b.end(), ws.act[op.out].begin() + a.size());
        break;
      }
    }
  }
  // one cheap sanity check at the end; on failure walk back to name the layer
  for (double v : ws.act[output_slot_])
    if (!std::isfinite(v)) {
      for (const Op& op : ops_) check_finite(ws, op);
      throw NumericError("grader: non-finite activation in layer head");
    }
}

std::span<const double> GraderNet::output(const Workspace& ws) const {
  return {ws.act[output_slot_].data(), ws.act[output_slot_].size()};
}

double GraderNet::loss(const Workspace& ws,
                       std::span<const double> target) const {
  return mse_loss(output(ws), target);
}

void GraderNet::backward_mse(Workspace& ws, std::span<const double> params,
                             std::span<const double> target, double loss_scale,
                             std::span<double> grad) const {
  if (grad.size() != param_count_)
    throw GeometryError("grader backward: gradient buffer size mismatch");
  const std::span<const double> pred = output(ws);
  if (target.size() != pred.size())
    throw GeometryError("grader backward: target size mismatch");

  // lazily sized gradient buffers, zeroed each call
  for (std::size_t i = 0; i < slots_.size(); ++i)
    ws.grad[i].assign(ws.act[i].size(), 0.0);

  const double scale = 2.0 * loss_scale / static_cast<double>(pred.size());
  {
    auto& g = ws.grad[output_slot_];
    for (std::size_t i = 0; i < pred.size(); ++i)
      g[i] = scale * (pred[i] - target[i]);
  }

  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const Op& op = *it;
    const Slot& sin = slots_[op.in_a];
    const Slot& sout = slots_[op.out];
    switch (op.kind) {
      case Op::kConv3:
      case Op::kConv1: {
        const LayerDescriptor& ld = layers_[op.layer];
        auto& gout = ws.grad[op.out];
        if (ld.relu) {
          const auto& act = ws.act[op.out];
          for (std::size_t i = 0; i < gout.size(); ++i)
            if (act[i] <= 0.0) gout[i] = 0.0;
        }
        double* gin = op.in_a == 0 ? nullptr : ws.grad[op.in_a].data();
        if (op.kind == Op::kConv3)
          conv3_backward(ws.act[op.in_a].data(), gout.data(),
                         params.data() + ld.weight_offset, gin,
                         grad.data() + ld.weight_offset,
                         grad.data() + ld.bias_offset, ld.in_channels,
                         ld.out_channels, sin.dims);
        else
          conv1_backward(ws.act[op.in_a].data(), gout.data(),
                         params.data() + ld.weight_offset, gin,
                         grad.data() + ld.weight_offset,
                         grad.data() + ld.bias_offset, ld.in_channels,
                         ld.out_channels, sin.dims);
        break;
      }
      case Op::kPool:
        pool_backward(ws.grad[op.out].data(),
                      ws.pool_argmax[op.pool_store].data(), sin.channels,
                      sin.dims, sout.dims, ws.grad[op.in_a].data());
        break;
      case Op::kUpsample:
        upsample_backward(ws.grad[op.out].data(), sin.channels, sin.dims,
                          sout.dims, ws.grad[op.in_a].data());
        break;
      case Op::kConcat: {
        const auto& g = ws.grad[op.out];
        auto& ga = ws.grad[op.in_a];
        auto& gb = ws.grad[op.in_b];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[ga.size() + i];
        break;
      }
    }
  }
}

std::vector<double> forward_patch(const GraderWeights& w,
                                  std::span<const double> patch) {
  GraderNet net(w.config);
  if (w.params.size() != net.param_count())
    throw GeometryError("forward_patch: weight count does not match config");
  GraderNet::Workspace ws = net.make_workspace();
  net.forward(patch, w.params, ws);
  const auto out = net.output(ws);
  return {out.begin(), out.end()};
}

// --- training ---------------------------------------------------------------

namespace {

struct PatchBuffers {
  std::vector<double> intensity;
  std::vector<std::uint8_t> inside;
  std::vector<double> input;    // after mixup
  std::vector<double> target;   // 2 channels
};

// Extracts the window at start+t with edge replication at the volume border.
void extract_patch(const GraderSubject& s, const Dims& start, const Dims& patch,
                   int tx, int ty, int tz, double* intensity,
                   std::uint8_t* inside) {
  const Dims vd = s.volume->dims();
  std::size_t o = 0;
  for (int z = 0; z < patch.z; ++z) {
    const int sz = std::clamp(start.z + z + tz, 0, vd.z - 1);
    for (int y = 0; y < patch.y; ++y) {
      const int sy = std::clamp(start.y + y + ty, 0, vd.y - 1);
      const std::size_t row_base =
          (static_cast<std::size_t>(sz) * vd.y + sy) * vd.x;
      for (int x = 0; x < patch.x; ++x, ++o) {
        const int sx = std::clamp(start.x + x + tx, 0, vd.x - 1);
        intensity[o] = s.volume->data()[row_base + sx];
        inside[o] = (*s.icc)[row_base + sx];
      }
    }
  }
}

void fill_target_unmixed(const GraderSubject& s, const std::uint8_t* inside,
                         std::size_t n, double* target) {
  const DCPoint anchor = class_to_dc(s.cls);
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = inside[i] ? anchor.x : 0.0;
    target[n + i] = inside[i] ? anchor.y : 0.0;
  }
}

void check_dataset(const PatchDataset& data, const GraderConfig& cfg) {
  if (data.subjects.empty()) throw DataError("train_grader: empty dataset");
  for (const GraderSubject& s : data.subjects) {
    if (!s.volume || !s.icc)
      throw DataError("train_grader: subject without volume or ICC mask");
    if (!(s.volume->dims() == data.volume_dims))
      throw GeometryError("train_grader: subject dims " +
                          to_string(s.volume->dims()) +
                          " do not match dataset dims " +
                          to_string(data.volume_dims));
    if (s.icc->size() != s.volume->size())
      throw GeometryError("train_grader: ICC mask size mismatch");
  }
  if (data.start.x < 0 || data.start.y < 0 || data.start.z < 0 ||
      data.start.x + cfg.patch_dims.x > data.volume_dims.x ||
      data.start.y + cfg.patch_dims.y > data.volume_dims.y ||
      data.start.z + cfg.patch_dims.z > data.volume_dims.z)
    throw GeometryError("train_grader: patch window exceeds volume");
}

}  // namespace

double patch_mse(const GraderWeights& w, const PatchDataset& data,
                 const std::vector<int>& subject_indices) {
  GraderNet net(w.config);
  GraderNet::Workspace ws = net.make_workspace();
  const std::size_t n = vox(w.config.patch_dims);
  std::vector<double> intensity(n), target(2 * n);
  std::vector<std::uint8_t> inside(n);
  double total = 0.0;
  for (int idx : subject_indices) {
    const GraderSubject& s = data.subjects[static_cast<std::size_t>(idx)];
    extract_patch(s, data.start, w.config.patch_dims, 0, 0, 0, intensity.data(),
                  inside.data());
    fill_target_unmixed(s, inside.data(), n, target.data());
    net.forward(intensity, w.params, ws);
    total += net.loss(ws, target);
  }
  return subject_indices.empty() ? 0.0 : total / subject_indices.size();
}

GraderWeights train_grader(const PatchDataset& data, const GraderWeights* init,
                           const GraderConfig& config, std::uint64_t seed,
                           GraderTrainStats* stats) {
  config.validate();
  check_dataset(data, config);
  GraderNet net(config);
  Rng rng(seed);

  std::vector<double> params;
  if (init) {
    if (init->params.size() != net.param_count())
      throw GeometryError("train_grader: init weights do not match config");
    params = init->params;
  } else {
    params = net.initial_params(rng);
  }

  // stratified 80/20 split, reshuffled per call
  std::vector<std::vector<int>> by_class(3);
  for (std::size_t i = 0; i < data.subjects.size(); ++i)
    by_class[static_cast<int>(data.subjects[i].cls)].push_back(
        static_cast<int>(i));
  std::vector<int> train_idx, val_idx;
  for (auto& group : by_class) {
    rng.shuffle(group);
    const int n = static_cast<int>(group.size());
    int n_val = static_cast<int>(
        std::llround(config.validation_fraction * static_cast<double>(n)));
    n_val = std::min(n_val, n - 1);
    if (n >= 2) n_val = std::max(n_val, 1);
    if (n_val < 0) n_val = 0;
    for (int i = 0; i < n; ++i)
      (i < n_val ? val_idx : train_idx).push_back(group[i]);
  }
  // degenerate datasets validate on the training patches
  const std::vector<int>& val_set = val_idx.empty() ? train_idx : val_idx;

  const std::size_t P = vox(config.patch_dims);
  const int bs = std::min<int>(config.batch_size,
                               static_cast<int>(train_idx.size()));
  std::vector<PatchBuffers> buffers(static_cast<std::size_t>(bs));
  for (auto& b : buffers) {
    b.intensity.resize(P);
    b.inside.resize(P);
    b.input.resize(P);
    b.target.resize(2 * P);
  }
  std::vector<GraderNet::Workspace> workspaces;
  std::vector<std::vector<double>> slot_grads;
  for (int i = 0; i < bs; ++i) {
    workspaces.push_back(net.make_workspace());
    slot_grads.emplace_back(net.param_count(), 0.0);
  }
  std::vector<double> batch_grad(net.param_count());
  AdamState adam(net.param_count());

  // validation workspaces, one per worker; workers take strided samples
  const std::size_t val_slots = static_cast<std::size_t>(
      std::max(1, std::min<int>(static_cast<int>(val_set.size()), worker_count())));
  std::vector<GraderNet::Workspace> val_ws;
  std::vector<PatchBuffers> val_buffers(val_slots);
  for (std::size_t i = 0; i < val_slots; ++i) {
    val_ws.push_back(net.make_workspace());
    val_buffers[i].intensity.resize(P);
    val_buffers[i].inside.resize(P);
    val_buffers[i].target.resize(2 * P);
  }

  auto validation_loss = [&]() {
    std::vector<double> losses(val_set.size(), 0.0);
    parallel_for(val_slots, [&](std::size_t w) {
      PatchBuffers& b = val_buffers[w];
      GraderNet::Workspace& ws = val_ws[w];
      for (std::size_t i = w; i < val_set.size(); i += val_slots) {
        const GraderSubject& s =
            data.subjects[static_cast<std::size_t>(val_set[i])];
        extract_patch(s, data.start, config.patch_dims, 0, 0, 0,
                      b.intensity.data(), b.inside.data());
        fill_target_unmixed(s, b.inside.data(), P, b.target.data());
        net.forward(b.intensity, params, ws);
        losses[i] = net.loss(ws, b.target);
      }
    });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(losses.size());
  };

  const int patience = init ? config.early_stop_rest : config.early_stop_first;
  std::vector<double> best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since_best = 0;
  int epoch = 0;

  std::vector<int> order = train_idx;
  struct AugPlan {
    int tx, ty, tz;
    int partner;
    double alpha;
  };
  std::vector<AugPlan> plans(static_cast<std::size_t>(bs));
  std::vector<int> perm(static_cast<std::size_t>(bs));

  while (true) {
    ++epoch;
    rng.shuffle(order);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(bs)) {
      const int cur = static_cast<int>(
          std::min<std::size_t>(static_cast<std::size_t>(bs), order.size() - b0));
      // all randomness is drawn here, on one thread, in slot order
      for (int j = 0; j < cur; ++j) {
        AugPlan& p = plans[static_cast<std::size_t>(j)];
        if (config.translation) {
          p.tx = rng.uniform_int(-1, 1);
          p.ty = rng.uniform_int(-1, 1);
          p.tz = rng.uniform_int(-1, 1);
        } else {
          p.tx = p.ty = p.tz = 0;
        }
      }
      const bool mix = config.mixup && cur >= 2;
      if (mix) {
        for (int j = 0; j < cur; ++j) perm[static_cast<std::size_t>(j)] = j;
        std::vector<int> sub(perm.begin(), perm.begin() + cur);
        rng.shuffle(sub);
        for (int j = 0; j < cur; ++j) {
          plans[static_cast<std::size_t>(j)].partner = sub[static_cast<std::size_t>(j)];
          plans[static_cast<std::size_t>(j)].alpha = rng.uniform_open01();
        }
      }

      for (int j = 0; j < cur; ++j) {
        PatchBuffers& buf = buffers[static_cast<std::size_t>(j)];
        const AugPlan& p = plans[static_cast<std::size_t>(j)];
        const GraderSubject& s =
            data.subjects[static_cast<std::size_t>(order[b0 + j])];
        extract_patch(s, data.start, config.patch_dims, p.tx, p.ty, p.tz,
                      buf.intensity.data(), buf.inside.data());
      }
      for (int j = 0; j < cur; ++j) {
        PatchBuffers& buf = buffers[static_cast<std::size_t>(j)];
        const AugPlan& p = plans[static_cast<std::size_t>(j)];
        const GraderSubject& s =
            data.subjects[static_cast<std::size_t>(order[b0 + j])];
        if (!mix) {
          std::copy(buf.intensity.begin(), buf.intensity.end(),
                    buf.input.begin());
          fill_target_unmixed(s, buf.inside.data(), P, buf.target.data());
          continue;
        }
        const PatchBuffers& other = buffers[static_cast<std::size_t>(p.partner)];
        const GraderSubject& s2 =
            data.subjects[static_cast<std::size_t>(order[b0 + p.partner])];
        // the four possible voxel pairings (inside/outside x inside/outside)
        // fix the mixed target; intensities mix per voxel
        DCPoint table[2][2];
        for (int a = 0; a < 2; ++a)
          for (int c = 0; c < 2; ++c)
            table[a][c] = dc_mixup(0.0, voxel_target(s.cls, a == 1), 0.0,
                                   voxel_target(s2.cls, c == 1), p.alpha)
                              .point;
        const double alpha = p.alpha, beta = 1.0 - p.alpha;
        for (std::size_t v = 0; v < P; ++v) {
          buf.input[v] = alpha * buf.intensity[v] + beta * other.intensity[v];
          const DCPoint& t = table[buf.inside[v]][other.inside[v]];
          buf.target[v] = t.x;
          buf.target[P + v] = t.y;
        }
      }

      parallel_for(static_cast<std::size_t>(cur), [&](std::size_t j) {
        PatchBuffers& buf = buffers[j];
        GraderNet::Workspace& ws = workspaces[j];
        std::fill(slot_grads[j].begin(), slot_grads[j].end(), 0.0);
        net.forward(buf.input, params, ws);
        net.backward_mse(ws, params, buf.target, 1.0 / cur, slot_grads[j]);
      });
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      for (int j = 0; j < cur; ++j)
        for (std::size_t i = 0; i < batch_grad.size(); ++i)
          batch_grad[i] += slot_grads[static_cast<std::size_t>(j)][i];
      adam_step(adam, params, batch_grad, config.learning_rate);
    }

    const double val = validation_loss();
    if (stats) stats->val_history.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_params = params;
      best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= patience) break;
    if (config.max_epochs > 0 && epoch >= config.max_epochs) break;
  }

  // quantize to the file precision so the in-memory model matches its round
  // trip through DGW1
  for (double& p : best_params) p = to_file_precision(p);

  if (stats) {
    stats->epochs_run = epoch;
    stats->best_epoch = best_epoch;
    stats->best_val_loss = best_val;
    stats->train_subjects = train_idx;
    stats->val_subjects = val_set;
  }

  GraderWeights out;
  out.config = config;
  out.coord = init ? init->coord : GridCoord{};
  out.params = std::move(best_params);
  return out;
}

GraderEnsemble train_ensemble(const std::vector<GraderSubject>& subjects,
                              const GridSpec& grid, const GraderConfig& config,
                              std::uint64_t seed) {
  config.validate();
  if (!(grid.patch_dims == config.patch_dims))
    throw GeometryError("train_ensemble: grid patch dims " +
                        to_string(grid.patch_dims) + " do not match config " +
                        to_string(config.patch_dims));
  if (subjects.empty()) throw DataError("train_ensemble: empty dataset");

  GraderEnsemble e;
  e.grid = grid;
  e.config = config;
  e.seed = seed;
  const int m = grid.num_patches();
  e.members.reserve(m);
  e.manifest.reserve(m);

  for (int i = 0; i < m; ++i) {
    const GridCoord coord = grid.coord_of(i);

    int init_from = -1;
    for (int j = 0; j < i; ++j) {
      const int dist = coord.manhattan(grid.coord_of(j));
      if (init_from < 0 || dist < coord.manhattan(grid.coord_of(init_from)))
        init_from = j;  // ties keep the lowest raster index
    }

    PatchDataset data;
    data.subjects = subjects;
    data.start = grid.start_of(coord);
    data.volume_dims = grid.volume_dims;

    GraderWeights seed_weights;
    const GraderWeights* init = nullptr;
    if (init_from >= 0) {
      seed_weights = e.members[static_cast<std::size_t>(init_from)];
      seed_weights.coord = coord;
      init = &seed_weights;
    }

    GraderTrainStats stats;
    const std::uint64_t member_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    GraderWeights w = train_grader(data, init, config, member_seed, &stats);
    w.coord = coord;

    MemberManifest mm;
    mm.index = i;
    mm.coord = coord;
    mm.init_from = init_from;
    mm.seed = member_seed;
    mm.epochs_run = stats.epochs_run;
    mm.best_epoch = stats.best_epoch;
    mm.best_val_loss = stats.best_val_loss;
    e.members.push_back(std::move(w));
    e.manifest.push_back(mm);
  }
  return e;
}

DCMap grade_volume(const Volume3D& downscaled, const GraderEnsemble& ensemble,
                   Dims original_dims) {
  const GridSpec& grid = ensemble.grid;
  if (!(downscaled.dims() == grid.volume_dims))
    throw GeometryError("grade_volume: volume dims " +
                        to_string(downscaled.dims()) +
                        " do not match grid dims " + to_string(grid.volume_dims));
  if (ensemble.members.size() != static_cast<std::size_t>(grid.num_patches()))
    throw GeometryError("grade_volume: ensemble has " +
                        std::to_string(ensemble.members.size()) +
                        " members for " + std::to_string(grid.num_patches()) +
                        " patches");

  const std::vector<Volume3D> patches = extract_patches(downscaled, grid);
  std::vector<DCMap> outputs(patches.size());
  GraderNet net(ensemble.config);
  parallel_for(patches.size(), [&](std::size_t i) {
    GraderNet::Workspace ws = net.make_workspace();
    net.forward(patches[i].data(), ensemble.members[i].params, ws);
    const auto out = net.output(ws);
    DCMap patch_map(grid.patch_dims);
    std::copy(out.begin(), out.end(), patch_map.data().begin());
    if (ensemble.config.clamp_output) {
      const std::size_t n = patch_map.voxels();
      for (std::size_t v = 0; v < n; ++v) {
        const double x = patch_map.at(0, v), y = patch_map.at(1, v);
        const double norm = std::sqrt(x * x + y * y);
        if (norm > 1.0) {
          patch_map.at(0, v) = x / norm;
          patch_map.at(1, v) = y / norm;
        }
      }
    }
    outputs[i] = std::move(patch_map);
  });

  DCMap map = reconstruct(outputs, grid);
  return upscale_to(map, original_dims);
}

}  // namespace dg
