#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dg/classifiers.hpp"
#include "dg/error.hpp"
#include "dg/metrics.hpp"

namespace dg {

double ensemble_calibrate(const Matrix& p_mlp, const Matrix& p_svm,
                          const std::vector<int>& y) {
  if (y.empty()) throw ProtocolError("ensemble_calibrate: empty calibration fold");
  if (p_mlp.size() != y.size() || p_svm.size() != y.size())
    throw GeometryError("ensemble_calibrate: probability rows misaligned with labels");

  double best_lambda = 0.0;
  double best_bacc = -1.0;
  std::vector<int> pred(y.size());
  for (int step = 0; step <= 100; ++step) {
    const double lambda = step / 100.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      std::vector<double> mix(p_mlp[i].size());
      for (std::size_t c = 0; c < mix.size(); ++c)
        mix[c] = lambda * p_mlp[i][c] + (1.0 - lambda) * p_svm[i][c];
      pred[i] = argmax_class(mix);
    }
    const double bacc = balanced_accuracy(y, pred);
    if (bacc > best_bacc) {  // strict: ties keep the smallest lambda
      best_bacc = bacc;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

std::vector<double> ensemble_predict(const EnsembleModel& e,
                                     const std::vector<double>& dc_features,
                                     const std::vector<double>& volumes) {
  const std::vector<double> pm = mlp_predict_proba(e.mlp, dc_features);
  const std::vector<double> ps = svm_predict_proba(e.svm, volumes);
  if (pm.size() != ps.size())
    throw GeometryError("ensemble_predict: classifier class counts disagree");
  std::vector<double> out(pm.size());
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = e.lambda * pm[c] + (1.0 - e.lambda) * ps[c];
  return out;
}

// --- DGC1 bundle ---------------------------------------------------------------

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'D', 'G', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

}  // namespace

void write_classifier_bundle(const EnsembleModel& e,
                             const std::filesystem::path& path) {
  ordered_json header;
  header["classes"] = e.class_codes;
  header["lambda"] = e.lambda;
  header["mlp"] = ordered_json{{"input_dim", e.mlp.input_dim},
                               {"hidden", e.mlp.hidden},
                               {"num_classes", e.mlp.num_classes}};
  ordered_json machines = ordered_json::array();
  for (const SvmMachine& m : e.svm.machines)
    machines.push_back(ordered_json{
        {"support_count", m.support_vectors.size()},
        {"bias", m.bias},
        {"platt_a", m.platt_a},
        {"platt_b", m.platt_b}});
  header["svm"] = ordered_json{{"num_classes", e.svm.num_classes},
                               {"input_dim", e.svm.input_dim},
                               {"kernel", kernel_name(e.svm.kernel)},
                               {"c_value", e.svm.c_value},
                               {"gamma", e.svm.gamma},
                               {"machines", std::move(machines)}};

  const std::string json_bytes = header.dump();
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, json_bytes.size());
  out += json_bytes;
  for (double p : e.mlp.params) put_f32(out, p);
  for (const SvmMachine& m : e.svm.machines) {
    for (double d : m.dual_coef) put_f32(out, d);
    for (const auto& sv : m.support_vectors)
      for (double v : sv) put_f32(out, v);
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path.string());
}

EnsembleModel read_classifier_bundle(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(file)),
                    std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* field) {
    if (bytes.size() - pos < n)
      throw FormatError(path.string() + ": truncated " + field);
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(path.string() + ": bad magic");
  pos += 4;
  auto get_u32 = [&](const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos++])) << (8 * i);
    return v;
  };
  auto get_u64 = [&](const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[pos++])) << (8 * i);
    return v;
  };
  auto get_f32 = [&](const char* field) {
    const std::uint32_t bits = get_u32(field);
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
  };

  if (get_u32("version") != kVersion)
    throw FormatError(path.string() + ": unsupported format version");
  const std::uint64_t json_len = get_u64("header length");
  need(json_len, "JSON header");
  ordered_json header;
  try {
    header = ordered_json::parse(bytes.substr(pos, json_len));
  } catch (const std::exception& ex) {
    throw FormatError(path.string() + ": bad JSON header: " + ex.what());
  }
  pos += json_len;

  EnsembleModel e;
  std::vector<std::size_t> sv_counts;
  try {
    e.class_codes = header.at("classes").get<std::vector<int>>();
    e.lambda = header.at("lambda").get<double>();
    const auto& jm = header.at("mlp");
    e.mlp.input_dim = jm.at("input_dim").get<int>();
    e.mlp.hidden = jm.at("hidden").get<int>();
    e.mlp.num_classes = jm.at("num_classes").get<int>();
    const auto& js = header.at("svm");
    e.svm.num_classes = js.at("num_classes").get<int>();
    e.svm.input_dim = js.at("input_dim").get<int>();
    e.svm.kernel = parse_kernel(js.at("kernel").get<std::string>());
    e.svm.c_value = js.at("c_value").get<double>();
    e.svm.gamma = js.at("gamma").get<double>();
    for (const auto& m : js.at("machines")) {
      SvmMachine machine;
      machine.bias = m.at("bias").get<double>();
      machine.platt_a = m.at("platt_a").get<double>();
      machine.platt_b = m.at("platt_b").get<double>();
      sv_counts.push_back(m.at("support_count").get<std::size_t>());
      e.svm.machines.push_back(std::move(machine));
    }
  } catch (const ordered_json::exception& ex) {
    throw FormatError(path.string() + ": incomplete header: " + ex.what());
  }

  e.mlp.params.resize(e.mlp.param_count());
  for (double& p : e.mlp.params) p = get_f32("mlp payload");
  for (std::size_t c = 0; c < e.svm.machines.size(); ++c) {
    SvmMachine& machine = e.svm.machines[c];
    machine.dual_coef.resize(sv_counts[c]);
    for (double& d : machine.dual_coef) d = get_f32("svm payload");
    machine.support_vectors.assign(
        sv_counts[c], std::vector<double>(static_cast<std::size_t>(e.svm.input_dim)));
    for (auto& sv : machine.support_vectors)
      for (double& v : sv) v = get_f32("svm payload");
  }
  if (pos != bytes.size())
    throw FormatError(path.string() + ": payload length mismatch, " +
                      std::to_string(bytes.size() - pos) + " trailing bytes");
  return e;
}

}  // namespace dg
