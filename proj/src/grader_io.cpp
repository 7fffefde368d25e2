#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dg/error.hpp"
#include "dg/grader.hpp"

namespace dg {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'D', 'G', 'W', '1'};
constexpr std::uint32_t kVersion = 1;

ordered_json dims_json(const Dims& d) { return ordered_json::array({d.x, d.y, d.z}); }

Dims dims_from(const ordered_json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3)
    throw FormatError("ensemble file: malformed dims for " + what);
  return Dims{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

ordered_json config_json(const GraderConfig& c) {
  return ordered_json{{"patch_dims", dims_json(c.patch_dims)},
                      {"base_channels", c.base_channels},
                      {"levels", c.levels},
                      {"learning_rate", c.learning_rate},
                      {"batch_size", c.batch_size},
                      {"early_stop_first", c.early_stop_first},
                      {"early_stop_rest", c.early_stop_rest},
                      {"max_epochs", c.max_epochs},
                      {"mixup", c.mixup},
                      {"translation", c.translation},
                      {"clamp_output", c.clamp_output},
                      {"validation_fraction", c.validation_fraction}};
}

GraderConfig config_from(const ordered_json& j) {
  GraderConfig c;
  c.patch_dims = dims_from(j.at("patch_dims"), "config.patch_dims");
  c.base_channels = j.at("base_channels").get<int>();
  c.levels = j.at("levels").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.early_stop_first = j.at("early_stop_first").get<int>();
  c.early_stop_rest = j.at("early_stop_rest").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.mixup = j.at("mixup").get<bool>();
  c.translation = j.at("translation").get<bool>();
  c.clamp_output = j.at("clamp_output").get<bool>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  return c;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

void write_ensemble(const GraderEnsemble& e, const std::filesystem::path& path) {
  if (e.members.size() != static_cast<std::size_t>(e.grid.num_patches()))
    throw GeometryError("write_ensemble: member count " +
                        std::to_string(e.members.size()) +
                        " does not match grid " +
                        std::to_string(e.grid.num_patches()));
  GraderNet net(e.config);

  ordered_json header;
  header["grid"] = ordered_json{{"k", e.grid.k},
                                {"patch_dims", dims_json(e.grid.patch_dims)},
                                {"volume_dims", dims_json(e.grid.volume_dims)},
                                {"starts_x", e.grid.starts_x},
                                {"starts_y", e.grid.starts_y},
                                {"starts_z", e.grid.starts_z}};
  header["config"] = config_json(e.config);
  header["seed"] = e.seed;
  ordered_json layers = ordered_json::array();
  for (const LayerDescriptor& ld : net.layers())
    layers.push_back(ordered_json{{"name", ld.name},
                                  {"kind", ld.kind},
                                  {"in_channels", ld.in_channels},
                                  {"out_channels", ld.out_channels},
                                  {"relu", ld.relu},
                                  {"weight_offset", ld.weight_offset},
                                  {"weight_count", ld.weight_count},
                                  {"bias_offset", ld.bias_offset},
                                  {"bias_count", ld.bias_count}});
  header["layers"] = std::move(layers);
  header["param_count"] = net.param_count();
  ordered_json manifest = ordered_json::array();
  for (const MemberManifest& m : e.manifest)
    manifest.push_back(
        ordered_json{{"index", m.index},
                     {"coord", ordered_json::array({m.coord.gx, m.coord.gy, m.coord.gz})},
                     {"init_from", m.init_from},
                     {"seed", m.seed},
                     {"epochs_run", m.epochs_run},
                     {"best_epoch", m.best_epoch},
                     {"best_val_loss", m.best_val_loss}});
  header["manifest"] = std::move(manifest);

  const std::string json_bytes = header.dump();
  std::string out;
  out.reserve(16 + json_bytes.size() + e.members.size() * net.param_count() * 4);
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, json_bytes.size());
  out += json_bytes;
  for (const GraderWeights& w : e.members) {
    if (w.params.size() != net.param_count())
      throw GeometryError("write_ensemble: member parameter count mismatch");
    for (double p : w.params) {
      if (!std::isfinite(p))
        throw DataError("write_ensemble: non-finite weight");
      const float f = static_cast<float>(p);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path.string());
}

GraderEnsemble read_ensemble(const std::filesystem::path& path) {
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
  const std::uint32_t version = get_u32("version");
  if (version != kVersion)
    throw FormatError(path.string() + ": unsupported format version " +
                      std::to_string(version));
  const std::uint64_t json_len = get_u64("header length");
  need(json_len, "JSON header");
  ordered_json header;
  try {
    header = ordered_json::parse(bytes.substr(pos, json_len));
  } catch (const std::exception& ex) {
    throw FormatError(path.string() + ": bad JSON header: " + ex.what());
  }
  pos += json_len;

  GraderEnsemble e;
  try {
    const auto& g = header.at("grid");
    e.grid.k = g.at("k").get<int>();
    e.grid.patch_dims = dims_from(g.at("patch_dims"), "grid.patch_dims");
    e.grid.volume_dims = dims_from(g.at("volume_dims"), "grid.volume_dims");
    e.grid.starts_x = g.at("starts_x").get<std::vector<int>>();
    e.grid.starts_y = g.at("starts_y").get<std::vector<int>>();
    e.grid.starts_z = g.at("starts_z").get<std::vector<int>>();
    e.config = config_from(header.at("config"));
    e.seed = header.at("seed").get<std::uint64_t>();
    for (const auto& m : header.at("manifest")) {
      MemberManifest mm;
      mm.index = m.at("index").get<int>();
      const auto& c = m.at("coord");
      mm.coord = GridCoord{c[0].get<int>(), c[1].get<int>(), c[2].get<int>()};
      mm.init_from = m.at("init_from").get<int>();
      mm.seed = m.at("seed").get<std::uint64_t>();
      mm.epochs_run = m.at("epochs_run").get<int>();
      mm.best_epoch = m.at("best_epoch").get<int>();
      mm.best_val_loss = m.at("best_val_loss").get<double>();
      e.manifest.push_back(mm);
    }
  } catch (const ordered_json::exception& ex) {
    throw FormatError(path.string() + ": incomplete header: " + ex.what());
  }

  GraderNet net(e.config);
  if (header.at("param_count").get<std::size_t>() != net.param_count())
    throw FormatError(path.string() + ": parameter count disagrees with config");
  const int m = e.grid.num_patches();
  if (e.manifest.size() != static_cast<std::size_t>(m))
    throw FormatError(path.string() + ": manifest entries do not match grid");
  const std::size_t expect = static_cast<std::size_t>(m) * net.param_count() * 4;
  if (bytes.size() - pos != expect)
    throw FormatError(path.string() + ": payload length mismatch, expect " +
                      std::to_string(expect) + " bytes, found " +
                      std::to_string(bytes.size() - pos));

  e.members.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    GraderWeights& w = e.members[static_cast<std::size_t>(i)];
    w.config = e.config;
    w.coord = e.manifest[static_cast<std::size_t>(i)].coord;
    w.params.resize(net.param_count());
    for (std::size_t j = 0; j < net.param_count(); ++j) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos++])) << (8 * b);
      float f;
      std::memcpy(&f, &bits, 4);
      if (!std::isfinite(f))
        throw FormatError(path.string() + ": non-finite weight in payload");
      w.params[j] = f;
    }
  }
  return e;
}

}  // namespace dg
