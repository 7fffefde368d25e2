#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "dg/image.hpp"
#include "dg/synth.hpp"
#include "dg/volume.hpp"

using namespace dg;
namespace fs = std::filesystem;

namespace {

const fs::path kWorkDir = fs::temp_directory_path() / "dg_cli_test";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DG_CLI_PATH) + " " + args + " >" +
                          (kWorkDir / "stdout.txt").string() + " 2>" +
                          (kWorkDir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_config(const fs::path& path, const fs::path& data_dir,
                  const fs::path& out_dir) {
  std::ofstream out(path);
  out << R"({
  "data_dir": ")" << data_dir.string() << R"(",
  "output_dir": ")" << out_dir.string() << R"(",
  "seed": 33,
  "k": 2,
  "patch_dims": [8, 12, 8],
  "grader": {"base_channels": 2, "max_epochs": 2, "early_stop_first": 2, "early_stop_rest": 2},
  "mlp": {"max_epochs": 20},
  "svm": {"c_grid_size": 6},
  "synth": {"dims": [32, 36, 32], "n_per_class": 3}
})";
}

}  // namespace

TEST_CASE("unknown subcommands and missing config exit with usage code 1") {
  fs::create_directories(kWorkDir);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("train --config " + (kWorkDir / "missing.json").string()) == 1);
  const std::string err = read_file(kWorkDir / "stderr.txt");
  CHECK(err.find("missing.json") != std::string::npos);
}

TEST_CASE("synth-gen then grade/export round trips through the CLI") {
  fs::remove_all(kWorkDir);
  fs::create_directories(kWorkDir);
  const fs::path data = kWorkDir / "data";
  const fs::path out = kWorkDir / "out";
  const fs::path config = kWorkDir / "config.json";
  write_config(config, data, out);

  REQUIRE(run_cli("synth-gen --config " + config.string()) == 0);
  CHECK(fs::exists(data / "manifest.csv"));
  const auto rows = read_manifest(data / "manifest.csv");
  CHECK(rows.size() == 9);

  REQUIRE(run_cli("train --config " + config.string()) == 0);
  CHECK(fs::exists(out / "weights.dgw"));

  const std::string volume = (data / rows.front().volume_path).string();
  REQUIRE(run_cli("grade --config " + config.string() + " --weights " +
                  (out / "weights.dgw").string() + " --volume " + volume +
                  " --out-prefix " + (out / "subj").string()) == 0);
  CHECK(fs::exists(out / "subj_dcx.dgv"));
  CHECK(fs::exists(out / "subj_dcy.dgv"));

  REQUIRE(run_cli("export-map --config " + config.string() + " --dcx " +
                  (out / "subj_dcx.dgv").string() + " --dcy " +
                  (out / "subj_dcy.dgv").string() + " --labels " +
                  (data / rows.front().labels_path).string() +
                  " --out-prefix " + (out / "map").string()) == 0);
  for (const char* axis : {"axial", "coronal", "sagittal"})
    CHECK(fs::exists(out / ("map_" + std::string(axis) + ".png")));

  // batch features over the manifest
  REQUIRE(run_cli("features --config " + config.string() + " --weights " +
                  (out / "weights.dgw").string()) == 0);
  CHECK(fs::exists(out / "features.csv"));
}

TEST_CASE("export-map renders an all-zero map as uniform gray") {
  fs::create_directories(kWorkDir);
  const fs::path out = kWorkDir / "zero";
  fs::create_directories(out);
  Volume3D zero(Dims{8, 10, 8}, 0.0);
  write_volume(zero, out / "z_dcx.dgv");
  write_volume(zero, out / "z_dcy.dgv");
  REQUIRE(run_cli("export-map --dcx " + (out / "z_dcx.dgv").string() +
                  " --dcy " + (out / "z_dcy.dgv").string() + " --out-prefix " +
                  (out / "zero").string()) == 0);
  const Image8 img = read_png(out / "zero_axial.png");
  CHECK(img.width == 8);
  CHECK(img.height == 10);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) CHECK(img.rgb[i] == 128);
}

TEST_CASE("export-map reruns are byte-identical") {
  fs::create_directories(kWorkDir);
  const fs::path out = kWorkDir / "det";
  fs::create_directories(out);
  PhantomSpec spec;
  spec.dims = Dims{16, 24, 16};
  spec.blocks_x = 1;
  spec.blocks_y = 3;
  spec.blocks_z = 1;
  spec.ad_structures = {2};
  spec.ftd_structures = {1};
  spec.seed = 5;
  const auto subject = generate_subject(DiagnosticClass::AD, spec, 1);
  // reuse the intensity volume as fake DC channels scaled into the disk
  Volume3D chan = normalize_intensity(subject.intensity);
  for (auto& v : chan.data()) v = v * 0.6 - 0.3;
  write_volume(chan, out / "c_dcx.dgv");
  write_volume(chan, out / "c_dcy.dgv");
  const std::string cmd = "export-map --dcx " + (out / "c_dcx.dgv").string() +
                          " --dcy " + (out / "c_dcy.dgv").string() +
                          " --out-prefix " + (out / "m").string();
  REQUIRE(run_cli(cmd) == 0);
  const std::string first = read_file(out / "m_axial.png");
  REQUIRE(run_cli(cmd) == 0);
  CHECK(read_file(out / "m_axial.png") == first);
  CHECK(!first.empty());
}

TEST_CASE("bad data files exit with code 2") {
  fs::create_directories(kWorkDir);
  const fs::path bad = kWorkDir / "bad.dgv";
  std::ofstream(bad, std::ios::binary) << "XXXXnot a volume";
  CHECK(run_cli("export-map --dcx " + bad.string() + " --dcy " + bad.string() +
                " --out-prefix " + (kWorkDir / "nope").string()) == 2);
}
