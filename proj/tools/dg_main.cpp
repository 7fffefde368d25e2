// dg: deep grading pipeline for multi-dementia phantoms.
//
// Subcommands: synth-gen, train, grade, features, classify, cross-validate,
// eval-ood, export-map. Every run reads one JSON config (see --help and the
// README); command-line flags override config fields. Exit codes: 0 success,
// 1 usage error, 2 data/format/protocol error. Timestamps only ever go to
// <output_dir>/dg.log so artifact outputs stay byte-reproducible.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "dg/classifiers.hpp"
#include "dg/dataset.hpp"
#include "dg/error.hpp"
#include "dg/eval.hpp"
#include "dg/features.hpp"
#include "dg/grader.hpp"
#include "dg/image.hpp"
#include "dg/report.hpp"
#include "dg/synth.hpp"

namespace fs = std::filesystem;
using dg::ordered_json;

namespace {

struct RunConfig {
  fs::path data_dir = ".";
  fs::path output_dir = "out";
  std::uint64_t seed = 1;
  int k = 2;
  dg::Dims patch_dims{16, 24, 16};
  dg::GraderConfig grader;
  dg::MlpConfig mlp;
  dg::SvmTrainOptions svm;
  std::vector<std::string> tasks;  // empty = all five
  dg::PhantomSpec synth;
  int n_per_class = 10;
  int ood_n_per_class = 10;
  double ood_noise_sigma = 0.05;
  double ood_intensity_shift = 0.08;
};

dg::Dims dims_from(const ordered_json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3)
    throw dg::ParameterError("config: " + what + " must be [x, y, z]");
  return dg::Dims{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

template <typename T>
void maybe(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig load_config(const fs::path& path) {
  RunConfig cfg;
  const ordered_json j = dg::read_json_file(path);
  if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir").get<std::string>();
  if (j.contains("output_dir"))
    cfg.output_dir = j.at("output_dir").get<std::string>();
  maybe(j, "seed", cfg.seed);
  maybe(j, "k", cfg.k);
  if (j.contains("patch_dims")) cfg.patch_dims = dims_from(j.at("patch_dims"), "patch_dims");
  if (j.contains("grader")) {
    const auto& g = j.at("grader");
    maybe(g, "base_channels", cfg.grader.base_channels);
    maybe(g, "levels", cfg.grader.levels);
    maybe(g, "learning_rate", cfg.grader.learning_rate);
    maybe(g, "batch_size", cfg.grader.batch_size);
    maybe(g, "early_stop_first", cfg.grader.early_stop_first);
    maybe(g, "early_stop_rest", cfg.grader.early_stop_rest);
    maybe(g, "max_epochs", cfg.grader.max_epochs);
    maybe(g, "mixup", cfg.grader.mixup);
    maybe(g, "translation", cfg.grader.translation);
    maybe(g, "clamp_output", cfg.grader.clamp_output);
    maybe(g, "validation_fraction", cfg.grader.validation_fraction);
  }
  if (j.contains("mlp")) {
    const auto& m = j.at("mlp");
    maybe(m, "hidden", cfg.mlp.hidden);
    maybe(m, "learning_rate", cfg.mlp.learning_rate);
    maybe(m, "batch_size", cfg.mlp.batch_size);
    maybe(m, "patience", cfg.mlp.patience);
    maybe(m, "max_epochs", cfg.mlp.max_epochs);
  }
  if (j.contains("svm")) {
    const auto& s = j.at("svm");
    maybe(s, "c_grid_size", cfg.svm.c_grid_size);
    maybe(s, "c_min", cfg.svm.c_min);
    maybe(s, "c_max", cfg.svm.c_max);
  }
  maybe(j, "tasks", cfg.tasks);
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    if (s.contains("dims")) cfg.synth.dims = dims_from(s.at("dims"), "synth.dims");
    maybe(s, "blocks_x", cfg.synth.blocks_x);
    maybe(s, "blocks_y", cfg.synth.blocks_y);
    maybe(s, "blocks_z", cfg.synth.blocks_z);
    maybe(s, "ad_structures", cfg.synth.ad_structures);
    maybe(s, "ftd_structures", cfg.synth.ftd_structures);
    maybe(s, "shrink", cfg.synth.shrink);
    maybe(s, "darken", cfg.synth.darken);
    maybe(s, "noise_sigma", cfg.synth.noise_sigma);
    maybe(s, "background", cfg.synth.background);
    maybe(s, "center_jitter", cfg.synth.center_jitter);
    maybe(s, "axis_jitter", cfg.synth.axis_jitter);
    maybe(s, "n_per_class", cfg.n_per_class);
    maybe(s, "ood_n_per_class", cfg.ood_n_per_class);
    maybe(s, "ood_noise_sigma", cfg.ood_noise_sigma);
    maybe(s, "ood_intensity_shift", cfg.ood_intensity_shift);
  }
  cfg.grader.patch_dims = cfg.patch_dims;
  cfg.synth.seed = cfg.seed;
  return cfg;
}

// timestamps are confined to this log; everything else stays reproducible
void log_line(const RunConfig& cfg, const std::string& message) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  std::ofstream log(cfg.output_dir / "dg.log", std::ios::app);
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%d %H:%M:%S", std::gmtime(&t));
  log << stamp << " " << message << '\n';
}

dg::CrossValidationConfig cv_config(const RunConfig& cfg) {
  dg::CrossValidationConfig cv;
  cv.k = cfg.k;
  cv.patch_dims = cfg.patch_dims;
  cv.grader = cfg.grader;
  cv.mlp = cfg.mlp;
  cv.svm = cfg.svm;
  cv.tasks = cfg.tasks;
  cv.seed = cfg.seed;
  return cv;
}

std::vector<dg::SubjectData> load_dataset(const RunConfig&,
                                          const fs::path& dir) {
  const auto rows = dg::read_manifest(dir / "manifest.csv");
  if (rows.empty()) throw dg::DataError("empty manifest in " + dir.string());
  return dg::load_subjects(rows, dir);
}

std::string iter_name(int it) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "iter_%02d", it);
  return buf;
}

// --- subcommand bodies ---------------------------------------------------------

int cmd_synth_gen(const RunConfig& cfg, const std::string& domain,
                  const fs::path& out_dir) {
  dg::PhantomSpec spec = cfg.synth;
  int n = cfg.n_per_class;
  if (domain == "out") {
    spec = spec.shifted_domain(cfg.ood_noise_sigma, cfg.ood_intensity_shift);
    n = cfg.ood_n_per_class;
  }
  const auto rows = dg::generate_dataset(n, spec, out_dir, domain);
  std::cout << "wrote " << rows.size() << " subjects to " << out_dir.string()
            << "\n";
  log_line(cfg, "synth-gen " + domain + " -> " + out_dir.string());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto subjects = load_dataset(cfg, cfg.data_dir);
  std::vector<dg::GraderSubject> views;
  views.reserve(subjects.size());
  for (const auto& s : subjects) views.push_back(dg::grader_view(s));
  const dg::GridSpec grid =
      dg::GridSpec::make(subjects.front().down.dims(), cfg.patch_dims, cfg.k);
  const dg::GraderEnsemble ensemble =
      dg::train_ensemble(views, grid, cfg.grader, cfg.seed);
  fs::create_directories(cfg.output_dir);
  const fs::path out = cfg.output_dir / "weights.dgw";
  dg::write_ensemble(ensemble, out);
  std::cout << "trained " << ensemble.members.size() << " graders -> "
            << out.string() << "\n";
  log_line(cfg, "train -> " + out.string());
  return 0;
}

int cmd_grade(const RunConfig& cfg, const fs::path& weights,
              const fs::path& volume, const std::string& out_prefix) {
  const dg::GraderEnsemble ensemble = dg::read_ensemble(weights);
  const dg::Volume3D raw = dg::read_scalar_volume(volume);
  const dg::Volume3D down = dg::downscale_by_2(dg::normalize_intensity(raw));
  const dg::DCMap map = dg::grade_volume(down, ensemble, raw.dims());
  dg::Volume3D cx(map.dims()), cy(map.dims());
  for (std::size_t i = 0; i < map.voxels(); ++i) {
    cx[i] = map.at(0, i);
    cy[i] = map.at(1, i);
  }
  dg::write_volume(cx, out_prefix + "_dcx.dgv");
  dg::write_volume(cy, out_prefix + "_dcy.dgv");
  std::cout << "graded " << volume.string() << " -> " << out_prefix
            << "_dc{x,y}.dgv\n";
  log_line(cfg, "grade " + volume.string());
  return 0;
}

dg::DCMap load_dc_map(const fs::path& dcx, const fs::path& dcy) {
  const dg::Volume3D cx = dg::read_scalar_volume(dcx);
  const dg::Volume3D cy = dg::read_scalar_volume(dcy);
  if (!(cx.dims() == cy.dims()))
    throw dg::GeometryError("DC channels disagree: " + dg::to_string(cx.dims()) +
                            " vs " + dg::to_string(cy.dims()));
  dg::DCMap map(cx.dims());
  for (std::size_t i = 0; i < map.voxels(); ++i) {
    map.at(0, i) = cx[i];
    map.at(1, i) = cy[i];
  }
  return map;
}

int cmd_features(const RunConfig& cfg, const fs::path& weights,
                 const fs::path& dcx, const fs::path& dcy,
                 const fs::path& labels_path, const std::string& subject_id,
                 const std::string& cls_name, const fs::path& out) {
  std::vector<dg::FeatureRow> rows;
  if (!weights.empty()) {
    // batch mode: grade every manifest subject with the given ensemble
    const dg::GraderEnsemble ensemble = dg::read_ensemble(weights);
    const auto subjects = load_dataset(cfg, cfg.data_dir);
    rows.resize(subjects.size());
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const dg::SubjectData& s = subjects[i];
      const dg::DCMap map =
          dg::grade_volume(s.down, ensemble, s.original_dims);
      rows[i] = {s.id, s.cls, dg::compute_features(map, s.labels)};
    }
  } else {
    const dg::DCMap map = load_dc_map(dcx, dcy);
    const dg::LabelVolume labels = dg::read_label_volume(labels_path);
    rows.push_back({subject_id, dg::parse_class(cls_name),
                    dg::compute_features(map, labels)});
  }
  fs::create_directories(out.parent_path().empty() ? "." : out.parent_path());
  dg::write_features_csv(rows, out);
  std::cout << "wrote " << rows.size() << " feature rows -> " << out.string()
            << "\n";
  log_line(cfg, "features -> " + out.string());
  return 0;
}

struct TaskMatrices {
  dg::Matrix dc, vol;
  std::vector<int> y;
  std::vector<std::string> ids;
};

TaskMatrices task_matrices(const std::vector<dg::FeatureRow>& rows,
                           const dg::TaskSpec& task) {
  TaskMatrices m;
  for (const auto& r : rows) {
    const int label = task.map(r.cls);
    if (label < 0) continue;
    m.dc.push_back(r.features.dc_flat());
    m.vol.push_back(r.features.volumes);
    m.y.push_back(label);
    m.ids.push_back(r.subject_id);
  }
  return m;
}

int cmd_classify(const RunConfig& cfg, const fs::path& train_csv,
                 const fs::path& val_csv, const fs::path& cal_csv,
                 const std::string& task_name, const fs::path& out,
                 const fs::path& test_csv, const fs::path& predictions) {
  const dg::TaskSpec& task = dg::TaskSpec::by_name(task_name);
  const TaskMatrices train = task_matrices(dg::read_features_csv(train_csv), task);
  const TaskMatrices val = task_matrices(dg::read_features_csv(val_csv), task);
  const TaskMatrices cal = task_matrices(dg::read_features_csv(cal_csv), task);

  dg::TaskTrainingData data;
  data.task = &task;
  data.dc_train = train.dc;
  data.vol_train = train.vol;
  data.y_train = train.y;
  data.dc_val = val.dc;
  data.vol_val = val.vol;
  data.y_val = val.y;
  data.dc_cal = cal.dc;
  data.vol_cal = cal.vol;
  data.y_cal = cal.y;
  data.mlp_config = cfg.mlp;
  data.svm_options = cfg.svm;
  data.seed = cfg.seed;
  const dg::TrainedStage stage = dg::default_classifier_factory(data);

  fs::create_directories(cfg.output_dir);
  dg::write_classifier_bundle(*stage.model, out);
  std::cout << "lambda " << stage.lambda << ", calibration BACC "
            << stage.cal_bacc_ensemble << " -> " << out.string() << "\n";

  if (!test_csv.empty()) {
    const auto test_rows = dg::read_features_csv(test_csv);
    std::ostringstream csv;
    csv.precision(10);
    csv << "subject_id,true_class,predicted_class";
    for (const std::string& name : task.class_names) csv << ",p_" << name;
    csv << '\n';
    for (const auto& r : test_rows) {
      if (task.map(r.cls) < 0) continue;
      const auto p = dg::ensemble_predict(*stage.model, r.features.dc_flat(),
                                          r.features.volumes);
      const int pred = dg::argmax_class(p);
      csv << r.subject_id << ',' << dg::class_name(r.cls) << ','
          << task.class_names[static_cast<std::size_t>(pred)];
      for (double v : p) csv << ',' << v;
      csv << '\n';
    }
    dg::write_text_file(predictions, csv.str());
    std::cout << "predictions -> " << predictions.string() << "\n";
  }
  log_line(cfg, "classify " + task_name + " -> " + out.string());
  return 0;
}

int cmd_cross_validate(const RunConfig& cfg) {
  const auto subjects = load_dataset(cfg, cfg.data_dir);
  const auto result = dg::run_cross_validation(subjects, cv_config(cfg));

  fs::create_directories(cfg.output_dir / "graders");
  fs::create_directories(cfg.output_dir / "classifiers");
  for (std::size_t it = 0; it < result.graders.size(); ++it)
    dg::write_ensemble(result.graders[it],
                       cfg.output_dir / "graders" /
                           (iter_name(static_cast<int>(it)) + ".dgw"));
  for (const dg::TaskResult& tr : result.tasks)
    for (std::size_t it = 0; it < tr.models.size(); ++it)
      dg::write_classifier_bundle(
          tr.models[it], cfg.output_dir / "classifiers" /
                             (tr.task.name + "_" + iter_name(static_cast<int>(it)) +
                              ".dgc"));

  dg::write_json_file(cfg.output_dir / "report.json",
                      dg::cross_validation_report(result, nullptr));
  dg::write_text_file(cfg.output_dir / "summary.csv",
                      dg::summary_csv(&result, nullptr));
  for (const dg::TaskResult& tr : result.tasks)
    std::cout << tr.task.name << ": in-domain BACC " << tr.in_domain.bacc
              << ", ACC " << tr.in_domain.acc << ", AUC " << tr.in_domain.auc
              << " (n=" << tr.in_domain.n << ")\n";
  log_line(cfg, "cross-validate -> " + (cfg.output_dir / "report.json").string());
  return 0;
}

int cmd_eval_ood(const RunConfig& cfg, const fs::path& run_dir,
                 const fs::path& ood_dir) {
  // rebuild the ten pipelines from the cross-validate artifacts
  dg::CrossValidationResult result;
  for (int it = 0;; ++it) {
    const fs::path p = run_dir / "graders" / (iter_name(it) + ".dgw");
    if (!fs::exists(p)) break;
    result.graders.push_back(dg::read_ensemble(p));
  }
  if (result.graders.empty())
    throw dg::DataError("no grader weights under " + run_dir.string());

  std::vector<std::string> tasks = cfg.tasks;
  if (tasks.empty())
    for (const dg::TaskSpec& t : dg::TaskSpec::all()) tasks.push_back(t.name);
  for (const std::string& name : tasks) {
    dg::TaskResult tr;
    tr.task = dg::TaskSpec::by_name(name);
    for (std::size_t it = 0; it < result.graders.size(); ++it) {
      const fs::path p = run_dir / "classifiers" /
                         (name + "_" + iter_name(static_cast<int>(it)) + ".dgc");
      if (!fs::exists(p))
        throw dg::DataError("missing classifier bundle " + p.string());
      tr.models.push_back(dg::read_classifier_bundle(p));
    }
    result.tasks.push_back(std::move(tr));
  }

  const auto ood_subjects = load_dataset(cfg, ood_dir);
  const auto ood = dg::evaluate_out_of_domain(result, ood_subjects);
  dg::write_json_file(cfg.output_dir / "ood_report.json", dg::ood_report(ood));
  dg::write_text_file(cfg.output_dir / "ood_summary.csv",
                      dg::summary_csv(nullptr, &ood));
  for (const dg::OodTaskResult& o : ood)
    std::cout << o.task.name << ": out-of-domain BACC " << o.report.bacc
              << ", ACC " << o.report.acc << " (n=" << o.report.n << ")\n";
  log_line(cfg, "eval-ood -> " + (cfg.output_dir / "ood_report.json").string());
  return 0;
}

int cmd_export_map(const RunConfig& cfg, const fs::path& dcx, const fs::path& dcy,
                   const fs::path& labels_path, const std::string& out_prefix,
                   int slice) {
  const dg::DCMap map = load_dc_map(dcx, dcy);
  std::optional<dg::LabelVolume> labels;
  if (!labels_path.empty()) labels = dg::read_label_volume(labels_path);
  const dg::LabelVolume* overlay = labels ? &*labels : nullptr;
  dg::write_png(dg::render_dc_slice(map, dg::SliceAxis::Axial, slice, overlay),
                out_prefix + "_axial.png");
  dg::write_png(dg::render_dc_slice(map, dg::SliceAxis::Coronal, slice, overlay),
                out_prefix + "_coronal.png");
  dg::write_png(dg::render_dc_slice(map, dg::SliceAxis::Sagittal, slice, overlay),
                out_prefix + "_sagittal.png");
  std::cout << "wrote " << out_prefix << "_{axial,coronal,sagittal}.png\n";
  log_line(cfg, "export-map " + dcx.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dg: patch-ensemble disease-coordinate grading on synthetic phantoms.\n"
      "Grading-map colors: CN blue (0,0,255), AD red (255,0,0), FTD green\n"
      "(0,255,0), out-of-cavity gray (128,128,128). DG_THREADS caps worker\n"
      "threads. Config precedence: flag > config file > default."};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration")
      ->envname("DG_CONFIG");

  std::string domain = "in";
  std::string out_dir, out_prefix, task_name = "three-class";
  std::string subject_id = "subject", cls_name = "CN";
  std::string weights_path, volume_path, dcx_path, dcy_path, labels_path;
  std::string train_csv, val_csv, cal_csv, test_csv, predictions = "predictions.csv";
  std::string run_dir, ood_dir, out_file;
  int slice = -1;
  std::uint64_t seed_override = 0;
  int n_override = 0, k_override = 0;

  auto* synth = app.add_subcommand("synth-gen", "generate a phantom dataset");
  synth->add_option("--domain", domain, "in | out")
      ->check(CLI::IsMember({"in", "out"}));
  synth->add_option("--out", out_dir, "target directory (default: data_dir, or data_dir/ood)");
  synth->add_option("--n-per-class", n_override, "subjects per class override");
  synth->add_option("--seed", seed_override, "seed override");

  auto* train = app.add_subcommand("train", "train one grader ensemble on the manifest");
  train->add_option("--seed", seed_override, "seed override");
  train->add_option("--k", k_override, "patches per axis override");

  auto* grade = app.add_subcommand("grade", "grade one volume into a DC map");
  grade->add_option("--weights", weights_path, "DGW1 ensemble weights")->required();
  grade->add_option("--volume", volume_path, "DGV1 intensity volume")->required();
  grade->add_option("--out-prefix", out_prefix, "output prefix")->required();

  auto* features = app.add_subcommand("features", "aggregate DC maps into features");
  features->add_option("--weights", weights_path,
                       "batch mode: grade every manifest subject");
  features->add_option("--dcx", dcx_path, "single mode: DC x channel");
  features->add_option("--dcy", dcy_path, "single mode: DC y channel");
  features->add_option("--labels", labels_path, "single mode: segmentation");
  features->add_option("--subject-id", subject_id, "single mode: row id");
  features->add_option("--class", cls_name, "single mode: CN | AD | FTD");
  features->add_option("--out", out_file, "features CSV path");

  auto* classify = app.add_subcommand("classify", "train MLP+SVM and calibrate lambda");
  classify->add_option("--train-features", train_csv, "d1..d7 features CSV")->required();
  classify->add_option("--val-features", val_csv, "d8 features CSV")->required();
  classify->add_option("--cal-features", cal_csv, "d9 features CSV")->required();
  classify->add_option("--task", task_name, "classification task")
      ->check(CLI::IsMember({"dem-vs-cn", "ad-vs-cn", "ftd-vs-cn", "ad-vs-ftd",
                             "three-class"}));
  classify->add_option("--out", out_file, "DGC1 bundle path");
  classify->add_option("--test-features", test_csv, "optional d10 features CSV");
  classify->add_option("--predictions", predictions, "test predictions CSV");

  auto* cv = app.add_subcommand("cross-validate", "run the full 10-fold protocol");
  cv->add_option("--seed", seed_override, "seed override");
  cv->add_option("--k", k_override, "patches per axis override");

  auto* ood = app.add_subcommand("eval-ood", "10-model averaging on shifted phantoms");
  ood->add_option("--run-dir", run_dir, "cross-validate output dir (default output_dir)");
  ood->add_option("--ood-dir", ood_dir, "shifted-domain dataset dir (default data_dir/ood)");

  auto* expmap = app.add_subcommand("export-map", "render grading-map slices to PNG");
  expmap->add_option("--dcx", dcx_path, "DC x channel")->required();
  expmap->add_option("--dcy", dcy_path, "DC y channel")->required();
  expmap->add_option("--labels", labels_path, "optional boundary overlay");
  expmap->add_option("--out-prefix", out_prefix, "output prefix")->required();
  expmap->add_option("--slice", slice, "slice index (default mid)");

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage errors are exit code 1
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) {
        std::cerr << "error: config file not found: " << config_path << "\n";
        return 1;
      }
      cfg = load_config(config_path);
    }
    if (seed_override != 0) {
      cfg.seed = seed_override;
      cfg.synth.seed = seed_override;
    }
    if (k_override != 0) cfg.k = k_override;
    if (n_override != 0) cfg.n_per_class = n_override;

    if (synth->parsed()) {
      fs::path target = out_dir.empty()
                            ? (domain == "in" ? cfg.data_dir : cfg.data_dir / "ood")
                            : fs::path(out_dir);
      return cmd_synth_gen(cfg, domain, target);
    }
    if (train->parsed()) return cmd_train(cfg);
    if (grade->parsed())
      return cmd_grade(cfg, weights_path, volume_path, out_prefix);
    if (features->parsed()) {
      if (weights_path.empty() &&
          (dcx_path.empty() || dcy_path.empty() || labels_path.empty())) {
        std::cerr << "error: features needs --weights (batch) or --dcx/--dcy/--labels\n";
        return 1;
      }
      const fs::path out = out_file.empty()
                               ? cfg.output_dir / "features.csv"
                               : fs::path(out_file);
      return cmd_features(cfg, weights_path, dcx_path, dcy_path, labels_path,
                          subject_id, cls_name, out);
    }
    if (classify->parsed()) {
      const fs::path out = out_file.empty()
                               ? cfg.output_dir / (task_name + ".dgc")
                               : fs::path(out_file);
      return cmd_classify(cfg, train_csv, val_csv, cal_csv, task_name, out,
                          test_csv, predictions);
    }
    if (cv->parsed()) return cmd_cross_validate(cfg);
    if (ood->parsed()) {
      const fs::path run = run_dir.empty() ? cfg.output_dir : fs::path(run_dir);
      const fs::path data = ood_dir.empty() ? cfg.data_dir / "ood" : fs::path(ood_dir);
      return cmd_eval_ood(cfg, run, data);
    }
    if (expmap->parsed())
      return cmd_export_map(cfg, dcx_path, dcy_path, labels_path, out_prefix,
                            slice);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const dg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
