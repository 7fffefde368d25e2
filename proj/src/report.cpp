#include "dg/report.hpp"

#include <fstream>
#include <sstream>

#include "dg/error.hpp"

namespace dg {

ordered_json report_json(const EvalReport& r, const TaskSpec& task) {
  ordered_json sens = ordered_json::object();
  for (int c = 0; c < task.num_classes(); ++c)
    sens[task.class_names[static_cast<std::size_t>(c)]] =
        r.sens[static_cast<std::size_t>(c)];
  return ordered_json{{"task", r.task},      {"domain", r.domain},
                      {"n", r.n},            {"acc", r.acc},
                      {"bacc", r.bacc},      {"auc", r.auc},
                      {"sensitivity", sens}, {"classes", task.class_names},
                      {"confusion", r.confusion}};
}

ordered_json cross_validation_report(const CrossValidationResult& result,
                                     const std::vector<OodTaskResult>* ood) {
  ordered_json j;
  j["fold_plan"] = ordered_json{{"n_folds", result.plan.n_folds},
                                {"seed", result.plan.seed},
                                {"folds", result.plan.folds}};

  ordered_json iterations = ordered_json::array();
  for (int it = 0; it < result.plan.n_folds; ++it) {
    const auto roles = result.plan.roles(it);
    ordered_json jit;
    jit["index"] = it;
    jit["roles"] = ordered_json{{"train", roles.train_folds},
                                {"val", roles.val_fold},
                                {"cal", roles.cal_fold},
                                {"test", roles.test_fold}};
    if (static_cast<std::size_t>(it) < result.graders.size()) {
      const GraderEnsemble& e = result.graders[static_cast<std::size_t>(it)];
      ordered_json members = ordered_json::array();
      for (const MemberManifest& m : e.manifest)
        members.push_back(ordered_json{
            {"index", m.index},
            {"coord", {m.coord.gx, m.coord.gy, m.coord.gz}},
            {"init_from", m.init_from},
            {"epochs_run", m.epochs_run},
            {"best_epoch", m.best_epoch},
            {"best_val_loss", m.best_val_loss}});
      jit["graders"] = ordered_json{{"seed", e.seed}, {"members", members}};
    }
    ordered_json jtasks = ordered_json::object();
    for (const TaskResult& tr : result.tasks) {
      if (static_cast<std::size_t>(it) >= tr.lambdas.size()) continue;
      jtasks[tr.task.name] = ordered_json{
          {"lambda", tr.lambdas[static_cast<std::size_t>(it)]},
          {"cal_bacc_mlp", tr.cal_bacc_mlp[static_cast<std::size_t>(it)]},
          {"cal_bacc_svm", tr.cal_bacc_svm[static_cast<std::size_t>(it)]},
          {"cal_bacc_ensemble",
           tr.cal_bacc_ensemble[static_cast<std::size_t>(it)]}};
    }
    jit["tasks"] = std::move(jtasks);
    iterations.push_back(std::move(jit));
  }
  j["iterations"] = std::move(iterations);

  ordered_json jtasks = ordered_json::object();
  for (const TaskResult& tr : result.tasks) {
    ordered_json entry;
    entry["in_domain"] = report_json(tr.in_domain, tr.task);
    entry["out_of_domain"] = nullptr;
    if (ood)
      for (const OodTaskResult& o : *ood)
        if (o.task.name == tr.task.name)
          entry["out_of_domain"] = report_json(o.report, o.task);
    jtasks[tr.task.name] = std::move(entry);
  }
  j["tasks"] = std::move(jtasks);
  return j;
}

ordered_json ood_report(const std::vector<OodTaskResult>& ood) {
  ordered_json jtasks = ordered_json::object();
  for (const OodTaskResult& o : ood)
    jtasks[o.task.name] = report_json(o.report, o.task);
  return ordered_json{{"tasks", std::move(jtasks)}};
}

namespace {

void summary_row(std::ostringstream& out, const EvalReport& r,
                 const TaskSpec& task) {
  out << r.task << ',' << r.domain << ',' << r.n << ',' << r.acc << ','
      << r.bacc << ',' << r.auc;
  for (int c = 0; c < 3; ++c) {
    out << ',';
    if (c < task.num_classes()) out << r.sens[static_cast<std::size_t>(c)];
  }
  out << '\n';
}

}  // namespace

std::string summary_csv(const CrossValidationResult* result,
                        const std::vector<OodTaskResult>* ood) {
  std::ostringstream out;
  out.precision(10);
  out << "task,domain,n,acc,bacc,auc,sens_a,sens_b,sens_c\n";
  if (result)
    for (const TaskResult& tr : result->tasks)
      summary_row(out, tr.in_domain, tr.task);
  if (ood)
    for (const OodTaskResult& o : *ood) summary_row(out, o.report, o.task);
  return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

void write_json_file(const std::filesystem::path& path, const ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

ordered_json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    ordered_json j;
    in >> j;
    return j;
  } catch (const std::exception& ex) {
    throw FormatError(path.string() + ": bad JSON: " + ex.what());
  }
}

}  // namespace dg
