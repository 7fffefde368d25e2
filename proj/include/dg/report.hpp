#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dg/eval.hpp"

namespace dg {

using ordered_json = nlohmann::ordered_json;

ordered_json report_json(const EvalReport& r, const TaskSpec& task);

// Full cross-validation report: fold plan, per-iteration roles, grader
// manifests and per-task lambdas, and the per-task metric blocks.
ordered_json cross_validation_report(const CrossValidationResult& result,
                                     const std::vector<OodTaskResult>* ood);

ordered_json ood_report(const std::vector<OodTaskResult>& ood);

// One CSV row per task and domain: task,domain,n,acc,bacc,auc,sens_cn-like
// columns in task class order.
std::string summary_csv(const CrossValidationResult* result,
                        const std::vector<OodTaskResult>* ood);

void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const ordered_json& j);
ordered_json read_json_file(const std::filesystem::path& path);

}  // namespace dg
