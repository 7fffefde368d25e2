#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dg/grader.hpp"
#include "dg/synth.hpp"
#include "dg/volume.hpp"

namespace dg {

// One subject as the pipeline consumes it: the intensity volume is
// min-max normalized then downscaled by 2; the ICC mask is carried at the
// downscaled resolution for DC target construction; labels stay at full
// resolution for feature aggregation.
struct SubjectData {
  std::string id;
  DiagnosticClass cls = DiagnosticClass::CN;
  std::string domain;
  Dims original_dims;
  Volume3D down;
  std::vector<std::uint8_t> icc_down;
  LabelVolume labels;
};

// Majority vote of the (label >= 1) mask over each 2x2x2 block.
std::vector<std::uint8_t> downscale_mask(const LabelVolume& labels);

SubjectData load_subject(const ManifestRow& row,
                         const std::filesystem::path& dir);

// Parallel load of a whole manifest; order follows the rows.
std::vector<SubjectData> load_subjects(const std::vector<ManifestRow>& rows,
                                       const std::filesystem::path& dir);

inline GraderSubject grader_view(const SubjectData& s) {
  return {&s.down, &s.icc_down, s.cls};
}

}  // namespace dg
