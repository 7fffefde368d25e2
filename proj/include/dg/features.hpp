#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dg/dc_space.hpp"
#include "dg/volume.hpp"

namespace dg {

// Per-subject aggregation of a DC map over the segmentation: the 2 x s mean
// disease coordinate per structure and the structure volumes in percent of
// the intracranial cavity.
struct StructureFeatures {
  int s = 0;
  std::vector<double> dc_x;     // length s, mean DC x per structure
  std::vector<double> dc_y;     // length s
  std::vector<double> volumes;  // length s, percent of ICC

  // MLP input layout: dc_x_1..dc_x_s then dc_y_1..dc_y_s.
  std::vector<double> dc_flat() const;
  DCPoint dc(int structure_1based) const {
    return {dc_x[static_cast<std::size_t>(structure_1based - 1)],
            dc_y[static_cast<std::size_t>(structure_1based - 1)]};
  }
};

struct StructureDC {
  int s = 0;
  std::vector<double> x;
  std::vector<double> y;
};

// Column j = mean DC over voxels labeled j. Every label 1..s must occur.
StructureDC structure_dc(const DCMap& m, const LabelVolume& lab);

// Entry j = 100 * count(label == j) / count(label >= 1).
std::vector<double> structure_volumes(const LabelVolume& lab);

StructureFeatures compute_features(const DCMap& m, const LabelVolume& lab);

struct FeatureRow {
  std::string subject_id;
  DiagnosticClass cls = DiagnosticClass::CN;
  StructureFeatures features;
};

// CSV with header: subject_id, class, dc_x_1..dc_x_s, dc_y_1..dc_y_s,
// vol_1..vol_s.
void write_features_csv(const std::vector<FeatureRow>& rows,
                        const std::filesystem::path& path);
std::vector<FeatureRow> read_features_csv(const std::filesystem::path& path);

}  // namespace dg
