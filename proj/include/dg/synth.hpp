#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dg/dc_space.hpp"
#include "dg/volume.hpp"

namespace dg {

// Synthetic phantom: an ellipsoidal intracranial cavity tiled into s
// structures by a weighted Voronoi partition of block centers. Disease
// effects shrink (weight reduction) and darken the designated block sets,
// giving the volume branch and the grading branch independent signal.
struct PhantomSpec {
  Dims dims{64, 72, 64};
  int blocks_x = 2;
  int blocks_y = 3;
  int blocks_z = 2;
  std::vector<int> ad_structures{3, 4};    // "medial" middle-y lower-z cells
  std::vector<int> ftd_structures{1, 2};   // "frontal" front-y lower-z cells
  double shrink = 0.25;          // Voronoi weight reduction of affected cells
  double darken = 0.30;          // intensity reduction of affected cells
  double noise_sigma = 0.02;
  double intensity_shift = 0.0;  // additive, for the shifted-domain variant
  double background = 0.05;
  double center_jitter = 0.5;    // voxels, per-subject anatomical variability
  double axis_jitter = 0.02;     // relative semi-axis variability
  std::uint64_t seed = 0;

  int structures() const { return blocks_x * blocks_y * blocks_z; }
  void validate() const;

  // Same anatomy with different acquisition characteristics.
  PhantomSpec shifted_domain(double sigma, double shift) const {
    PhantomSpec s = *this;
    s.noise_sigma = sigma;
    s.intensity_shift = shift;
    return s;
  }

  const std::vector<int>& affected_structures(DiagnosticClass c) const;

  // Baseline tissue intensity of structure j in 1..s.
  double baseline_intensity(int structure) const {
    return 0.35 + 0.05 * (structure - 1);
  }
};

struct PhantomSubject {
  Volume3D intensity;
  LabelVolume labels;
};

PhantomSubject generate_subject(DiagnosticClass c, const PhantomSpec& spec,
                                std::uint64_t subject_seed);

struct ManifestRow {
  std::string id;
  DiagnosticClass cls = DiagnosticClass::CN;
  std::string volume_path;  // relative to the manifest directory
  std::string labels_path;
  std::string domain;  // "in" | "out"
};

// Writes n_per_class subjects per class as DGV1 files plus manifest.csv in
// dir; rows come back in generation order (CN, AD, FTD per subject index).
std::vector<ManifestRow> generate_dataset(int n_per_class,
                                          const PhantomSpec& spec,
                                          const std::filesystem::path& dir,
                                          const std::string& domain_tag);

void write_manifest(const std::vector<ManifestRow>& rows,
                    const std::filesystem::path& path);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

}  // namespace dg
