#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dg/dc_space.hpp"
#include "dg/patch_grid.hpp"
#include "dg/rng.hpp"
#include "dg/volume.hpp"

namespace dg {

// Training hyperparameters of one patch grader. The paper values are the
// defaults; desk-scale runs shrink the network and the early-stop budget.
struct GraderConfig {
  Dims patch_dims{16, 24, 16};
  int base_channels = 8;
  int levels = 2;
  double learning_rate = 3e-4;
  int batch_size = 16;
  int early_stop_first = 400;  // patience when trained from scratch
  int early_stop_rest = 100;   // patience when transfer-initialized
  int max_epochs = 0;          // 0 = unbounded, stop on patience only
  bool mixup = true;
  bool translation = true;     // +-1 voxel jitter per axis
  bool clamp_output = false;   // clamp inference outputs to the unit disk
  double validation_fraction = 0.2;

  void validate() const;
};

// Adam with bias correction; beta/epsilon are the standard defaults.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, double lr);

// Mean over every value of the squared difference.
double mse_loss(std::span<const double> pred, std::span<const double> target);

struct LayerDescriptor {
  std::string name;
  std::string kind;  // "conv3" | "conv1"
  int in_channels = 0;
  int out_channels = 0;
  bool relu = false;
  std::size_t weight_offset = 0;
  std::size_t weight_count = 0;
  std::size_t bias_offset = 0;
  std::size_t bias_count = 0;
};

// The two-level (configurable) encoder-decoder over one patch:
// [conv3+ReLU x2] -> maxpool -> [conv3+ReLU x2] -> nearest upsample ->
// concat skip -> [conv3+ReLU x2] -> 1x1x1 conv to 2 channels, no activation.
// Parameters live in one flat vector in descriptor order.
class GraderNet {
 public:
  explicit GraderNet(const GraderConfig& config);
  ~GraderNet();
  GraderNet(GraderNet&&) noexcept;
  GraderNet& operator=(GraderNet&&) noexcept;

  const GraderConfig& config() const { return config_; }
  std::size_t param_count() const { return param_count_; }
  const std::vector<LayerDescriptor>& layers() const { return layers_; }
  std::size_t output_size() const;  // 2 * patch voxels

  std::vector<double> initial_params(Rng& rng) const;

  struct Workspace {
    std::vector<std::vector<double>> act;
    std::vector<std::vector<double>> grad;
    std::vector<std::vector<std::int32_t>> pool_argmax;
  };
  Workspace make_workspace() const;

  // Runs the net on one patch (voxel-linear layout); the output spans both
  // channels, channel-major. Throws NumericError naming the first layer that
  // produced a non-finite activation.
  void forward(std::span<const double> patch, std::span<const double> params,
               Workspace& ws) const;
  std::span<const double> output(const Workspace& ws) const;

  // MSE of the current forward pass against a 2-channel target.
  double loss(const Workspace& ws, std::span<const double> target) const;

  // Accumulates d(loss_scale * MSE)/d(params) into grad for the sample held
  // in the workspace. forward() must have run on it.
  void backward_mse(Workspace& ws, std::span<const double> params,
                    std::span<const double> target, double loss_scale,
                    std::span<double> grad) const;

 private:
  struct Op;
  GraderConfig config_;
  std::vector<LayerDescriptor> layers_;
  std::vector<Op> ops_;
  struct Slot {
    int channels;
    Dims dims;
  };
  std::vector<Slot> slots_;
  std::size_t param_count_ = 0;
  int output_slot_ = -1;
  int pool_stores_ = 0;

  void check_finite(const Workspace& ws, const Op& op) const;
};

// Weights of one ensemble member plus the grid cell it serves.
struct GraderWeights {
  GraderConfig config;
  GridCoord coord;
  std::vector<double> params;
};

// forward() on a stand-alone member; patch must match config.patch_dims.
std::vector<double> forward_patch(const GraderWeights& w,
                                  std::span<const double> patch);

// One subject as the grader sees it: downscaled normalized intensity plus
// the downscaled ICC mask and the class that defines its DC target field.
struct GraderSubject {
  const Volume3D* volume = nullptr;
  const std::vector<std::uint8_t>* icc = nullptr;
  DiagnosticClass cls = DiagnosticClass::CN;
};

// Patch dataset of a single grid position across subjects.
struct PatchDataset {
  std::vector<GraderSubject> subjects;
  Dims start;
  Dims volume_dims;
};

struct GraderTrainStats {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<double> val_history;
  std::vector<int> train_subjects;
  std::vector<int> val_subjects;
};

// Trains one grader with translation + mixup augmentation and early stopping
// on a stratified 80/20 split of the dataset (reshuffled per call). Returns
// the checkpoint with the best validation loss, quantized to the float32
// precision it would have after a file round trip.
GraderWeights train_grader(const PatchDataset& data, const GraderWeights* init,
                           const GraderConfig& config, std::uint64_t seed,
                           GraderTrainStats* stats = nullptr);

struct MemberManifest {
  int index = 0;
  GridCoord coord;
  int init_from = -1;  // -1 = trained from scratch
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

struct GraderEnsemble {
  GridSpec grid;
  GraderConfig config;
  std::uint64_t seed = 0;
  std::vector<GraderWeights> members;    // raster order
  std::vector<MemberManifest> manifest;  // aligned with members
};

// Trains the k^3 members in raster order; member 0 from scratch, the rest
// transfer-initialized from the nearest already-trained member (Manhattan
// distance on grid coordinates, ties to the lowest raster index).
GraderEnsemble train_ensemble(const std::vector<GraderSubject>& subjects,
                              const GridSpec& grid, const GraderConfig& config,
                              std::uint64_t seed);

// Extract -> per-member forward -> overlap-average -> upscale.
DCMap grade_volume(const Volume3D& downscaled, const GraderEnsemble& ensemble,
                   Dims original_dims);

// Mean validation-style MSE of a member over the listed subjects (no
// augmentation); exposed for early-stopping checks in tests.
double patch_mse(const GraderWeights& w, const PatchDataset& data,
                 const std::vector<int>& subject_indices);

// --- DGW1 ensemble weights file --------------------------------------------
// Little-endian: magic "DGW1"; u32 format version; u64 JSON header length;
// UTF-8 JSON header (grid spec, config, layer descriptors, manifest, seed);
// then per member the flat parameter tensors as float32 in descriptor order.

void write_ensemble(const GraderEnsemble& e, const std::filesystem::path& path);
GraderEnsemble read_ensemble(const std::filesystem::path& path);

}  // namespace dg
