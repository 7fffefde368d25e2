#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace dg {

struct Dims {
  int x = 0;
  int y = 0;
  int z = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) *
           static_cast<std::size_t>(z);
  }
  bool operator==(const Dims&) const = default;
};

std::string to_string(const Dims& d);

// Dense scalar grid. Linear index = x + X*(y + Y*z).
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Dims dims, double fill = 0.0);
  Volume3D(Dims dims, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int x, int y, int z) { return data_[index(x, y, z)]; }
  double operator()(int x, int y, int z) const { return data_[index(x, y, z)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.x) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(z));
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  Dims dims_;
  std::vector<double> data_;
};

// Integer structure labels on the same grid geometry. Label 0 is outside the
// intracranial cavity; labels 1..s are brain structures.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(Dims dims, int num_structures);
  LabelVolume(Dims dims, int num_structures, std::vector<std::uint16_t> labels);

  const Dims& dims() const { return dims_; }
  int num_structures() const { return num_structures_; }
  std::size_t size() const { return labels_.size(); }

  std::uint16_t& operator()(int x, int y, int z) { return labels_[index(x, y, z)]; }
  std::uint16_t operator()(int x, int y, int z) const { return labels_[index(x, y, z)]; }
  std::uint16_t& operator[](std::size_t i) { return labels_[i]; }
  std::uint16_t operator[](std::size_t i) const { return labels_[i]; }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.x) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(z));
  }

  std::vector<std::uint16_t>& labels() { return labels_; }
  const std::vector<std::uint16_t>& labels() const { return labels_; }

 private:
  Dims dims_;
  int num_structures_ = 0;
  std::vector<std::uint16_t> labels_;
};

// Two-channel volumetric field of disease coordinates, channel-major:
// channel 0 (x component) precedes channel 1 (y component) in storage.
class DCMap {
 public:
  DCMap() = default;
  DCMap(Dims dims, double fill = 0.0);

  const Dims& dims() const { return dims_; }
  std::size_t voxels() const { return dims_.count(); }

  double& at(int channel, std::size_t linear) {
    return data_[static_cast<std::size_t>(channel) * voxels_ + linear];
  }
  double at(int channel, std::size_t linear) const {
    return data_[static_cast<std::size_t>(channel) * voxels_ + linear];
  }
  double& at(int channel, int x, int y, int z) { return at(channel, index(x, y, z)); }
  double at(int channel, int x, int y, int z) const { return at(channel, index(x, y, z)); }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.x) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(z));
  }

  double* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * voxels_; }
  const double* channel(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * voxels_;
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Largest per-voxel coordinate norm; used by tests and clamped-mode checks.
  double max_norm() const;

 private:
  Dims dims_;
  std::size_t voxels_ = 0;
  std::vector<double> data_;
};

// Affine min-max rescale to [0, 1]; a constant volume maps to all zeros.
Volume3D normalize_intensity(const Volume3D& v);

// 2x2x2 mean pooling; output dims are ceil(dim/2), partial blocks at odd
// boundaries average the voxels that exist.
Volume3D downscale_by_2(const Volume3D& v);

// Corner-aligned trilinear upsampling of both channels to target_dims.
DCMap upscale_to(const DCMap& m, Dims target_dims);

// --- DGV1 binary volume format -------------------------------------------
// Little-endian: magic "DGV1"; u8 dtype (1 = float32 scalars, 2 = u16
// labels); u32 dims X, Y, Z; label files add u16 s after the dims; payload
// of X*Y*Z values in linear order. Scalar payloads are float32, so scalar
// volumes are quantized to float32 precision on write.

void write_volume(const Volume3D& v, const std::filesystem::path& path);
void write_volume(const LabelVolume& v, const std::filesystem::path& path);

using AnyVolume = std::variant<Volume3D, LabelVolume>;
AnyVolume read_volume(const std::filesystem::path& path);

// Typed readers; throw FormatError when the file holds the other dtype.
Volume3D read_scalar_volume(const std::filesystem::path& path);
LabelVolume read_label_volume(const std::filesystem::path& path);

// Round a double to the nearest float32 value (the file precision).
inline double to_file_precision(double v) { return static_cast<float>(v); }

}  // namespace dg
