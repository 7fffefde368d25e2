#pragma once

#include <vector>

#include "dg/volume.hpp"

namespace dg {

struct GridCoord {
  int gx = 0;
  int gy = 0;
  int gz = 0;
  bool operator==(const GridCoord&) const = default;

  int manhattan(const GridCoord& o) const {
    return std::abs(gx - o.gx) + std::abs(gy - o.gy) + std::abs(gz - o.gz);
  }
};

// Evenly distributed start offsets of k windows of length patch_dim inside
// [0, dim): offsets[i] = round(i*(dim-patch_dim)/(k-1)), half away from zero.
// First window starts at 0, last at dim-patch_dim.
std::vector<int> grid_starts(int dim, int patch_dim, int k);

// The k x k x k overlapping patch grid over a volume.
struct GridSpec {
  int k = 0;
  Dims patch_dims;
  Dims volume_dims;
  std::vector<int> starts_x, starts_y, starts_z;

  static GridSpec make(Dims volume_dims, Dims patch_dims, int k);

  int num_patches() const { return k * k * k; }

  // Raster enumeration: x fastest, then y, then z.
  GridCoord coord_of(int index) const {
    return {index % k, (index / k) % k, index / (k * k)};
  }
  int index_of(const GridCoord& c) const { return c.gx + k * (c.gy + k * c.gz); }

  Dims start_of(const GridCoord& c) const {
    return {starts_x[c.gx], starts_y[c.gy], starts_z[c.gz]};
  }
};

// Copies the m = k^3 patches out of the volume in raster order.
std::vector<Volume3D> extract_patches(const Volume3D& v, const GridSpec& g);

// Extracts the m ground-truth 2-channel target patches of a DC field.
std::vector<DCMap> extract_target_patches(const DCMap& field, const GridSpec& g);

// Overlap-averages m 2-channel patch outputs back into a full map. Each
// output voxel is the running (exact-count) mean of every patch value that
// covers it, so identical covering values reproduce exactly.
DCMap reconstruct(const std::vector<DCMap>& patch_outputs, const GridSpec& g);

}  // namespace dg
