#include "dg/patch_grid.hpp"

#include <cmath>

#include "dg/error.hpp"

namespace dg {

std::vector<int> grid_starts(int dim, int patch_dim, int k) {
  if (patch_dim <= 0 || dim <= 0)
    throw GeometryError("grid_starts: dim and patch_dim must be positive");
  if (patch_dim > dim)
    throw GeometryError("grid_starts: patch_dim " + std::to_string(patch_dim) +
                        " exceeds dim " + std::to_string(dim));
  if (k == 1) {
    if (patch_dim != dim)
      throw GeometryError("grid_starts: k = 1 requires patch_dim == dim");
    return {0};
  }
  if (k < 1) throw ParameterError("grid_starts: k must be >= 1");

  const int span = dim - patch_dim;
  std::vector<int> starts(k);
  for (int i = 0; i < k; ++i) {
    const double pos = static_cast<double>(i) * span / (k - 1);
    starts[i] = static_cast<int>(std::llround(pos));  // half away from zero
  }
  for (int i = 1; i < k; ++i) {
    if (starts[i] <= starts[i - 1])
      throw GeometryError("grid_starts: k = " + std::to_string(k) +
                          " windows of " + std::to_string(patch_dim) +
                          " cannot be strictly increasing in dim " +
                          std::to_string(dim));
    if (starts[i] - starts[i - 1] > patch_dim)
      throw GeometryError("grid_starts: windows leave a gap in dim " +
                          std::to_string(dim));
  }
  return starts;
}

GridSpec GridSpec::make(Dims volume_dims, Dims patch_dims, int k) {
  GridSpec g;
  g.k = k;
  g.patch_dims = patch_dims;
  g.volume_dims = volume_dims;
  g.starts_x = grid_starts(volume_dims.x, patch_dims.x, k);
  g.starts_y = grid_starts(volume_dims.y, patch_dims.y, k);
  g.starts_z = grid_starts(volume_dims.z, patch_dims.z, k);
  return g;
}

namespace {

void check_grid(const GridSpec& g, const Dims& dims) {
  if (!(dims == g.volume_dims))
    throw GeometryError("patch grid built for dims " +
                        to_string(g.volume_dims) + ", volume has " +
                        to_string(dims));
  if (g.k < 1 || g.starts_x.size() != static_cast<std::size_t>(g.k) ||
      g.starts_y.size() != static_cast<std::size_t>(g.k) ||
      g.starts_z.size() != static_cast<std::size_t>(g.k))
    throw GeometryError("inconsistent grid spec");
}

}  // namespace

std::vector<Volume3D> extract_patches(const Volume3D& v, const GridSpec& g) {
  check_grid(g, v.dims());
  std::vector<Volume3D> patches;
  patches.reserve(g.num_patches());
  const Dims p = g.patch_dims;
  for (int gz = 0; gz < g.k; ++gz)
    for (int gy = 0; gy < g.k; ++gy)
      for (int gx = 0; gx < g.k; ++gx) {
        Volume3D patch(p);
        const int ox = g.starts_x[gx], oy = g.starts_y[gy], oz = g.starts_z[gz];
        for (int z = 0; z < p.z; ++z)
          for (int y = 0; y < p.y; ++y)
            for (int x = 0; x < p.x; ++x)
              patch(x, y, z) = v(ox + x, oy + y, oz + z);
        patches.push_back(std::move(patch));
      }
  return patches;
}

std::vector<DCMap> extract_target_patches(const DCMap& field, const GridSpec& g) {
  check_grid(g, field.dims());
  std::vector<DCMap> patches;
  patches.reserve(g.num_patches());
  const Dims p = g.patch_dims;
  for (int gz = 0; gz < g.k; ++gz)
    for (int gy = 0; gy < g.k; ++gy)
      for (int gx = 0; gx < g.k; ++gx) {
        DCMap patch(p);
        const int ox = g.starts_x[gx], oy = g.starts_y[gy], oz = g.starts_z[gz];
        for (int c = 0; c < 2; ++c)
          for (int z = 0; z < p.z; ++z)
            for (int y = 0; y < p.y; ++y)
              for (int x = 0; x < p.x; ++x)
                patch.at(c, x, y, z) = field.at(c, ox + x, oy + y, oz + z);
        patches.push_back(std::move(patch));
      }
  return patches;
}

DCMap reconstruct(const std::vector<DCMap>& patch_outputs, const GridSpec& g) {
  if (patch_outputs.size() != static_cast<std::size_t>(g.num_patches()))
    throw GeometryError("reconstruct: expected " +
                        std::to_string(g.num_patches()) + " patch outputs, got " +
                        std::to_string(patch_outputs.size()));
  const Dims p = g.patch_dims;
  for (const DCMap& out : patch_outputs)
    if (!(out.dims() == p))
      throw GeometryError("reconstruct: patch output dims " +
                          to_string(out.dims()) + " do not match patch dims " +
                          to_string(p));

  DCMap map(g.volume_dims);
  std::vector<std::uint32_t> coverage(map.voxels(), 0);

  int index = 0;
  for (int gz = 0; gz < g.k; ++gz)
    for (int gy = 0; gy < g.k; ++gy)
      for (int gx = 0; gx < g.k; ++gx, ++index) {
        const DCMap& out = patch_outputs[index];
        const int ox = g.starts_x[gx], oy = g.starts_y[gy], oz = g.starts_z[gz];
        for (int z = 0; z < p.z; ++z)
          for (int y = 0; y < p.y; ++y) {
            std::size_t dst = map.index(ox, oy + y, oz + z);
            std::size_t src = out.index(0, y, z);
            for (int x = 0; x < p.x; ++x, ++dst, ++src) {
              // Running mean with exact counts: identical covering values
              // reproduce without rounding, which the round-trip contract
              // requires.
              const std::uint32_t n = ++coverage[dst];
              map.at(0, dst) += (out.at(0, src) - map.at(0, dst)) / n;
              map.at(1, dst) += (out.at(1, src) - map.at(1, dst)) / n;
            }
          }
      }

  for (std::uint32_t n : coverage)
    if (n == 0) throw GeometryError("reconstruct: grid leaves uncovered voxels");
  return map;
}

}  // namespace dg
