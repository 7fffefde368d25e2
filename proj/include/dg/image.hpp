#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dg/volume.hpp"

namespace dg {

struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  std::uint8_t* pixel(int x, int y) {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

enum class SliceAxis : int { Sagittal = 0, Coronal = 1, Axial = 2 };

// Renders one slice of a DC map through the grading colormap. slice_index
// -1 picks the mid slice. The optional label overlay draws structure
// boundaries in black.
Image8 render_dc_slice(const DCMap& map, SliceAxis axis, int slice_index = -1,
                       const LabelVolume* overlay = nullptr);

// Minimal RGB8 PNG writer (stored-deflate zlib stream); byte deterministic.
void write_png(const Image8& image, const std::filesystem::path& path);

// Reader for the subset of PNG this project writes; used by tests to check
// exported slices pixel for pixel.
Image8 read_png(const std::filesystem::path& path);

}  // namespace dg
