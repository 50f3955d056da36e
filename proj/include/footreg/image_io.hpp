#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "footreg/tensor.hpp"

namespace footreg {

/// 8-bit interleaved raster (1 = gray, 3 = RGB).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

void write_png(const std::filesystem::path& path, const Image8& image);
/// Reads any PNG and converts to `channels` (1 or 3).
Image8 read_png(const std::filesystem::path& path, int channels);

/// round(v * 255) after clamping to [0,1]. Accepts [C,H,W] or [1,C,H,W].
Image8 to_image8(const Tensor& planar);
/// v / 255 into a planar [C,H,W] tensor.
Tensor from_image8(const Image8& image);

std::uint8_t quantize(float v);

}  // namespace footreg
