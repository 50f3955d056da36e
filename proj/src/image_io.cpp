#include "footreg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <png.h>

namespace footreg {

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("write_png: only gray or RGB images are supported");
  }
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error("write_png: " + path.string() + ": " + png.message);
  }
}

Image8 read_png(const std::filesystem::path& path, int channels) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw std::runtime_error("read_png: " + path.string() + ": " + png.message);
  }
  png.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out;
  out.width = static_cast<int>(png.width);
  out.height = static_cast<int>(png.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, out.pixels.data(), 0, nullptr)) {
    throw std::runtime_error("read_png: " + path.string() + ": " + png.message);
  }
  return out;
}

Image8 to_image8(const Tensor& planar) {
  Shape s = planar.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3)) {
    throw ShapeError("to_image8", "expected [1|3,H,W], got " + shape_to_string(planar.shape()));
  }
  Image8 img{s[2], s[1], s[0], {}};
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(n * img.channels);
  const auto d = planar.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < img.channels; ++c) img.pixels[i * img.channels + c] = quantize(d[c * n + i]);
  }
  return img;
}

Tensor from_image8(const Image8& image) {
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  std::vector<float> v(n * image.channels);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < image.channels; ++c) {
      v[c * n + i] = static_cast<float>(image.pixels[i * image.channels + c]) / 255.0f;
    }
  }
  return Tensor::from_data({image.channels, image.height, image.width}, std::move(v));
}

}  // namespace footreg
