#include "footreg/affinity.hpp"

#include <cmath>

#include "footreg/serialize.hpp"

namespace footreg {

void AffinityParams::validate() const {
  if (!(sigma_i > 0.0) || !(sigma_x > 0.0) || !(radius > 0.0)) {
    throw std::invalid_argument("affinity sigma_I, sigma_X and radius must be strictly positive");
  }
}

std::vector<PixelOffset> neighbor_offsets(double radius) {
  std::vector<PixelOffset> out;
  const int reach = static_cast<int>(std::ceil(radius));
  const double r2 = radius * radius;
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      if (dy == 0 && dx == 0) continue;
      if (static_cast<double>(dy * dy + dx * dx) < r2) out.push_back({dy, dx});
    }
  }
  return out;
}

AffinityMatrix::AffinityMatrix(int height, int width, std::vector<PixelOffset> offsets,
                               std::vector<float> planes)
    : height_(height), width_(width), offsets_(std::move(offsets)), planes_(std::move(planes)) {
  if (planes_.size() != offsets_.size() * n_pixels()) {
    throw ShapeError("AffinityMatrix", "plane storage does not match offsets x pixels");
  }
  std::vector<float> ones(n_pixels(), 1.0f);
  degree_ = multiply(ones);
}

std::span<const float> AffinityMatrix::plane(std::size_t o) const {
  return std::span<const float>(planes_).subspan(o * n_pixels(), n_pixels());
}

float AffinityMatrix::weight(std::size_t i, std::size_t j) const {
  const int yi = static_cast<int>(i) / width_, xi = static_cast<int>(i) % width_;
  const int yj = static_cast<int>(j) / width_, xj = static_cast<int>(j) % width_;
  const PixelOffset d{yj - yi, xj - xi};
  for (std::size_t o = 0; o < offsets_.size(); ++o) {
    if (offsets_[o] == d) return planes_[o * n_pixels() + i];
  }
  return 0.0f;
}

std::vector<float> AffinityMatrix::multiply(std::span<const float> s) const {
  if (s.size() != n_pixels()) {
    throw ShapeError("affinity apply", "vector length " + std::to_string(s.size()) +
                                           " != n_pixels " + std::to_string(n_pixels()));
  }
  std::vector<double> acc(n_pixels(), 0.0);
  for (std::size_t o = 0; o < offsets_.size(); ++o) {
    const auto [dy, dx] = offsets_[o];
    const float* w = planes_.data() + o * n_pixels();
    const int y_lo = std::max(0, -dy), y_hi = std::min(height_, height_ - dy);
    const int x_lo = std::max(0, -dx), x_hi = std::min(width_, width_ - dx);
    for (int y = y_lo; y < y_hi; ++y) {
      const std::size_t row = static_cast<std::size_t>(y) * width_;
      const std::size_t nrow = static_cast<std::size_t>(y + dy) * width_;
      for (int x = x_lo; x < x_hi; ++x) {
        acc[row + x] += static_cast<double>(w[row + x]) * s[nrow + x + dx];
      }
    }
  }
  return {acc.begin(), acc.end()};
}

double AffinityMatrix::total_weight() const {
  double s = 0.0;
  for (float v : planes_) s += v;
  return s;
}

AffinityMatrix build_affinity(const Tensor& image, const AffinityParams& params) {
  params.validate();
  Shape shape = image.shape();
  if (shape.size() == 4 && shape[0] == 1) shape.erase(shape.begin());
  if (shape.size() != 3) {
    throw ShapeError("build_affinity", "expected [C,H,W] image, got " +
                                           shape_to_string(image.shape()));
  }
  const int channels = shape[0], h = shape[1], w = shape[2];
  if (image.numel() == 0 || h == 0 || w == 0) throw ShapeError("build_affinity", "empty image");
  if (channels != 1 && channels != 3) {
    throw ShapeError("build_affinity", "pixel features must have 1 or 3 channels, got " +
                                           std::to_string(channels));
  }
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const auto px = image.data();

  auto offsets = neighbor_offsets(params.radius);
  std::vector<float> planes(offsets.size() * n, 0.0f);
  const double inv_si2 = 1.0 / (params.sigma_i * params.sigma_i);
  const double inv_sx2 = 1.0 / (params.sigma_x * params.sigma_x);
  for (std::size_t o = 0; o < offsets.size(); ++o) {
    const auto [dy, dx] = offsets[o];
    const double spatial = std::exp(-static_cast<double>(dy * dy + dx * dx) * inv_sx2);
    float* plane = planes.data() + o * n;
    for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
      for (int x = std::max(0, -dx); x < std::min(w, w - dx); ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const std::size_t j = static_cast<std::size_t>(y + dy) * w + (x + dx);
        double d2 = 0.0;
        for (int c = 0; c < channels; ++c) {
          const double diff = static_cast<double>(px[c * n + i]) - px[c * n + j];
          d2 += diff * diff;
        }
        plane[i] = static_cast<float>(std::exp(-d2 * inv_si2) * spatial);
      }
    }
  }
  return AffinityMatrix(h, w, std::move(offsets), std::move(planes));
}

Tensor apply(const AffinityMatrix& matrix, const Tensor& s) {
  if (s.numel() != matrix.n_pixels()) {
    throw ShapeError("affinity apply", "vector length " + std::to_string(s.numel()) +
                                           " != n_pixels " + std::to_string(matrix.n_pixels()));
  }
  auto si = s.impl_ptr();
  const AffinityMatrix* w = &matrix;
  return detail::record(s.shape(), matrix.multiply(s.data()), {s}, "affinity_apply",
                        [si, w](TensorImpl& self) {
                          detail::accumulate(*si, w->multiply(self.grad));
                        });
}

Tensor degree(const AffinityMatrix& matrix) {
  return Tensor::from_data({static_cast<int>(matrix.n_pixels())}, matrix.degree());
}

void dump_affinity(const std::filesystem::path& path, const AffinityMatrix& matrix) {
  const int n_off = static_cast<int>(matrix.offsets().size());
  std::vector<float> offs;
  for (const auto& o : matrix.offsets()) {
    offs.push_back(static_cast<float>(o.dy));
    offs.push_back(static_cast<float>(o.dx));
  }
  std::vector<float> weights;
  for (int o = 0; o < n_off; ++o) {
    auto p = matrix.plane(static_cast<std::size_t>(o));
    weights.insert(weights.end(), p.begin(), p.end());
  }
  std::vector<NamedTensor> records;
  if (n_off > 0) {
    records.push_back({"offsets", Tensor::from_data({n_off, 2}, std::move(offs))});
    records.push_back(
        {"weights", Tensor::from_data({n_off, matrix.height(), matrix.width()}, std::move(weights))});
  }
  save_tensors(path, records);
}

}  // namespace footreg
