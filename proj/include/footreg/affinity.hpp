#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "footreg/tensor.hpp"

namespace footreg {

struct AffinityParams {
  double sigma_i = 0.075;  // intensity bandwidth
  double sigma_x = 4.0;    // spatial bandwidth, pixels
  double radius = 5.0;     // pairs at Euclidean distance >= radius get no weight

  void validate() const;
};

struct PixelOffset {
  int dy = 0;
  int dx = 0;
  bool operator==(const PixelOffset&) const = default;
};

/// Non-zero displacements with dy^2 + dx^2 < radius^2, in row-major scan order.
std::vector<PixelOffset> neighbor_offsets(double radius);

/// Sparse symmetric pixel-pair weights, stored as one H*W plane per offset:
/// plane(o)[i] = w(i, i + offset[o]), zero where the neighbour falls off the raster.
class AffinityMatrix {
 public:
  AffinityMatrix() = default;
  AffinityMatrix(int height, int width, std::vector<PixelOffset> offsets,
                 std::vector<float> planes);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t n_pixels() const { return static_cast<std::size_t>(height_) * width_; }
  const std::vector<PixelOffset>& offsets() const { return offsets_; }
  std::span<const float> plane(std::size_t o) const;

  /// w_ij for flat pixel indices; 0 for pairs outside the radius or i == j.
  float weight(std::size_t i, std::size_t j) const;
  /// W * s
  std::vector<float> multiply(std::span<const float> s) const;
  /// W * 1, computed once.
  const std::vector<float>& degree() const { return degree_; }
  double total_weight() const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<PixelOffset> offsets_;
  std::vector<float> planes_;
  std::vector<float> degree_;
};

/// image is [C,H,W] or [1,C,H,W] with C in {1,3}; the pixel feature is the
/// channel vector and its distance is squared L2 over channels.
AffinityMatrix build_affinity(const Tensor& image, const AffinityParams& params);

/// Differentiable W * s for s of length n_pixels. W is symmetric, so the
/// backward pass is W * grad. `matrix` must outlive the recorded graph.
Tensor apply(const AffinityMatrix& matrix, const Tensor& s);
Tensor degree(const AffinityMatrix& matrix);

/// Debug dump: "offsets" [n_off, 2] (dy, dx) and "weights" [n_off, H, W].
void dump_affinity(const std::filesystem::path& path, const AffinityMatrix& matrix);

}  // namespace footreg
