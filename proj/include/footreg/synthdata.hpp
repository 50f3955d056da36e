#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "footreg/tensor.hpp"

namespace footreg {

struct Point {
  double x = 0.0;
  double y = 0.0;
};
using Polygon = std::vector<Point>;

/// Parameters of the procedural footprint corpus.
struct GenSpec {
  int image_size = 64;

  // Building shape: 1..max_rects overlapping rectangles, rotated as a whole.
  int max_rects = 3;
  double max_rotation_deg = 45.0;
  double min_fill = 0.2;
  double max_fill = 0.6;
  double margin = 3.0;  // pixels kept free along the raster border

  // Degradation of the ideal footprint into the input mask.
  double jitter_sigma = 1.5;  // per-vertex Gaussian displacement, pixels
  int shift_max = 2;          // whole-mask integer translation in [-shift_max, shift_max]
  int blob_count = 2;         // up to this many discs added or removed on the boundary
  double blob_min_radius = 2.0;
  double blob_max_radius = 5.0;
  int smooth_kernel = 5;      // box filter size; <= 1 disables smoothing

  // Intensity image.
  double min_contrast = 0.25;       // mean absolute roof/ground difference per channel
  double texture_amplitude = 0.04;  // low-frequency ground texture
  double noise_sigma = 0.03;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  /// Applies known keys; returns false for an unknown key.
  bool set(const std::string& key, const std::string& value);
};

struct IdealFootprint {
  Tensor mask;                  // [1,H,W], exactly {0,1}
  std::vector<Polygon> parts;   // union of these convex parts is the footprint
};

struct SampleTriple {
  Tensor input_mask;  // x: [1,H,W] in [0,1]
  Tensor image;       // z: [3,H,W] in [0,1]
  Tensor ideal_mask;  // y: [1,H,W] binary
};

/// Pixel-center rasterization of the union of polygons.
Tensor rasterize(const std::vector<Polygon>& parts, int size);
Polygon axis_rect(double x0, double y0, double x1, double y1);

IdealFootprint gen_ideal_mask(const GenSpec& spec, std::uint64_t seed);
/// Vertex jitter, shift, boundary blobs and box smoothing; resampled until the
/// binarized result keeps IoU >= 0.5 with the ideal (10 attempts, then throws).
Tensor degrade_mask(const IdealFootprint& ideal, const GenSpec& spec, std::uint64_t seed);
Tensor render_image(const IdealFootprint& ideal, const GenSpec& spec, std::uint64_t seed);

SampleTriple generate_triple(const GenSpec& spec, std::uint64_t seed);
std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t index);

enum class Split { train, validation, test };
std::string split_name(Split split);
Split parse_split(const std::string& name);
/// 80/10/10 by index.
Split split_of(std::size_t index, std::size_t count);

struct DatasetRecord {
  std::size_t index = 0;
  Split split = Split::train;
  std::string stem;  // file prefix inside the dataset directory
  std::uint32_t crc_x = 0, crc_z = 0, crc_y = 0;
};

struct DatasetManifest {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  GenSpec spec;
  std::vector<DatasetRecord> records;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Writes count triples as 8-bit PNGs plus manifest.txt into `dir`.
DatasetManifest build_dataset(std::size_t count, const GenSpec& spec, std::uint64_t seed,
                              const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);
/// Loads the triples of one split, verifying every file checksum.
std::vector<SampleTriple> load_split(const std::filesystem::path& dir,
                                     const DatasetManifest& manifest, Split split);
SampleTriple load_triple(const std::filesystem::path& dir, const DatasetRecord& record);

}  // namespace footreg
