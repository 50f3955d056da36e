#include "footreg/synthdata.hpp"

#include <algorithm>
#include <array>
#include <iomanip>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "footreg/image_io.hpp"
#include "footreg/metrics.hpp"
#include "footreg/serialize.hpp"

namespace footreg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool contains(const Polygon& poly, double px, double py) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > py) != (b.y > py)) {
      const double x_cross = (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x;
      if (px < x_cross) inside = !inside;
    }
  }
  return inside;
}

std::vector<Polygon> transform(const std::vector<Polygon>& parts, double scale, double angle,
                               double tx, double ty) {
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<Polygon> out;
  for (const auto& poly : parts) {
    Polygon p;
    for (const auto& v : poly) {
      p.push_back({scale * (c * v.x - s * v.y) + tx, scale * (s * v.x + c * v.y) + ty});
    }
    out.push_back(std::move(p));
  }
  return out;
}

double mask_area(const Tensor& mask) {
  double a = 0.0;
  for (float v : mask.data()) a += v;
  return a;
}

void stamp_disc(std::vector<float>& mask, int size, double cx, double cy, double r, float value) {
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(size - 1, static_cast<int>(std::ceil(cy + r)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(size - 1, static_cast<int>(std::ceil(cx + r)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r * r) mask[static_cast<std::size_t>(y) * size + x] = value;
    }
  }
}

std::vector<std::size_t> boundary_pixels(const std::vector<float>& mask, int size) {
  std::vector<std::size_t> out;
  auto at = [&](int y, int x) {
    if (y < 0 || x < 0 || y >= size || x >= size) return 0.0f;
    return mask[static_cast<std::size_t>(y) * size + x];
  };
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (at(y, x) < 0.5f) continue;
      if (at(y - 1, x) < 0.5f || at(y + 1, x) < 0.5f || at(y, x - 1) < 0.5f || at(y, x + 1) < 0.5f) {
        out.push_back(static_cast<std::size_t>(y) * size + x);
      }
    }
  }
  return out;
}

std::vector<float> box_smooth(const std::vector<float>& mask, int size, int kernel) {
  const int r = kernel / 2;
  const double norm = 1.0 / static_cast<double>(kernel);
  std::vector<float> tmp(mask.size()), out(mask.size());
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double s = 0.0;
      for (int k = -r; k < kernel - r; ++k) s += mask[static_cast<std::size_t>(y) * size + std::clamp(x + k, 0, size - 1)];
      tmp[static_cast<std::size_t>(y) * size + x] = static_cast<float>(s * norm);
    }
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double s = 0.0;
      for (int k = -r; k < kernel - r; ++k) s += tmp[static_cast<std::size_t>(std::clamp(y + k, 0, size - 1)) * size + x];
      out[static_cast<std::size_t>(y) * size + x] = std::clamp(static_cast<float>(s * norm), 0.0f, 1.0f);
    }
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

// ---- GenSpec -------------------------------------------------------------------

void GenSpec::validate() const {
  if (image_size < 8) throw std::invalid_argument("image_size must be at least 8");
  if (max_rects < 1) throw std::invalid_argument("max_rects must be >= 1");
  if (!(min_fill > 0.0 && min_fill <= max_fill && max_fill < 1.0)) {
    throw std::invalid_argument("fill ratios must satisfy 0 < min_fill <= max_fill < 1");
  }
  if (jitter_sigma < 0.0 || shift_max < 0 || blob_count < 0 || noise_sigma < 0.0 ||
      texture_amplitude < 0.0 || blob_min_radius < 0.0 || blob_max_radius < blob_min_radius) {
    throw std::invalid_argument("degradation and rendering parameters must be non-negative");
  }
  if (min_contrast < 0.0 || min_contrast > 0.6) {
    throw std::invalid_argument("min_contrast must lie in [0, 0.6]");
  }
}

std::map<std::string, std::string> GenSpec::to_map() const {
  auto num = [](double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  };
  return {{"image_size", std::to_string(image_size)},
          {"max_rects", std::to_string(max_rects)},
          {"max_rotation_deg", num(max_rotation_deg)},
          {"min_fill", num(min_fill)},
          {"max_fill", num(max_fill)},
          {"margin", num(margin)},
          {"jitter_sigma", num(jitter_sigma)},
          {"shift_max", std::to_string(shift_max)},
          {"blob_count", std::to_string(blob_count)},
          {"blob_min_radius", num(blob_min_radius)},
          {"blob_max_radius", num(blob_max_radius)},
          {"smooth_kernel", std::to_string(smooth_kernel)},
          {"min_contrast", num(min_contrast)},
          {"texture_amplitude", num(texture_amplitude)},
          {"noise_sigma", num(noise_sigma)}};
}

bool GenSpec::set(const std::string& key, const std::string& value) {
  if (key == "image_size") image_size = std::stoi(value);
  else if (key == "max_rects") max_rects = std::stoi(value);
  else if (key == "max_rotation_deg") max_rotation_deg = std::stod(value);
  else if (key == "min_fill") min_fill = std::stod(value);
  else if (key == "max_fill") max_fill = std::stod(value);
  else if (key == "margin") margin = std::stod(value);
  else if (key == "jitter_sigma") jitter_sigma = std::stod(value);
  else if (key == "shift_max") shift_max = std::stoi(value);
  else if (key == "blob_count") blob_count = std::stoi(value);
  else if (key == "blob_min_radius") blob_min_radius = std::stod(value);
  else if (key == "blob_max_radius") blob_max_radius = std::stod(value);
  else if (key == "smooth_kernel") smooth_kernel = std::stoi(value);
  else if (key == "min_contrast") min_contrast = std::stod(value);
  else if (key == "texture_amplitude") texture_amplitude = std::stod(value);
  else if (key == "noise_sigma") noise_sigma = std::stod(value);
  else return false;
  return true;
}

// ---- geometry --------------------------------------------------------------------

Polygon axis_rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

Tensor rasterize(const std::vector<Polygon>& parts, int size) {
  std::vector<float> mask(static_cast<std::size_t>(size) * size, 0.0f);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (const auto& poly : parts) {
        if (contains(poly, x + 0.5, y + 0.5)) {
          mask[static_cast<std::size_t>(y) * size + x] = 1.0f;
          break;
        }
      }
    }
  }
  return Tensor::from_data({1, size, size}, std::move(mask));
}

IdealFootprint gen_ideal_mask(const GenSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const double size = spec.image_size;
  const double total = size * size;
  for (int attempt = 0; attempt < 200; ++attempt) {
    // Local frame, main rectangle centred on the origin, unit-ish scale.
    const double mw = uniform(rng, 0.5, 1.0), mh = uniform(rng, 0.5, 1.0);
    std::vector<Polygon> local{axis_rect(-mw / 2, -mh / 2, mw / 2, mh / 2)};
    const int n_rects = uniform_int(rng, 1, spec.max_rects);
    for (int r = 1; r < n_rects; ++r) {
      const int side = uniform_int(rng, 0, 3);
      const bool horizontal = side < 2;  // attach to left/right edge
      const double along = horizontal ? mh : mw;
      const double across_main = horizontal ? mw : mh;
      const double len = uniform(rng, 0.3, 0.8) * along;
      const double depth = uniform(rng, 0.2, 0.5) * across_main;
      const double overlap = 0.25 * depth;
      const double centre = uniform(rng, -(along - len) / 2, (along - len) / 2);
      double a0 = centre - len / 2, a1 = centre + len / 2;
      double b0, b1;
      if (side % 2 == 0) {
        b0 = -across_main / 2 - depth + overlap;
        b1 = -across_main / 2 + overlap;
      } else {
        b0 = across_main / 2 - overlap;
        b1 = across_main / 2 + depth - overlap;
      }
      local.push_back(horizontal ? axis_rect(b0, a0, b1, a1) : axis_rect(a0, b0, a1, b1));
    }
    const double angle = uniform(rng, 0.0, spec.max_rotation_deg) * std::numbers::pi / 180.0;
    const double target = uniform(rng, spec.min_fill, spec.max_fill);

    // Extent of the rotated shape at unit scale.
    auto unit = transform(local, 1.0, angle, 0.0, 0.0);
    double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
    for (const auto& p : unit) {
      for (const auto& v : p) {
        min_x = std::min(min_x, v.x);
        max_x = std::max(max_x, v.x);
        min_y = std::min(min_y, v.y);
        max_y = std::max(max_y, v.y);
      }
    }
    const double room = size - 2.0 * spec.margin;
    const double max_scale = std::min(room / (max_x - min_x), room / (max_y - min_y));
    // Rasterized area grows with the square of the scale.
    const double probe_scale = 0.5 * max_scale;
    const double probe_area = mask_area(rasterize(
        transform(local, probe_scale, angle, size / 2 - probe_scale * (min_x + max_x) / 2,
                  size / 2 - probe_scale * (min_y + max_y) / 2),
        spec.image_size));
    if (probe_area <= 0.0) continue;
    double scale = probe_scale * std::sqrt(target * total / probe_area);
    scale = std::min(scale, max_scale);
    const double slack_x = room - scale * (max_x - min_x);
    const double slack_y = room - scale * (max_y - min_y);
    const double tx = spec.margin + uniform(rng, 0.0, std::max(0.0, slack_x)) - scale * min_x;
    const double ty = spec.margin + uniform(rng, 0.0, std::max(0.0, slack_y)) - scale * min_y;
    auto parts = transform(local, scale, angle, tx, ty);
    Tensor mask = rasterize(parts, spec.image_size);
    const double fill = mask_area(mask) / total;
    if (fill >= spec.min_fill && fill <= spec.max_fill) return {mask, std::move(parts)};
  }
  throw std::runtime_error("gen_ideal_mask: could not satisfy fill ratio constraints");
}

Tensor degrade_mask(const IdealFootprint& ideal, const GenSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int size = spec.image_size;
  for (int attempt = 0; attempt < 10; ++attempt) {
    std::mt19937_64 rng(sample_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::vector<Polygon> parts = ideal.parts;
    if (spec.jitter_sigma > 0.0) {
      std::normal_distribution<double> jitter(0.0, spec.jitter_sigma);
      for (auto& poly : parts) {
        for (auto& v : poly) {
          v.x += jitter(rng);
          v.y += jitter(rng);
        }
      }
    }
    if (spec.shift_max > 0) {
      const int dx = uniform_int(rng, -spec.shift_max, spec.shift_max);
      const int dy = uniform_int(rng, -spec.shift_max, spec.shift_max);
      for (auto& poly : parts) {
        for (auto& v : poly) {
          v.x += dx;
          v.y += dy;
        }
      }
    }
    Tensor raster = rasterize(parts, size);
    std::vector<float> mask(raster.data().begin(), raster.data().end());
    if (spec.blob_count > 0) {
      const int blobs = uniform_int(rng, 0, spec.blob_count);
      for (int b = 0; b < blobs; ++b) {
        const auto edge = boundary_pixels(mask, size);
        if (edge.empty()) break;
        const std::size_t pick = edge[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<int>(edge.size()) - 1))];
        const double radius = uniform(rng, spec.blob_min_radius, spec.blob_max_radius);
        const bool add = uniform_int(rng, 0, 1) == 1;
        stamp_disc(mask, size, static_cast<double>(pick % size) + 0.5,
                   static_cast<double>(pick / size) + 0.5, radius, add ? 1.0f : 0.0f);
      }
    }
    if (spec.smooth_kernel > 1) mask = box_smooth(mask, size, spec.smooth_kernel);
    Tensor out = Tensor::from_data({1, size, size}, std::move(mask));
    if (scores(confusion(out, ideal.mask)).iou >= 0.5) return out;
  }
  throw std::runtime_error("degrade_mask: degradation keeps violating the IoU >= 0.5 floor");
}

Tensor render_image(const IdealFootprint& ideal, const GenSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const int size = spec.image_size;
  const std::size_t n = static_cast<std::size_t>(size) * size;
  std::array<double, 3> ground{}, roof{};
  for (auto& g : ground) g = uniform(rng, 0.15, 0.85);
  for (int attempt = 0;; ++attempt) {
    for (auto& r : roof) r = uniform(rng, 0.1, 0.9);
    double diff = 0.0;
    for (int c = 0; c < 3; ++c) diff += std::abs(roof[c] - ground[c]);
    if (diff / 3.0 >= spec.min_contrast) break;
    if (attempt > 1000) {
      for (int c = 0; c < 3; ++c) roof[c] = ground[c] > 0.5 ? ground[c] - 0.6 : ground[c] + 0.6;
      break;
    }
  }
  // Two low-frequency sinusoids modulate the ground.
  struct Wave {
    double fx, fy, phase;
  };
  std::array<Wave, 2> waves{};
  for (auto& w : waves) {
    const double freq = uniform(rng, 0.5, 3.0) / size;
    const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    w = {freq * std::cos(dir), freq * std::sin(dir), uniform(rng, 0.0, 2.0 * std::numbers::pi)};
  }
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  std::vector<float> img(3 * n);
  const auto mask = ideal.mask.data();
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * size + x;
        double v;
        if (mask[i] > 0.5f) {
          v = roof[c];
        } else {
          double tex = 0.0;
          for (const auto& w : waves) {
            tex += std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
          }
          v = ground[c] + 0.5 * spec.texture_amplitude * tex;
        }
        if (spec.noise_sigma > 0.0) v += noise(rng);
        img[c * n + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return Tensor::from_data({3, size, size}, std::move(img));
}

std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t index) {
  return splitmix64(master_seed ^ splitmix64(index + 0x51ED2701ull));
}

SampleTriple generate_triple(const GenSpec& spec, std::uint64_t seed) {
  IdealFootprint ideal = gen_ideal_mask(spec, sample_seed(seed, 0));
  Tensor x = degrade_mask(ideal, spec, sample_seed(seed, 1));
  Tensor z = render_image(ideal, spec, sample_seed(seed, 2));
  return {x, z, ideal.mask};
}

// ---- splits and persistence -------------------------------------------------------

std::string split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation" || name == "val") return Split::validation;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

Split split_of(std::size_t index, std::size_t count) {
  const std::size_t n_train = count * 8 / 10;
  const std::size_t n_val = count / 10;
  if (index < n_train) return Split::train;
  if (index < n_train + n_val) return Split::validation;
  return Split::test;
}

namespace {

std::string stem_for(std::size_t index) {
  std::ostringstream o;
  o << std::setw(6) << std::setfill('0') << index;
  return o.str();
}

}  // namespace

DatasetManifest build_dataset(std::size_t count, const GenSpec& spec, std::uint64_t seed,
                              const std::filesystem::path& dir) {
  if (count < 1) throw std::invalid_argument("build_dataset: count must be >= 1");
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error("build_dataset: cannot create " + dir.string());
  }
  DatasetManifest manifest{count, seed, spec, {}};
  for (std::size_t i = 0; i < count; ++i) {
    const SampleTriple t = generate_triple(spec, sample_seed(seed, i));
    DatasetRecord rec{i, split_of(i, count), stem_for(i), 0, 0, 0};
    write_png(dir / (rec.stem + "_x.png"), to_image8(t.input_mask));
    write_png(dir / (rec.stem + "_z.png"), to_image8(t.image));
    write_png(dir / (rec.stem + "_y.png"), to_image8(t.ideal_mask));
    rec.crc_x = crc32_file(dir / (rec.stem + "_x.png"));
    rec.crc_z = crc32_file(dir / (rec.stem + "_z.png"));
    rec.crc_y = crc32_file(dir / (rec.stem + "_y.png"));
    manifest.records.push_back(rec);
  }
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  if (!out) throw std::runtime_error("build_dataset: cannot write manifest in " + dir.string());
  out << "format = footreg-dataset-1\n";
  out << "count = " << count << '\n';
  out << "seed = " << seed << '\n';
  for (const auto& [k, v] : spec.to_map()) out << "spec." << k << " = " << v << '\n';
  for (const auto& r : manifest.records) {
    out << "sample = " << r.index << ' ' << split_name(r.split) << ' ' << r.stem << ' '
        << hex32(r.crc_x) << ' ' << hex32(r.crc_z) << ' ' << hex32(r.crc_y) << '\n';
  }
  if (!out) throw std::runtime_error("build_dataset: failed writing manifest");
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw std::runtime_error("missing dataset manifest in " + dir.string());
  DatasetManifest m;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed manifest line: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "format") {
      if (value != "footreg-dataset-1") throw FormatError("unknown dataset format " + value);
    } else if (key == "count") {
      m.count = std::stoull(value);
    } else if (key == "seed") {
      m.seed = std::stoull(value);
    } else if (key.rfind("spec.", 0) == 0) {
      if (!m.spec.set(key.substr(5), value)) throw FormatError("unknown spec key " + key);
    } else if (key == "sample") {
      std::istringstream fields(value);
      DatasetRecord r;
      std::string split, cx, cz, cy;
      fields >> r.index >> split >> r.stem >> cx >> cz >> cy;
      if (!fields) throw FormatError("malformed sample record: " + value);
      r.split = parse_split(split);
      r.crc_x = static_cast<std::uint32_t>(std::stoul(cx, nullptr, 16));
      r.crc_z = static_cast<std::uint32_t>(std::stoul(cz, nullptr, 16));
      r.crc_y = static_cast<std::uint32_t>(std::stoul(cy, nullptr, 16));
      m.records.push_back(r);
    } else {
      throw FormatError("unknown manifest key " + key);
    }
  }
  if (m.records.size() != m.count) throw FormatError("manifest record count mismatch");
  return m;
}

SampleTriple load_triple(const std::filesystem::path& dir, const DatasetRecord& r) {
  auto check = [&](const std::string& suffix, std::uint32_t expected) {
    const auto path = dir / (r.stem + suffix);
    if (crc32_file(path) != expected) {
      throw FormatError("checksum mismatch for " + path.string());
    }
    return path;
  };
  const auto px = check("_x.png", r.crc_x);
  const auto pz = check("_z.png", r.crc_z);
  const auto py = check("_y.png", r.crc_y);
  return {from_image8(read_png(px, 1)), from_image8(read_png(pz, 3)), from_image8(read_png(py, 1))};
}

std::vector<SampleTriple> load_split(const std::filesystem::path& dir,
                                     const DatasetManifest& manifest, Split split) {
  std::vector<SampleTriple> out;
  for (const auto& r : manifest.records) {
    if (r.split == split) out.push_back(load_triple(dir, r));
  }
  return out;
}

}  // namespace footreg
