#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "footreg/tensor.hpp"

namespace footreg {

// Chunked tensor container: "FREG", u32 version, then until EOF one record per
// tensor: u32 name length, UTF-8 name, u32 rank, u32 dims, little-endian f32 payload.
inline constexpr char kTensorMagic[4] = {'F', 'R', 'E', 'G'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_tensors(std::ostream& out, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes, std::uint32_t seed = 0);
std::uint32_t crc32_file(const std::filesystem::path& path);
std::string hex32(std::uint32_t value);

}  // namespace footreg
