#include "footreg/serialize.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <zlib.h>

namespace footreg {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                  static_cast<char>((v >> 16) & 0xff),
                                  static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes.data(), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

std::uint32_t need_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(in, v)) throw FormatError(std::string("truncated tensor file while reading ") + what);
  return v;
}

}  // namespace

void write_tensors(std::ostream& out, std::span<const NamedTensor> tensors) {
  out.write(kTensorMagic, 4);
  put_u32(out, kTensorFormatVersion);
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw FormatError("failed writing tensor stream");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || !std::equal(magic.begin(), magic.end(), kTensorMagic)) {
    throw FormatError("not a FREG tensor file (bad magic)");
  }
  const std::uint32_t version = need_u32(in, "version");
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported FREG version " + std::to_string(version));
  }
  std::vector<NamedTensor> result;
  std::uint32_t name_len = 0;
  while (get_u32(in, name_len)) {
    if (name_len > (1u << 16)) throw FormatError("implausible tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len) throw FormatError("truncated tensor name");
    const std::uint32_t rank = need_u32(in, "rank");
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) {
      d = static_cast<int>(need_u32(in, "dims"));
      if (d <= 0) throw FormatError("non-positive dimension in tensor '" + name + "'");
    }
    std::vector<float> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<float>(need_u32(in, "payload"));
    result.push_back({std::move(name), Tensor::from_data(shape, std::move(values))});
  }
  return result;
}

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensors(out, tensors);
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensors(in);
}

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes, std::uint32_t seed) {
  uLong crc = seed;
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return crc32_bytes(bytes);
}

std::string hex32(std::uint32_t value) {
  std::ostringstream out;
  out << std::hex << std::setw(8) << std::setfill('0') << value;
  return out.str();
}

}  // namespace footreg
