#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

#include "footreg/config.hpp"
#include "footreg/image_io.hpp"
#include "footreg/serialize.hpp"
#include "oracles.hpp"

using namespace footreg;
namespace fs = std::filesystem;

TEST_SUITE("io") {

TEST_CASE("tensor container round trip is bit exact") {
  std::mt19937_64 rng(1);
  std::vector<float> special{0.0f, -0.0f, std::numeric_limits<float>::infinity(),
                             std::numeric_limits<float>::denorm_min(), 1e-38f, -3.5f};
  std::vector<NamedTensor> in{{"a", Tensor::from_data({2, 3}, special)},
                              {"EG.stage0.conv.weight", Tensor::from_data({4, 1, 3, 3}, oracle::uniform(rng, 36, -1, 1))},
                              {"scalar", Tensor::from_data({1}, {7.0f})}};
  std::stringstream buf;
  write_tensors(buf, in);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "FREG");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == 1u);

  const auto out = read_tensors(buf);
  REQUIRE(out.size() == in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK(out[i].name == in[i].name);
    CHECK(out[i].tensor.shape() == in[i].tensor.shape());
    CHECK(std::memcmp(out[i].tensor.data().data(), in[i].tensor.data().data(), in[i].tensor.numel() * 4) == 0);
  }

  // first record header: name length 1, 'a', rank 2, dims 2 3, then six floats
  std::uint32_t u;
  std::memcpy(&u, bytes.data() + 8, 4);
  CHECK(u == 1u);
  CHECK(bytes[12] == 'a');
  std::memcpy(&u, bytes.data() + 13, 4);
  CHECK(u == 2u);
  float f;
  std::memcpy(&f, bytes.data() + 25 + 4 * 5, 4);
  CHECK(f == -3.5f);
}

TEST_CASE("damaged containers are refused") {
  std::stringstream bad_magic("FRGXabcd");
  CHECK_THROWS_AS(read_tensors(bad_magic), FormatError);

  std::stringstream buf;
  std::vector<NamedTensor> in{{"w", Tensor::full({8}, 1.0f)}};
  write_tensors(buf, in);
  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_tensors(truncated), FormatError);

  bytes[4] = 9;
  std::stringstream future(bytes);
  CHECK_THROWS_AS(read_tensors(future), FormatError);
}

TEST_CASE("crc32 matches the standard check value") {
  const std::string s = "123456789";
  CHECK(crc32_bytes({reinterpret_cast<const unsigned char*>(s.data()), s.size()}) == 0xCBF43926u);
  CHECK(hex32(0xCBF43926u) == "cbf43926");
}

TEST_CASE("PNG round trip keeps 8-bit values") {
  const auto dir = fs::temp_directory_path() / "footreg_png";
  fs::create_directories(dir);
  std::mt19937_64 rng(3);
  Tensor rgb = Tensor::from_data({3, 5, 7}, oracle::uniform(rng, 105, 0, 1));
  write_png(dir / "rgb.png", to_image8(rgb));
  const Image8 back = read_png(dir / "rgb.png", 3);
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.pixels == to_image8(rgb).pixels);
  const Tensor t = from_image8(back);
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(std::abs(t.at(i) - rgb.at(i)) <= 0.5f / 255 + 1e-6f);
  // interleaving: pixel (0,0) of channel 1 lands at byte 1
  CHECK(back.pixels[1] == quantize(rgb.at(35)));

  CHECK(quantize(0.5f) == 128);
  CHECK(quantize(1.2f) == 255);
  CHECK(quantize(-0.1f) == 0);
  CHECK_THROWS(read_png(dir / "missing.png", 1));
  fs::remove_all(dir);
}

TEST_CASE("configuration text") {
  const RunConfig c = parse_run_config(
      "# comment\n"
      "image_size = 32\n"
      "depth = 2   # inline\n"
      "delta = 50\n"
      "bce = one_sided\n"
      "gen.jitter_sigma = 0.75\n"
      "dataset_count = 12\n");
  CHECK(c.train.net.image_size == 32);
  CHECK(c.gen.image_size == 32);
  CHECK(c.train.net.depth == 2);
  CHECK(c.train.weights.delta_max == 50.0f);
  CHECK(c.train.bce == BceVariant::one_sided);
  CHECK(c.gen.jitter_sigma == 0.75);
  CHECK(c.dataset_count == 12u);

  const RunConfig again = parse_run_config(run_config_to_text(c));
  CHECK(run_config_to_text(again) == run_config_to_text(c));

  CHECK_THROWS_AS(parse_run_config("learning_rate = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("gen.nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("depth = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("depth\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("bce = both\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("image_size = 48\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("constant_batches = 90000\n"), ConfigError);
}

TEST_CASE("shipped configs parse") {
  const fs::path root = FOOTREG_SOURCE_DIR;
  const RunConfig desk = load_run_config(root / "configs" / "desk.cfg");
  CHECK(desk.train.net.image_size == 64);
  CHECK(desk.train.schedule.total_batches == 5000);
  CHECK(desk.train.affinity.radius == 5.0);
  const RunConfig full = load_run_config(root / "configs" / "paper.cfg");
  CHECK(full.train.net.image_size == 256);
  CHECK(full.train.schedule.total_batches == 80000);
  CHECK(full.train.schedule.constant_batches == 60000);
  CHECK(full.train.weights.warmup_batches == 30000);
  CHECK(full.train.affinity.radius == 19.0);
  CHECK(full.train.schedule.base_lr == 0.0002);
}

}  // TEST_SUITE
