#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "footreg/synthdata.hpp"
#include "footreg/trainer.hpp"

namespace footreg {

/// Bad or unknown configuration input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything one CLI run can tune, read from `key = value` lines ('#' comments).
struct RunConfig {
  TrainConfig train;
  GenSpec gen;
  std::size_t dataset_count = 500;
  std::uint64_t dataset_seed = 7;
  std::string data_dir;
  std::string out_dir;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Fully resolved form; parse_run_config(run_config_to_text(c)) reproduces c.
std::string run_config_to_text(const RunConfig& config);
std::string train_config_to_text(const TrainConfig& config);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace footreg
