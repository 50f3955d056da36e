#pragma once

#include <filesystem>
#include <string>

#include "footreg/config.hpp"
#include "footreg/metrics.hpp"

namespace footreg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Accepts "dir/checkpoint" or "dir/checkpoint.freg".
std::string checkpoint_stem(const std::string& path);

DatasetManifest cmd_gen_data(const RunConfig& config, const std::filesystem::path& out_dir);
TrainingResult cmd_train(const RunConfig& config, const std::filesystem::path& dataset_dir,
                         const std::filesystem::path& out_dir, const std::string& resume_from = {},
                         long stop_at = -1);
/// Throws ConfigError when the rasters disagree or do not fit the network.
void cmd_regularize(const std::string& checkpoint, const std::filesystem::path& mask_png,
                    const std::filesystem::path& image_png, const std::filesystem::path& out_png);
/// Writes scores.csv and scores.txt into out_dir and returns the report.
EvaluationReport cmd_evaluate(const std::string& checkpoint, const std::filesystem::path& dataset_dir,
                              Split split, const std::filesystem::path& out_dir);
/// Four panels left to right: image z, input x, G(x, z), ideal y.
void cmd_render(const std::string& checkpoint, const std::filesystem::path& dataset_dir,
                std::size_t index, const std::filesystem::path& out_png);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace footreg
