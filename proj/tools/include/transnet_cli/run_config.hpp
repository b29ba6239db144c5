#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "transnet/data.hpp"
#include "transnet/optim.hpp"

namespace transnet::cli {

/// `n=200,size=32[,noise=0.08]`: n is the total sample count.
struct SynthSpec {
  std::size_t n = 200;
  std::size_t size = 32;
  double noise = SynthOptions{}.noise_stdev;
};

SynthSpec parse_synth_spec(std::string_view text);
/// "CxHxW", e.g. "3x64x64". Throws ConfigError.
Shape4 parse_input_shape(std::string_view text);

struct RunConfig {
  std::string command;
  std::string preset = "alexnet_mini";
  std::string variant = "baseline";
  TrainConfig train;
  std::optional<std::filesystem::path> data;
  std::optional<SynthSpec> synth;
  std::optional<Shape4> input;  // resample manifest patches to this (C, H, W)
  ResampleMode resample = ResampleMode::kBilinear;
  bool grouped = false;
  std::size_t k = 5;
  std::size_t jobs = 1;
  bool verbose = false;
  std::filesystem::path out;

  /// Exactly one data source, k >= 2, an output directory, sane training
  /// hyperparameters. Throws ConfigError.
  void validate() const;
  /// Preset name with the variant flags folded in, e.g. "alexnet_mini+transition".
  std::string preset_name() const;
};

/// `key=value` lines; blank lines and `#` comments are skipped and
/// whitespace around keys and values is trimmed. Throws ConfigError.
std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path);

/// Splices `--config FILE` entries into the argument list as `--key=value`
/// right after the subcommand name, so later command-line flags override
/// them. args[0] is the subcommand.
std::vector<std::string> expand_config_args(std::vector<std::string> args);

}  // namespace transnet::cli
