#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sluadv/comparison.hpp"
#include "sluadv/model.hpp"
#include "sluadv/training.hpp"

namespace sluadv::cli {

/// Invalid flags or configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

struct RunConfig {
  std::string name = "experiment";
  std::filesystem::path corpus_dir;
  std::filesystem::path output_dir;
  std::string variant = "standard-multi";  // standard-mono, standard-multi, adversarial
  ModelConfig model;
  TrainConfig train;
  std::string fractions;  // "EN=0.5,DE=0.5"
  std::uint64_t split_seed = 0;
  std::uint64_t partition_seed = 0;  // 80/10/10 partition used by compare
  std::vector<std::uint64_t> seeds{1};
  int min_token_freq = 2;
  std::size_t workers = 1;

  /// Field-level checks; does not touch the filesystem.
  void validate() const;
};

/// Overlays the fields present in `j` onto `base`. Unknown keys and
/// mistyped values raise ConfigError naming the field. "train.parity_mode":
/// true first applies the parity presets, which explicit fields still override.
RunConfig parse_run_config(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// --out, else $SLUADV_OUT, else the config's output_dir; ConfigError if none.
std::filesystem::path resolve_output_dir(const std::optional<std::string>& flag, const RunConfig& config);

}  // namespace sluadv::cli
