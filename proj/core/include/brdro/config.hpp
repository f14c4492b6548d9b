#pragma once

// Experiment configuration: a flat key = value file with [data], [split],
// [train], [experiment] and [game] sections. Keys outside any section are
// resolved by name when the name is unique across sections. Lists are comma
// separated. Parsing is strict; every error names the offending key.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "brdro/dro.hpp"
#include "brdro/synthdata.hpp"

namespace brdro {

struct SweepAxis {
  /// A numeric key, optionally qualified as `section.key`.
  std::string parameter;
  std::vector<double> values;
  friend bool operator==(const SweepAxis&, const SweepAxis&) = default;
};

struct GameSettings {
  std::size_t n = 512;
  std::size_t d_noise = 2;
  std::size_t groups = 8;
  double l2_reg = 0.05;
  double alpha0 = 0.5;
  std::vector<int> horizons{1000, 4000, 16000, 64000};
  /// Learner step is lr_scale / sqrt(T).
  double lr_scale = 10.0;
  double init_std = 1.0;
  std::vector<std::uint64_t> init_seeds{1, 2};
  /// Horizons below this are reported as insufficient rather than checked.
  int burn_in = 500;
  std::uint64_t seed = 0;
  /// Allowed max/min ratio of gap * sqrt(T) across horizons.
  double band = 2.0;
  double uniqueness_tol = 1e-3;
  friend bool operator==(const GameSettings&, const GameSettings&) = default;
};

struct ExperimentConfig {
  SynthConfig data;
  TrainConfig train;
  SplitFractions split;
  std::filesystem::path out_dir = "out";
  std::vector<std::uint64_t> seeds{0};
  /// train.method always equals methods.front().
  std::vector<Method> methods{Method::erm};
  std::optional<SweepAxis> sweep;
  /// Top fraction used for minority precision and noisy capture.
  double top_frac = 0.1;
  GameSettings game;

  /// Throws ConfigError.
  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Throws ConfigError for a missing file, malformed line, unknown or
/// ambiguous key, duplicate key or invalid value.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(std::string_view text);

/// Fully resolved config; parse_config_text(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& cfg);

/// Sets one key from its textual value, as the parser would. `key` may be
/// bare or `section.key`. Throws ConfigError.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Fully qualified `section.key` names of every key.
std::vector<std::string> config_keys();

}  // namespace brdro
