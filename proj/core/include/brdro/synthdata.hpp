#pragma once

// Explicit-memorization synthetic benchmark: a core feature tied to the clean
// label, a spurious feature tied to an attribute that agrees with the label
// with probability p_maj, and an isotropic noise block.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "brdro/diffcore.hpp"

namespace brdro {

inline constexpr int kNumGroups = 4;
inline constexpr Eigen::Index kCoreIndex = 0;
inline constexpr Eigen::Index kSpuriousIndex = 1;
inline constexpr Eigen::Index kNoiseOffset = 2;

struct SynthConfig {
  int n = 10000;
  int d_noise = 100;
  double sigma_core = 1.0;
  double sigma_spu = 0.5;
  double sigma_noise = 1.0;
  double p_maj = 0.9;
  double p_noise = 0.0;
  std::uint64_t seed = 0;

  /// Throws InputError naming the offending field.
  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct Example {
  Eigen::VectorXd x;  // [x_core, x_spu, x_noise...]
  int y = 1;
  int y_clean = 1;
  int a = 1;
  int group = 0;
  bool is_noisy = false;

  bool is_minority() const { return a != y_clean; }
};

/// 2 * [y_clean = +1] + [a = y_clean]
int group_of(int y_clean, int a);

struct GroupStructure {
  struct Group {
    int id = 0;
    std::vector<std::size_t> members;
  };
  std::vector<Group> groups;  // nonempty groups only, ascending id
  std::array<std::size_t, kNumGroups> counts{};
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Example> examples, SynthConfig provenance, bool noise_injected);

  const std::vector<Example>& examples() const { return examples_; }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  Eigen::Index feature_dim() const;

  const GroupStructure& groups() const { return groups_; }
  const SynthConfig& provenance() const { return provenance_; }
  bool noise_injected() const { return noise_injected_; }

  double minority_fraction() const;
  double noisy_fraction() const;

  /// Examples at `indices`, in that order, with metadata preserved.
  Dataset subset(const std::vector<std::size_t>& indices) const;

 private:
  std::vector<Example> examples_;
  GroupStructure groups_;
  SynthConfig provenance_;
  bool noise_injected_ = false;
};

GroupStructure compute_groups(const std::vector<Example>& examples);

/// Deterministic in cfg.seed. Label flips with probability cfg.p_noise are
/// applied after the features are drawn.
Dataset generate(const SynthConfig& cfg);

/// Flips each y independently with probability p_noise. Throws UsageError if
/// the dataset already carries injected noise.
Dataset inject_label_noise(const Dataset& ds, double p_noise, Rng& rng);

struct SplitFractions {
  double train = 0.3;
  double val = 0.2;
  double test = 0.5;
  friend bool operator==(const SplitFractions&, const SplitFractions&) = default;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Disjoint partition of a shuffled index order.
DatasetSplits split(const Dataset& ds, const SplitFractions& fractions, Rng& rng);

/// Header `x_0..x_{d+1},y,y_clean,a,group,is_noisy`, 17 significant digits.
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace brdro
