#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "brdro/models.hpp"
#include "brdro/synthdata.hpp"

namespace brdro {

/// Per-example adversary weights over a training set, each in [0, 1].
struct WeightTable {
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  double operator[](std::size_t i) const { return weights[i]; }
};

struct GroupMetrics {
  std::map<int, double> accuracy;  // nonempty groups only
  double average = 0.0;            // example-weighted
  double worst = 0.0;              // min over nonempty groups
  std::array<std::size_t, kNumGroups> sizes{};
};

/// Accuracy against y_clean. Throws InputError on an empty dataset.
GroupMetrics group_metrics(const LearnerParams& learner, const Dataset& ds);

/// Same, from precomputed predictions in {-1, +1}.
GroupMetrics group_metrics_from_predictions(const std::vector<int>& predictions, const Dataset& ds);

/// Indices of the ceil(top_frac * n) largest values; ties go to the lower index.
std::vector<std::size_t> top_fraction_indices(const std::vector<double>& values, double top_frac);

struct PRPoint {
  double precision = 0.0;
  /// Empty when the dataset has no minority example.
  std::optional<double> recall;
  double top_frac = 0.0;
  int epoch = 0;
  std::size_t hits = 0;
  std::size_t predicted = 0;
  std::size_t minority = 0;
};

/// Precision/recall of the top-weighted set against the true minority (a != y_clean).
PRPoint minority_pr(const WeightTable& weights, const Dataset& ds, double top_frac, int epoch = 0);

/// Fraction of the top-weighted set that carries a flipped label.
double noisy_capture(const WeightTable& weights, const Dataset& ds, double top_frac);

struct FeatureAlignment {
  double core_weight_abs = 0.0;
  double spu_weight_abs = 0.0;
  double noise_block_norm = 0.0;
};

/// |w_core|, |w_spu|, ||w_noise||_2 of a linear learner; UsageError otherwise.
FeatureAlignment feature_alignment(const LearnerParams& learner);

/// Header `epoch,precision,recall`.
void write_pr_csv(const std::vector<PRPoint>& points, const std::filesystem::path& path);

}  // namespace brdro
