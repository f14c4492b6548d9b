#pragma once

#include <chrono>
#include <span>
#include <vector>

#include "brdro/dro.hpp"

namespace brdro::detail {

// Stream ids for make_rng; distinct trainers reuse the same ids so that
// equivalent configurations draw identical sequences.
inline constexpr std::uint64_t kLearnerInitStream = 1;
inline constexpr std::uint64_t kShuffleStream = 2;
inline constexpr std::uint64_t kAdversaryInitStream = 3;
inline constexpr std::uint64_t kNoiseStream = 4;
inline constexpr std::uint64_t kJttStageOneOffset = 100;

LearnerParams init_learner_for(const Dataset& train, const TrainConfig& cfg, std::uint64_t stream_offset = 0);

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng);

/// Weighted minibatch step: learner -= lr * (sum_i w_i grad l_i / sum_i w_i + grad reg).
/// Returns the unweighted mean batch loss; skips the step when sum_i w_i = 0.
double weighted_step(LearnerParams& learner, const Dataset& train, std::span<const std::size_t> batch,
                     std::span<const double> weights, double lr);

/// One pass over `order` in batches of cfg.batch_size with fixed per-example
/// weights (indexed by training index). Returns the mean batch loss.
double weighted_epoch(LearnerParams& learner, const Dataset& train, const std::vector<std::size_t>& order,
                      std::span<const double> weights, const TrainConfig& cfg);

EpochRecord make_record(int epoch, double train_loss, const LearnerParams& learner, const Dataset& train,
                        const Dataset& eval, std::span<const double> weights);

inline void push_epoch(TrainReport& report, const EpochRecord& record, const std::vector<double>& weights) {
  report.history.push_back(record);
  report.weight_history.push_back(weights);
}

void require_trainable(const Dataset& train, const TrainConfig& cfg, Method expected);

double seconds_since(std::chrono::steady_clock::time_point start);

}  // namespace brdro::detail
