#pragma once

// Experiment driver: runs the (sweep value x seed x method) grid, the game
// rate check and the gradient check, writing every artifact atomically.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "brdro/config.hpp"
#include "brdro/dro.hpp"
#include "brdro/game.hpp"

namespace brdro {

struct SummaryRow {
  Method method = Method::erm;
  std::optional<double> sweep_value;
  std::uint64_t seed = 0;
  double average_accuracy = 0.0;
  double worst_group_accuracy = 0.0;
  double minority_precision = 0.0;
  double noisy_capture = 0.0;
  /// NaN for non-linear learners.
  double core_weight_abs = 0.0;
  double spu_weight_abs = 0.0;
  /// Final-epoch mean KL of the vib adversary (0 otherwise).
  double mean_kl = 0.0;
  /// JTT: flipped-label share of the error set; NaN for other methods.
  double error_set_noisy = 0.0;
  /// Empty on success, the abort message otherwise.
  std::string error;
};

struct MedianRow {
  Method method = Method::erm;
  std::optional<double> sweep_value;
  std::size_t runs = 0;
  double average_accuracy = 0.0;
  double worst_group_accuracy = 0.0;
  double minority_precision = 0.0;
  double noisy_capture = 0.0;
  double core_weight_abs = 0.0;
  double spu_weight_abs = 0.0;
  double mean_kl = 0.0;
  double error_set_noisy = 0.0;
};

struct ExperimentResult {
  /// Ordered by sweep value, then seed, then method as configured.
  std::vector<SummaryRow> rows;
  std::vector<MedianRow> medians;
  std::size_t aborted = 0;
};

inline constexpr const char* kSummaryHeader =
    "method,sweep_value,seed,avg_acc,worst_acc,minority_precision,noisy_capture,core_weight_abs,"
    "spu_weight_abs,mean_kl,error_set_noisy,status";
inline constexpr const char* kMedianHeader =
    "method,sweep_value,runs,avg_acc,worst_acc,minority_precision,noisy_capture,core_weight_abs,"
    "spu_weight_abs,mean_kl,error_set_noisy";

struct CellData {
  Dataset train;
  Dataset test;
};

/// Clean data from cfg.data with the given seed, split, then label noise at
/// cfg.data.p_noise injected into the train split only.
CellData make_cell_data(const ExperimentConfig& cfg, std::uint64_t seed);

/// cfg with the sweep parameter set to `value`.
ExperimentConfig apply_sweep(const ExperimentConfig& cfg, double value);

/// Runs the grid on up to `jobs` threads. Training aborts are recorded in
/// their row and the run continues. When `write` is set the artifacts go to
/// cfg.out_dir: resolved.cfg, summary.csv, summary_median.csv and
/// runs/<cell>/<method>/{history,weights,pr}.csv plus model.ckpt.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs = 1, bool write = true);

/// Median of each metric across seeds per (method, sweep value); aborted
/// rows are excluded.
std::vector<MedianRow> median_rows(const std::vector<SummaryRow>& rows);

std::string summary_csv(const std::vector<SummaryRow>& rows);
std::string median_csv(const std::vector<MedianRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

// ---- game rate check ----------------------------------------------------

enum class Verdict { pass, fail, insufficient_horizon };
const char* to_string(Verdict v);

struct GameRun {
  int horizon = 0;
  std::uint64_t init_seed = 0;
  double gap = 0.0;
  /// gap * sqrt(horizon)
  double scaled_gap = 0.0;
  GamePlayer average;
  std::vector<GameCheckpoint> checkpoints;
};

struct GameReport {
  Verdict verdict = Verdict::pass;
  std::vector<GameRun> runs;
  /// Largest max/min ratio of scaled gaps across checked horizons, per init.
  double band_ratio = 1.0;
  /// Sup-norm distance of averaged (w, b) across inits at the longest horizon.
  double uniqueness_diff = 0.0;
  /// Every checkpoint past T/10 within 5% of its predecessor or lower.
  bool monotone = true;
  std::string message;
};

/// One play_game per (horizon, init seed) with lr = lr_scale / sqrt(T) and
/// c = sqrt(T / log K); checkpoints at T/8, T/4, T/2 and T. With `write`,
/// each trace goes to game/trace_T<T>_init<seed>.csv next to game/summary.csv
/// and game/verdict.txt.
GameReport run_game(const ExperimentConfig& cfg, bool write = true);

/// Verdict from finished runs; exposed for testing.
GameReport judge_game(std::vector<GameRun> runs, const GameSettings& settings);

}  // namespace brdro
