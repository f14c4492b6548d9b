#pragma once

// Online two-player solver for CVaR DRO over a finite family of candidate
// groups. The learner runs projected online gradient descent on (h, eta);
// the adversary plays follow-the-regularized-leader with a negative-entropy
// regularizer, whose closed form is a softmax of cumulative payoffs.

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "brdro/diffcore.hpp"
#include "brdro/synthdata.hpp"

namespace brdro {

struct FiniteGame {
  Eigen::MatrixXd features;  // n x p, one row per example
  Eigen::VectorXd labels;    // +-1
  std::vector<std::vector<std::size_t>> groups;
  double l2_reg = 0.05;
  double alpha0 = 0.5;
  /// FTRL temperature c.
  double temperature = 1.0;
  int horizon = 1000;

  std::size_t group_count() const { return groups.size(); }
  Eigen::Index dim() const { return features.cols(); }
  /// Throws InputError: K >= 2, groups nonempty and in range, c > 0, l2_reg > 0.
  void validate() const;
};

/// c = sqrt(T / log K).
double default_temperature(int horizon, std::size_t group_count);

/// Threshold groups {sign(x_spu)} x {label} (empty ones skipped) followed by
/// random index sets of size n/4 until `group_count` groups exist.
std::vector<std::vector<std::size_t>> candidate_groups(const Dataset& ds, std::size_t group_count, Rng& rng);

FiniteGame make_game(const Dataset& ds, std::size_t group_count, double l2_reg, double alpha0, int horizon,
                     Rng& rng);

struct GamePlayer {
  Eigen::VectorXd w;
  double b = 0.0;
  double eta = 0.0;
};

/// Per-example logistic loss plus l2_reg ||w||^2.
Eigen::VectorXd game_losses(const FiniteGame& game, const GamePlayer& h);

/// (1/alpha0) * mean_{i in G_k}(loss_i - eta) + eta
double payoff(const FiniteGame& game, const GamePlayer& h, std::size_t group);
std::vector<double> payoffs(const FiniteGame& game, const GamePlayer& h);

/// Softmax of cum_payoffs / c with max subtraction.
std::vector<double> ftrl_update(std::span<const double> cum_payoffs, double temperature);

/// E_{k ~ delta} payoff(h, eta, k) and its gradient in (w, b, eta).
struct MixedObjective {
  double value = 0.0;
  GamePlayer grad;
};
MixedObjective mixed_objective(const FiniteGame& game, const GamePlayer& h, std::span<const double> delta);

/// One projected gradient step on the mixed objective; eta is clamped to
/// [0, eta_max].
void learner_step(const FiniteGame& game, GamePlayer& h, std::span<const double> delta, double lr, double eta_max);

struct InnerSolveOptions {
  double grad_tol = 1e-8;
  int max_iterations = 2'000'000;
};

struct InnerSolution {
  GamePlayer argmin;
  double value = 0.0;
  int iterations = 0;
};

/// inf over (h, eta in [0, eta_max]) of the mixed objective, by full-batch
/// projected gradient descent with step 1 / L. Throws ConvergenceError at
/// the iteration cap.
InnerSolution solve_inner(const FiniteGame& game, std::span<const double> delta, double eta_max,
                          const GamePlayer& start, const InnerSolveOptions& options = {});

/// sup_k payoff(h_avg, k) - inf_h E_{delta_avg} payoff(h, k).
double duality_gap(const FiniteGame& game, const GamePlayer& h_avg, std::span<const double> delta_avg,
                   double eta_max, const InnerSolveOptions& options = {});

struct GameStep {
  int t = 0;
  double eta = 0.0;
  double w_norm = 0.0;
  double b = 0.0;
  std::vector<double> delta;
};

struct GameCheckpoint {
  int t = 0;
  double gap = 0.0;
  GamePlayer average;
  std::vector<double> average_delta;
};

struct GameTrace {
  std::vector<GameStep> steps;
  std::vector<GameCheckpoint> checkpoints;
  GamePlayer average;
  std::vector<double> average_delta;
  double eta_max = 0.0;
  double temperature = 0.0;
};

/// Runs game.horizon rounds: the adversary plays FTRL on the cumulative
/// payoffs of earlier rounds, the learner takes a gradient step against it.
/// The duality gap of the running averages is recorded at each checkpoint
/// (values outside [1, horizon] are ignored).
GameTrace play_game(const FiniteGame& game, double lr, std::span<const int> checkpoints, const GamePlayer& init);

/// Learner start with w ~ N(0, init_std^2), b = 0, eta = 0.
GamePlayer random_player(Eigen::Index dim, double init_std, Rng& rng);

/// Header `step,eta,gap,delta_0..delta_{K-1}`; gap is empty off checkpoints.
void write_game_trace_csv(const GameTrace& trace, const std::filesystem::path& path);

}  // namespace brdro
