#pragma once

// Trainers: ERM, CVaR DRO, bitrate-constrained DRO, oracle Group DRO and JTT.
// All trainers share one weighted minibatch SGD step, so methods whose
// weights collapse to a constant reproduce the ERM trajectory bit for bit.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "brdro/metrics.hpp"
#include "brdro/models.hpp"
#include "brdro/synthdata.hpp"

namespace brdro {

enum class Method { erm, cvar, brdro, groupdro, jtt };

const char* to_string(Method method);
Method parse_method(std::string_view name);
AdversaryKind parse_adversary_kind(std::string_view name);
LearnerKind parse_learner_kind(std::string_view name);

struct TrainConfig {
  Method method = Method::erm;
  int epochs = 60;
  int batch_size = 64;
  double lr_learner = 0.05;
  double lr_adversary = 0.01;
  /// CVaR level in (0, 1].
  double alpha0 = 0.1;
  /// eta is the loss quantile that leaves this fraction of the batch above it.
  double eta_top_frac = 0.05;
  double beta_vib = 0.1;
  double beta_l2 = 0.01;
  double beta_l1 = 0.01;
  AdversaryKind adversary_kind = AdversaryKind::linear_l2;
  double groupdro_step = 1.0;
  int jtt_id_epochs = 2;
  double jtt_lambda_up = 5.0;
  double jtt_l2_reg = 0.05;
  double weight_floor = 0.05;
  std::uint64_t seed = 0;

  LearnerKind learner_kind = LearnerKind::linear;
  int hidden_dim = 32;
  double l2_reg = 0.0;
  int latent_dim = 8;
  double init_std = 0.01;
  double adversary_init_std = 0.01;

  /// Throws InputError naming the first invalid field used by `method`.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::array<double, kNumGroups> group_accuracy{};  // NaN for groups absent from the eval set
  double average_accuracy = 0.0;
  double worst_group_accuracy = 0.0;
  double weight_minority = 0.0;
  double weight_majority = 0.0;
  double weight_noisy = 0.0;
  double mean_kl = 0.0;
  double penalty = 0.0;
};

struct TrainReport {
  Method method = Method::erm;
  std::vector<EpochRecord> history;
  LearnerParams learner;
  std::optional<AdversaryParams> adversary;
  WeightTable weights;
  /// Weight table in effect at the end of each epoch.
  std::vector<std::vector<double>> weight_history;
  /// JTT: training indices misclassified by the identification model.
  std::vector<std::size_t> error_set;
  /// Group DRO: final distribution over groups.
  std::array<double, kNumGroups> group_distribution{};
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
};

/// Independent deterministic stream `stream` derived from `seed`.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

// ---- CVaR ---------------------------------------------------------------

/// (1/alpha0) * mean(max(l - eta, 0)) + eta
double cvar_dual_value(std::span<const double> losses, double eta, double alpha0);

struct CvarValue {
  double value = 0.0;
  double eta_star = 0.0;
};

/// Exact minimum of cvar_dual_value over eta; eta_star is the
/// ceil(alpha0 n)-th largest loss.
CvarValue cvar_value(std::span<const double> losses, double alpha0);

/// 1 on the ceil(alpha0 n) largest losses (lower index wins ties), else 0.
WeightTable cvar_topfrac_weights(std::span<const double> losses, double alpha0);

/// Loss threshold leaving a `top_frac` share of `losses` at or above it:
/// the ceil(top_frac m)-th largest value.
double top_fraction_threshold(std::span<const double> losses, double top_frac);

// ---- adversary objective ------------------------------------------------

/// mean_i (losses_i - eta) weights_i - beta_vib mean(kls) - penalty
double adv_objective(std::span<const double> losses, std::span<const double> weights, std::span<const double> kls,
                     double penalty, double eta, double beta_vib);

// ---- bitrate-constrained DRO -------------------------------------------

struct BrdroState {
  LearnerParams learner;
  AdversaryParams adversary;
  /// Adversary output per training example as of its last round.
  std::vector<double> raw_weights;
  /// max(raw_weights, weight_floor); what the learner's loss is scaled by.
  std::vector<double> learner_weights;
  std::vector<double> kl;
  Rng noise_rng;
  double last_eta = 0.0;
  double last_objective = 0.0;
  double last_batch_loss = 0.0;
};

BrdroState init_brdro_state(const Dataset& train, const TrainConfig& cfg);

/// One alternating round on `batch`: learner descent on the weight-scaled
/// loss, adversary ascent on adv_objective with eta from the batch losses
/// (gradient step on the data terms, proximal step on the penalty),
/// then refreshed weights for the batch. Both players read the pre-round
/// learner. Throws TrainingAborted on a non-finite loss or parameter.
void brdro_round(BrdroState& state, const Dataset& train, std::span<const std::size_t> batch,
                 const TrainConfig& cfg);

// ---- trainers -----------------------------------------------------------
// `eval` is scored after every epoch (empty: accuracies are NaN).

TrainReport train_erm(const Dataset& train, const Dataset& eval, const TrainConfig& cfg);
TrainReport train_cvar_dro(const Dataset& train, const Dataset& eval, const TrainConfig& cfg);
TrainReport train_brdro(const Dataset& train, const Dataset& eval, const TrainConfig& cfg);
TrainReport train_groupdro(const Dataset& train, const Dataset& eval, const TrainConfig& cfg);
TrainReport train_jtt(const Dataset& train, const Dataset& eval, const TrainConfig& cfg);

/// Dispatches on cfg.method.
TrainReport train(const Dataset& train, const Dataset& eval, const TrainConfig& cfg);

/// Per-example logistic loss of `learner` on `ds` (observed labels).
std::vector<double> example_losses(const LearnerParams& learner, const Dataset& ds);

// ---- serialization ------------------------------------------------------

inline constexpr const char* kHistoryHeader =
    "epoch,train_loss,acc_g0,acc_g1,acc_g2,acc_g3,avg_acc,worst_acc,"
    "weight_minority,weight_majority,weight_noisy,mean_kl,penalty";

/// One row per epoch, then a `#summary` line.
std::string history_csv(const TrainReport& report);
void write_history_csv(const TrainReport& report, const std::filesystem::path& path);

/// Header `index,weight,group,is_noisy`.
void write_weights_csv(const WeightTable& weights, const Dataset& ds, const std::filesystem::path& path);

}  // namespace brdro
