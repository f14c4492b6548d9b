#pragma once

// Learner hypothesis class (linear or one-hidden-layer ReLU network) and the
// three capacity-constrained re-weighting adversaries. Every adversary has one
// head per label and maps (features, label) to a weight in [0, 1].

#include <array>
#include <filesystem>
#include <optional>
#include <span>

#include <Eigen/Core>

#include "brdro/diffcore.hpp"
#include "brdro/param_tree.hpp"

namespace brdro {

enum class LearnerKind { linear, mlp };
enum class AdversaryKind { linear_l2, linear_l1, vib };
enum class FeatureSource { raw_input, learner_hidden };

struct LearnerParams {
  LearnerKind kind = LearnerKind::linear;
  // linear
  Eigen::VectorXd w;
  double b = 0.0;
  // mlp: margin = out_w . relu(hidden_w x + hidden_b) + out_b
  Eigen::MatrixXd hidden_w;
  Eigen::VectorXd hidden_b;
  Eigen::VectorXd out_w;
  double out_b = 0.0;

  double l2_reg = 0.0;

  static LearnerParams linear(Eigen::Index input_dim, double l2_reg = 0.0);
  static LearnerParams mlp(Eigen::Index input_dim, Eigen::Index hidden_dim, double l2_reg = 0.0);

  Eigen::Index input_dim() const;
  /// Dimension of learner_features().
  Eigen::Index feature_dim() const;
  /// Same kind and shapes, all values zero; used as a gradient accumulator.
  LearnerParams zeros_like() const;
  bool all_finite() const;

  friend bool operator==(const LearnerParams&, const LearnerParams&) = default;
};

/// Weights ~ N(0, init_std^2), biases 0.
LearnerParams init_learner(LearnerKind kind, Eigen::Index input_dim, Eigen::Index hidden_dim,
                           double l2_reg, double init_std, Rng& rng);

double learner_margin(const LearnerParams& params, const Eigen::VectorXd& x);
inline int predict(const LearnerParams& params, const Eigen::VectorXd& x) {
  return learner_margin(params, x) >= 0.0 ? 1 : -1;
}

struct FeatureView {
  Eigen::VectorXd values;
  FeatureSource source = FeatureSource::raw_input;
};

/// Linear learners expose the raw input; mlp learners their hidden activations.
FeatureView learner_features(const LearnerParams& params, const Eigen::VectorXd& x);

/// grad += d_margin * d margin / d params.
void accumulate_margin_grad(const LearnerParams& params, const Eigen::VectorXd& x, double d_margin,
                            LearnerParams& grad);

/// l2_reg * (sum of squared non-bias weights).
double learner_regularizer(const LearnerParams& params);
void accumulate_regularizer_grad(const LearnerParams& params, LearnerParams& grad);

/// params += scale * direction
void axpy(double scale, const LearnerParams& direction, LearnerParams& params);

struct AffineHead {
  Eigen::VectorXd w;
  double b = 0.0;
  friend bool operator==(const AffineHead&, const AffineHead&) = default;
};

inline std::size_t head_index(int label) { return label > 0 ? 1 : 0; }

struct AdversaryParams {
  AdversaryKind kind = AdversaryKind::linear_l2;
  /// Linear heads for the linear kinds; per-label decoders for vib.
  std::array<AffineHead, 2> heads;
  /// vib encoder: rows [0, d_z) produce mu, rows [d_z, 2 d_z) the log-variance.
  Eigen::MatrixXd enc_w;
  Eigen::VectorXd enc_b;
  int latent_dim = 0;
  /// l2 / l1 strength for the linear kinds.
  double beta = 0.0;
  double beta_vib = 0.0;

  static AdversaryParams linear(AdversaryKind kind, Eigen::Index feature_dim, double beta);
  static AdversaryParams vib(Eigen::Index feature_dim, int latent_dim, double beta_vib);

  Eigen::Index feature_dim() const;
  /// Number of standard-normal draws one forward pass consumes.
  Eigen::Index noise_dim() const { return kind == AdversaryKind::vib ? latent_dim : 0; }
  AdversaryParams zeros_like() const;
  bool all_finite() const;

  friend bool operator==(const AdversaryParams&, const AdversaryParams&) = default;
};

AdversaryParams init_adversary(AdversaryKind kind, Eigen::Index feature_dim, int latent_dim, double beta,
                               double beta_vib, double init_std, Rng& rng);

struct AdversaryOutput {
  double weight = 0.5;
  double kl = 0.0;
};

/// Draws the reparameterization noise from `rng` for vib; `rng` may be null
/// for the linear kinds only (UsageError otherwise).
AdversaryOutput adversary_weight(const AdversaryParams& params, const FeatureView& features, int label,
                                 Rng* rng);

/// Forward pass with frozen noise (length noise_dim()).
AdversaryOutput adversary_forward(const AdversaryParams& params, const Eigen::VectorXd& features, int label,
                                  const Eigen::VectorXd& noise);

/// grad += d_weight * d weight / d params + d_kl * d kl / d params, noise frozen.
void accumulate_adversary_grad(const AdversaryParams& params, const Eigen::VectorXd& features, int label,
                               const Eigen::VectorXd& noise, double d_weight, double d_kl,
                               AdversaryParams& grad);

/// beta * ||theta||_2^2 (l2) or beta * ||theta||_1 (l1) over both heads,
/// biases included; 0 for vib.
double adversary_penalty(const AdversaryParams& params);
/// grad += scale * d penalty / d params (sub-gradient sign(0) = 0 for l1).
void accumulate_penalty_grad(const AdversaryParams& params, double scale, AdversaryParams& grad);
/// Proximal map of step * penalty: uniform shrinkage (l2) or soft
/// thresholding (l1). Stable for any beta. No-op for vib.
void apply_penalty_prox(AdversaryParams& params, double step);

void axpy(double scale, const AdversaryParams& direction, AdversaryParams& params);

// ---- flat parameter views and checkpoints ----

/// Trainable entries only (`learner.*`), hyperparameters excluded.
ParamTree to_param_tree(const LearnerParams& params);
/// Values from `tree`, kind and hyperparameters from `like`.
LearnerParams learner_from_tree(const ParamTree& tree, const LearnerParams& like);
/// Trainable entries only (`adversary.*`).
ParamTree to_param_tree(const AdversaryParams& params);
AdversaryParams adversary_from_tree(const ParamTree& tree, const AdversaryParams& like);

/// Merges trees whose entry names do not collide.
ParamTree merge_trees(const ParamTree& a, const ParamTree& b);

/// Trainable entries plus `meta.*` scalars (kinds, l2_reg, betas) so that a
/// checkpoint restores without a template.
ParamTree checkpoint_tree(const LearnerParams& learner, const AdversaryParams* adversary = nullptr);
LearnerParams learner_from_checkpoint(const ParamTree& tree);
std::optional<AdversaryParams> adversary_from_checkpoint(const ParamTree& tree);

inline constexpr const char* kCheckpointHeader = "brdro-checkpoint v1";

/// Header line, then one line per entry: `name rows cols v...` with
/// row-major values at 17 significant digits.
void save_checkpoint(const ParamTree& tree, const std::filesystem::path& path);
ParamTree load_checkpoint(const std::filesystem::path& path);

const char* to_string(LearnerKind kind);
const char* to_string(AdversaryKind kind);

}  // namespace brdro
