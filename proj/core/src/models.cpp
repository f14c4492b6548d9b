#include "brdro/models.hpp"

#include <cmath>
#include <string>

#include "brdro/errors.hpp"

namespace brdro {
namespace {

void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw InputError(std::string(what) + ": dimension mismatch, got " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }
}

Eigen::VectorXd relu(const Eigen::VectorXd& v) { return v.cwiseMax(0.0); }

Eigen::VectorXd gaussian_vector(Eigen::Index n, double std, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double std, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std);
  Eigen::MatrixXd m(rows, cols);
  // row-major fill order keeps the draw sequence independent of storage order
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

}  // namespace

// ---- learner ------------------------------------------------------------

LearnerParams LearnerParams::linear(Eigen::Index input_dim, double l2_reg) {
  LearnerParams p;
  p.kind = LearnerKind::linear;
  p.w = Eigen::VectorXd::Zero(input_dim);
  p.l2_reg = l2_reg;
  return p;
}

LearnerParams LearnerParams::mlp(Eigen::Index input_dim, Eigen::Index hidden_dim, double l2_reg) {
  LearnerParams p;
  p.kind = LearnerKind::mlp;
  p.hidden_w = Eigen::MatrixXd::Zero(hidden_dim, input_dim);
  p.hidden_b = Eigen::VectorXd::Zero(hidden_dim);
  p.out_w = Eigen::VectorXd::Zero(hidden_dim);
  p.l2_reg = l2_reg;
  return p;
}

Eigen::Index LearnerParams::input_dim() const {
  return kind == LearnerKind::linear ? w.size() : hidden_w.cols();
}

Eigen::Index LearnerParams::feature_dim() const {
  return kind == LearnerKind::linear ? w.size() : hidden_w.rows();
}

LearnerParams LearnerParams::zeros_like() const {
  LearnerParams z = kind == LearnerKind::linear ? linear(w.size(), l2_reg)
                                                : mlp(hidden_w.cols(), hidden_w.rows(), l2_reg);
  return z;
}

bool LearnerParams::all_finite() const {
  if (kind == LearnerKind::linear) {
    return w.allFinite() && std::isfinite(b);
  }
  return hidden_w.allFinite() && hidden_b.allFinite() && out_w.allFinite() && std::isfinite(out_b);
}

LearnerParams init_learner(LearnerKind kind, Eigen::Index input_dim, Eigen::Index hidden_dim, double l2_reg,
                           double init_std, Rng& rng) {
  if (kind == LearnerKind::linear) {
    LearnerParams p = LearnerParams::linear(input_dim, l2_reg);
    p.w = gaussian_vector(input_dim, init_std, rng);
    return p;
  }
  LearnerParams p = LearnerParams::mlp(input_dim, hidden_dim, l2_reg);
  p.hidden_w = gaussian_matrix(hidden_dim, input_dim, init_std, rng);
  p.out_w = gaussian_vector(hidden_dim, init_std, rng);
  return p;
}

double learner_margin(const LearnerParams& p, const Eigen::VectorXd& x) {
  require_dim(x.size(), p.input_dim(), "learner_margin");
  if (p.kind == LearnerKind::linear) {
    return p.w.dot(x) + p.b;
  }
  return p.out_w.dot(relu(p.hidden_w * x + p.hidden_b)) + p.out_b;
}

FeatureView learner_features(const LearnerParams& p, const Eigen::VectorXd& x) {
  require_dim(x.size(), p.input_dim(), "learner_features");
  if (p.kind == LearnerKind::linear) {
    return {x, FeatureSource::raw_input};
  }
  return {relu(p.hidden_w * x + p.hidden_b), FeatureSource::learner_hidden};
}

void accumulate_margin_grad(const LearnerParams& p, const Eigen::VectorXd& x, double d_margin,
                            LearnerParams& grad) {
  require_dim(x.size(), p.input_dim(), "accumulate_margin_grad");
  if (p.kind == LearnerKind::linear) {
    grad.w.noalias() += d_margin * x;
    grad.b += d_margin;
    return;
  }
  const Eigen::VectorXd pre = p.hidden_w * x + p.hidden_b;
  const Eigen::VectorXd hidden = relu(pre);
  grad.out_w.noalias() += d_margin * hidden;
  grad.out_b += d_margin;
  Eigen::VectorXd d_hidden = d_margin * p.out_w;
  for (Eigen::Index j = 0; j < pre.size(); ++j) {
    if (pre[j] <= 0.0) d_hidden[j] = 0.0;
  }
  grad.hidden_w.noalias() += d_hidden * x.transpose();
  grad.hidden_b += d_hidden;
}

double learner_regularizer(const LearnerParams& p) {
  if (p.l2_reg == 0.0) return 0.0;
  if (p.kind == LearnerKind::linear) {
    return p.l2_reg * p.w.squaredNorm();
  }
  return p.l2_reg * (p.hidden_w.squaredNorm() + p.out_w.squaredNorm());
}

void accumulate_regularizer_grad(const LearnerParams& p, LearnerParams& grad) {
  if (p.l2_reg == 0.0) return;
  if (p.kind == LearnerKind::linear) {
    grad.w.noalias() += 2.0 * p.l2_reg * p.w;
    return;
  }
  grad.hidden_w.noalias() += 2.0 * p.l2_reg * p.hidden_w;
  grad.out_w.noalias() += 2.0 * p.l2_reg * p.out_w;
}

void axpy(double scale, const LearnerParams& d, LearnerParams& p) {
  if (p.kind == LearnerKind::linear) {
    p.w.noalias() += scale * d.w;
    p.b += scale * d.b;
    return;
  }
  p.hidden_w.noalias() += scale * d.hidden_w;
  p.hidden_b.noalias() += scale * d.hidden_b;
  p.out_w.noalias() += scale * d.out_w;
  p.out_b += scale * d.out_b;
}

// ---- adversary ----------------------------------------------------------

AdversaryParams AdversaryParams::linear(AdversaryKind kind, Eigen::Index feature_dim, double beta) {
  if (kind == AdversaryKind::vib) {
    throw UsageError("AdversaryParams::linear called with the vib kind");
  }
  if (beta < 0.0) throw InputError("adversary penalty strength must be nonnegative");
  AdversaryParams p;
  p.kind = kind;
  for (auto& h : p.heads) h.w = Eigen::VectorXd::Zero(feature_dim);
  p.beta = beta;
  return p;
}

AdversaryParams AdversaryParams::vib(Eigen::Index feature_dim, int latent_dim, double beta_vib) {
  if (latent_dim < 1) throw InputError("vib adversary needs latent_dim >= 1");
  if (beta_vib < 0.0) throw InputError("beta_vib must be nonnegative");
  AdversaryParams p;
  p.kind = AdversaryKind::vib;
  p.latent_dim = latent_dim;
  p.enc_w = Eigen::MatrixXd::Zero(2 * latent_dim, feature_dim);
  p.enc_b = Eigen::VectorXd::Zero(2 * latent_dim);
  for (auto& h : p.heads) h.w = Eigen::VectorXd::Zero(latent_dim);
  p.beta_vib = beta_vib;
  return p;
}

Eigen::Index AdversaryParams::feature_dim() const {
  return kind == AdversaryKind::vib ? enc_w.cols() : heads[0].w.size();
}

AdversaryParams AdversaryParams::zeros_like() const {
  return kind == AdversaryKind::vib ? vib(enc_w.cols(), latent_dim, beta_vib) : linear(kind, heads[0].w.size(), beta);
}

bool AdversaryParams::all_finite() const {
  for (const auto& h : heads) {
    if (!h.w.allFinite() || !std::isfinite(h.b)) return false;
  }
  return kind != AdversaryKind::vib || (enc_w.allFinite() && enc_b.allFinite());
}

AdversaryParams init_adversary(AdversaryKind kind, Eigen::Index feature_dim, int latent_dim, double beta,
                               double beta_vib, double init_std, Rng& rng) {
  if (kind == AdversaryKind::vib) {
    AdversaryParams p = AdversaryParams::vib(feature_dim, latent_dim, beta_vib);
    p.enc_w = gaussian_matrix(2 * latent_dim, feature_dim, init_std, rng);
    for (auto& h : p.heads) h.w = gaussian_vector(latent_dim, init_std, rng);
    return p;
  }
  AdversaryParams p = AdversaryParams::linear(kind, feature_dim, beta);
  for (auto& h : p.heads) h.w = gaussian_vector(feature_dim, init_std, rng);
  return p;
}

namespace {

void require_label(int label) {
  if (label != 1 && label != -1) throw InputError("adversary: label must be -1 or +1");
}

struct VibActivations {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
  Eigen::VectorXd z;
};

VibActivations vib_encode(const AdversaryParams& p, const Eigen::VectorXd& f, const Eigen::VectorXd& noise) {
  const Eigen::VectorXd u = p.enc_w * f + p.enc_b;
  VibActivations a;
  a.mu = u.head(p.latent_dim);
  a.logvar = u.tail(p.latent_dim);
  a.z = reparam_transform(a.mu, a.logvar, noise);
  return a;
}

}  // namespace

AdversaryOutput adversary_forward(const AdversaryParams& p, const Eigen::VectorXd& f, int label,
                                  const Eigen::VectorXd& noise) {
  require_label(label);
  require_dim(f.size(), p.feature_dim(), "adversary_forward");
  const AffineHead& head = p.heads[head_index(label)];
  if (p.kind != AdversaryKind::vib) {
    return {sigmoid(head.w.dot(f) + head.b), 0.0};
  }
  require_dim(noise.size(), p.latent_dim, "adversary_forward noise");
  const VibActivations a = vib_encode(p, f, noise);
  return {sigmoid(head.w.dot(a.z) + head.b), gaussian_kl(a.mu, a.logvar)};
}

AdversaryOutput adversary_weight(const AdversaryParams& p, const FeatureView& features, int label, Rng* rng) {
  if (p.kind != AdversaryKind::vib) {
    return adversary_forward(p, features.values, label, Eigen::VectorXd());
  }
  if (rng == nullptr) {
    throw UsageError("adversary_weight: the vib adversary requires a random generator");
  }
  require_dim(features.values.size(), p.feature_dim(), "adversary_weight");
  return adversary_forward(p, features.values, label, standard_normal(p.latent_dim, *rng));
}

void accumulate_adversary_grad(const AdversaryParams& p, const Eigen::VectorXd& f, int label,
                               const Eigen::VectorXd& noise, double d_weight, double d_kl, AdversaryParams& grad) {
  require_label(label);
  require_dim(f.size(), p.feature_dim(), "accumulate_adversary_grad");
  const std::size_t k = head_index(label);
  const AffineHead& head = p.heads[k];
  AffineHead& ghead = grad.heads[k];
  if (p.kind != AdversaryKind::vib) {
    const double ds = d_weight * sigmoid_grad(head.w.dot(f) + head.b);
    ghead.w.noalias() += ds * f;
    ghead.b += ds;
    return;
  }
  const VibActivations a = vib_encode(p, f, noise);
  const double ds = d_weight * sigmoid_grad(head.w.dot(a.z) + head.b);
  ghead.w.noalias() += ds * a.z;
  ghead.b += ds;
  const ReparamGrad through_z = reparam_backward(a.logvar, noise, ds * head.w);
  Eigen::VectorXd du(2 * p.latent_dim);
  du.head(p.latent_dim) = through_z.mu;
  du.tail(p.latent_dim) = through_z.logvar;
  if (d_kl != 0.0) {
    const GaussianKlGrad kl = gaussian_kl_grad(a.mu, a.logvar);
    du.head(p.latent_dim) += d_kl * kl.mu;
    du.tail(p.latent_dim) += d_kl * kl.logvar;
  }
  grad.enc_w.noalias() += du * f.transpose();
  grad.enc_b += du;
}

double adversary_penalty(const AdversaryParams& p) {
  double sum = 0.0;
  for (const auto& h : p.heads) {
    if (p.kind == AdversaryKind::linear_l2) sum += h.w.squaredNorm() + h.b * h.b;
    if (p.kind == AdversaryKind::linear_l1) sum += h.w.lpNorm<1>() + std::abs(h.b);
  }
  return p.beta * sum;
}

void accumulate_penalty_grad(const AdversaryParams& p, double scale, AdversaryParams& grad) {
  auto sign = [](double v) { return double((v > 0.0) - (v < 0.0)); };
  for (std::size_t k = 0; k < 2; ++k) {
    const AffineHead& h = p.heads[k];
    if (p.kind == AdversaryKind::linear_l2) {
      grad.heads[k].w.noalias() += scale * 2.0 * p.beta * h.w;
      grad.heads[k].b += scale * 2.0 * p.beta * h.b;
    } else if (p.kind == AdversaryKind::linear_l1) {
      grad.heads[k].w += scale * p.beta * h.w.unaryExpr(sign);
      grad.heads[k].b += scale * p.beta * sign(h.b);
    }
  }
}

void apply_penalty_prox(AdversaryParams& p, double step) {
  if (step < 0.0) throw InputError("apply_penalty_prox: step must be nonnegative");
  const double t = step * p.beta;
  auto shrink = [t](double v) { return v > t ? v - t : (v < -t ? v + t : 0.0); };
  for (auto& h : p.heads) {
    if (p.kind == AdversaryKind::linear_l2) {
      h.w /= 1.0 + 2.0 * t;
      h.b /= 1.0 + 2.0 * t;
    } else if (p.kind == AdversaryKind::linear_l1) {
      h.w = h.w.unaryExpr(shrink);
      h.b = shrink(h.b);
    }
  }
}

void axpy(double scale, const AdversaryParams& d, AdversaryParams& p) {
  for (std::size_t k = 0; k < 2; ++k) {
    p.heads[k].w.noalias() += scale * d.heads[k].w;
    p.heads[k].b += scale * d.heads[k].b;
  }
  if (p.kind == AdversaryKind::vib) {
    p.enc_w.noalias() += scale * d.enc_w;
    p.enc_b.noalias() += scale * d.enc_b;
  }
}

const char* to_string(LearnerKind kind) { return kind == LearnerKind::linear ? "linear" : "mlp"; }

const char* to_string(AdversaryKind kind) {
  switch (kind) {
    case AdversaryKind::linear_l2:
      return "linear_l2";
    case AdversaryKind::linear_l1:
      return "linear_l1";
    case AdversaryKind::vib:
      return "vib";
  }
  return "?";
}

}  // namespace brdro
