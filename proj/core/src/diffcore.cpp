#include "brdro/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "brdro/errors.hpp"

namespace brdro {
namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw InputError(std::string(what) + ": non-finite input " + std::to_string(v));
  }
}

void require_label(int label) {
  if (label != 1 && label != -1) {
    throw InputError("label must be -1 or +1, got " + std::to_string(label));
  }
}

void require_same_dim(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size()) {
    throw InputError(std::string(what) + ": dimension mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
}

// log(1 + exp(t)) without overflow.
double softplus(double t) {
  if (t > 0.0) {
    return t + std::log1p(std::exp(-t));
  }
  return std::log1p(std::exp(t));
}

}  // namespace

double logistic_loss(double margin, int label) {
  require_finite(margin, "logistic_loss");
  require_label(label);
  return softplus(-static_cast<double>(label) * margin);
}

double logistic_loss_grad(double margin, int label) {
  require_finite(margin, "logistic_loss_grad");
  require_label(label);
  const double y = label;
  return -y * sigmoid(-y * margin);
}

double sigmoid(double t) {
  require_finite(t, "sigmoid");
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double sigmoid_grad(double t) {
  const double s = sigmoid(t);
  return s * (1.0 - s);
}

double clamp_logvar(double logvar) { return std::clamp(logvar, kLogvarMin, kLogvarMax); }

double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
  require_same_dim(mu, logvar, "gaussian_kl");
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    require_finite(mu[i], "gaussian_kl mu");
    require_finite(logvar[i], "gaussian_kl logvar");
    const double lv = clamp_logvar(logvar[i]);
    total += std::exp(lv) + mu[i] * mu[i] - 1.0 - lv;
  }
  return std::max(0.0, 0.5 * total);
}

GaussianKlGrad gaussian_kl_grad(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
  require_same_dim(mu, logvar, "gaussian_kl_grad");
  GaussianKlGrad g{mu, Eigen::VectorXd::Zero(logvar.size())};
  for (Eigen::Index i = 0; i < logvar.size(); ++i) {
    if (logvar[i] > kLogvarMin && logvar[i] < kLogvarMax) {
      g.logvar[i] = 0.5 * (std::exp(logvar[i]) - 1.0);
    }
  }
  return g;
}

Eigen::VectorXd standard_normal(Eigen::Index dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    out[i] = normal(rng);
  }
  return out;
}

namespace {

double reparam_scale(double logvar) {
  if (logvar == -std::numeric_limits<double>::infinity()) {
    return 0.0;
  }
  return std::exp(0.5 * clamp_logvar(logvar));
}

}  // namespace

Eigen::VectorXd reparam_transform(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar,
                                  const Eigen::VectorXd& noise) {
  require_same_dim(mu, logvar, "reparam_transform");
  require_same_dim(mu, noise, "reparam_transform");
  Eigen::VectorXd z(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    z[i] = mu[i] + reparam_scale(logvar[i]) * noise[i];
  }
  return z;
}

Eigen::VectorXd reparam_sample(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar, Rng& rng) {
  require_same_dim(mu, logvar, "reparam_sample");
  return reparam_transform(mu, logvar, standard_normal(mu.size(), rng));
}

ReparamGrad reparam_backward(const Eigen::VectorXd& logvar, const Eigen::VectorXd& noise,
                             const Eigen::VectorXd& upstream) {
  require_same_dim(logvar, noise, "reparam_backward");
  require_same_dim(logvar, upstream, "reparam_backward");
  ReparamGrad g{upstream, Eigen::VectorXd::Zero(logvar.size())};
  for (Eigen::Index i = 0; i < logvar.size(); ++i) {
    if (logvar[i] > kLogvarMin && logvar[i] < kLogvarMax) {
      g.logvar[i] = upstream[i] * noise[i] * 0.5 * std::exp(0.5 * logvar[i]);
    }
  }
  return g;
}

}  // namespace brdro
