#pragma once

// Scalar functions, losses and the stochastic Gaussian layer used by every
// trainer, each with an analytic derivative. Gradients are validated against
// the central-difference oracle in gradcheck.hpp.

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace brdro {

using Rng = std::mt19937_64;

/// log-variance is clamped to this range before exponentiation.
inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

/// log(1 + exp(-label * margin)), label in {-1, +1}.
double logistic_loss(double margin, int label);
/// d logistic_loss / d margin.
double logistic_loss_grad(double margin, int label);

double sigmoid(double t);
/// sigma(t) * (1 - sigma(t)).
double sigmoid_grad(double t);

double clamp_logvar(double logvar);

/// KL(N(mu, diag(exp(logvar))) || N(0, I)) with clamped log-variance.
double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar);

struct GaussianKlGrad {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;  // zero where the clamp is active
};
GaussianKlGrad gaussian_kl_grad(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar);

Eigen::VectorXd standard_normal(Eigen::Index dim, Rng& rng);

/// mu + exp(logvar / 2) * noise for a fixed draw `noise`. A logvar of -inf
/// gives zero spread; finite values are clamped.
Eigen::VectorXd reparam_transform(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar,
                                  const Eigen::VectorXd& noise);

/// Draws the noise from `rng` and applies reparam_transform.
Eigen::VectorXd reparam_sample(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar, Rng& rng);

struct ReparamGrad {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
};
/// Pulls an upstream gradient on z back to (mu, logvar) with the noise held fixed.
ReparamGrad reparam_backward(const Eigen::VectorXd& logvar, const Eigen::VectorXd& noise,
                             const Eigen::VectorXd& upstream);

}  // namespace brdro
