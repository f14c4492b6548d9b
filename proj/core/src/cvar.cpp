#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "brdro/dro.hpp"
#include "brdro/errors.hpp"

namespace brdro {
namespace {

void require_alpha(double alpha0) {
  if (!(alpha0 > 0.0 && alpha0 <= 1.0)) {
    throw InputError("alpha0 must lie in (0, 1], got " + std::to_string(alpha0));
  }
}

void require_nonempty(std::span<const double> losses, const char* what) {
  if (losses.empty()) throw InputError(std::string(what) + ": empty loss vector");
}

std::size_t top_count(std::size_t n, double frac) {
  const auto k = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

}  // namespace

double cvar_dual_value(std::span<const double> losses, double eta, double alpha0) {
  require_alpha(alpha0);
  require_nonempty(losses, "cvar_dual_value");
  double excess = 0.0;
  for (double l : losses) excess += std::max(l - eta, 0.0);
  return excess / (alpha0 * static_cast<double>(losses.size())) + eta;
}

double top_fraction_threshold(std::span<const double> losses, double top_frac) {
  require_nonempty(losses, "top_fraction_threshold");
  if (!(top_frac > 0.0 && top_frac <= 1.0)) throw InputError("top fraction must lie in (0, 1]");
  std::vector<double> sorted(losses.begin(), losses.end());
  const std::size_t k = top_count(sorted.size(), top_frac);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(),
                   std::greater<>());
  return sorted[k - 1];
}

CvarValue cvar_value(std::span<const double> losses, double alpha0) {
  require_alpha(alpha0);
  require_nonempty(losses, "cvar_value");
  // The dual's slope in eta is 1 - #{l > eta} / (alpha0 n); it changes sign at
  // the ceil(alpha0 n)-th largest loss.
  const double eta = top_fraction_threshold(losses, alpha0);
  return {cvar_dual_value(losses, eta, alpha0), eta};
}

WeightTable cvar_topfrac_weights(std::span<const double> losses, double alpha0) {
  require_alpha(alpha0);
  require_nonempty(losses, "cvar_topfrac_weights");
  const std::size_t n = losses.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] > losses[b]; });
  WeightTable w{std::vector<double>(n, 0.0)};
  const std::size_t k = top_count(n, alpha0);
  for (std::size_t i = 0; i < k; ++i) w.weights[order[i]] = 1.0;
  return w;
}

double adv_objective(std::span<const double> losses, std::span<const double> weights, std::span<const double> kls,
                     double penalty, double eta, double beta_vib) {
  if (losses.size() != weights.size() || (!kls.empty() && kls.size() != losses.size())) {
    throw InputError("adv_objective: length mismatch");
  }
  if (losses.empty()) throw InputError("adv_objective: empty batch");
  const auto m = static_cast<double>(losses.size());
  double weighted = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) weighted += (losses[i] - eta) * weights[i];
  double kl_sum = 0.0;
  for (double k : kls) kl_sum += k;
  return weighted / m - beta_vib * kl_sum / m - penalty;
}

}  // namespace brdro
