#pragma once

#include <functional>
#include <string>
#include <vector>

#include "brdro/diffcore.hpp"
#include "brdro/param_tree.hpp"

namespace brdro {

inline constexpr double kFiniteDiffEps = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;

using ScalarFn = std::function<double(const ParamTree&)>;
using GradientFn = std::function<ParamTree(const ParamTree&)>;

/// Central differences per coordinate; the difference quotient is formed in
/// long double. Throws OracleError naming the coordinate if f is not finite.
ParamTree finite_diff_grad(const ScalarFn& f, const ParamTree& params, double eps = kFiniteDiffEps);

/// A differentiable function with its analytic gradient, evaluated around a
/// reference point.
struct GradBundle {
  std::string name;
  ScalarFn value;
  GradientFn gradient;
  ParamTree params;
};

struct GradCheckReport {
  std::string bundle;
  std::vector<std::pair<std::string, double>> entry_max_rel_error;
  double max_rel_error = 0.0;
  int probe_count = 0;

  bool passed(double tolerance = kGradCheckTolerance) const { return max_rel_error < tolerance; }
  /// Largest error of one entry; throws InputError for an unknown name.
  double entry_error(const std::string& name) const;
};

struct GradCheckOptions {
  int probes = 100;
  /// Each probe perturbs every coordinate by N(0, probe_scale^2).
  double probe_scale = 0.5;
  double eps = kFiniteDiffEps;
  /// |analytic - numeric| / max(|analytic|, |numeric|, floor)
  double denominator_floor = 1e-6;
};

double relative_error(double analytic, double numeric, double floor);

/// Compares analytic and finite-difference gradients at random probes drawn
/// around `params`.
GradCheckReport grad_check(const GradBundle& bundle, const ParamTree& params, Rng& rng,
                           const GradCheckOptions& options = {});
/// Probes around the bundle's own reference point.
GradCheckReport grad_check(const GradBundle& bundle, Rng& rng, const GradCheckOptions& options = {});

}  // namespace brdro
