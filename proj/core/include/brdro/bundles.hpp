#pragma once

// The differentiable functions the gradient checker covers, each built on a
// small fixed fixture so a full check runs in well under a second.

#include <cstdint>
#include <vector>

#include "brdro/gradcheck.hpp"

namespace brdro {

/// One bundle per differentiable component: logistic loss, Gaussian KL,
/// reparameterization, linear and mlp learner losses, the three adversary
/// objectives with frozen noise, and the game payoff and mixed objective.
std::vector<GradBundle> default_bundles(std::uint64_t seed = 0);

struct GradcheckSummary {
  std::vector<GradCheckReport> reports;
  bool passed = true;
};

GradcheckSummary run_gradcheck(const std::vector<GradBundle>& bundles, std::uint64_t seed = 0,
                               const GradCheckOptions& options = {});

/// Header `bundle,max_rel_error,probes,passed`.
std::string gradcheck_csv(const GradcheckSummary& summary);

}  // namespace brdro
