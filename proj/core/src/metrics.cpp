#include "brdro/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "brdro/csv.hpp"
#include "brdro/errors.hpp"

namespace brdro {

GroupMetrics group_metrics_from_predictions(const std::vector<int>& predictions, const Dataset& ds) {
  if (ds.empty()) throw InputError("group_metrics: dataset has no examples");
  if (predictions.size() != ds.size()) throw InputError("group_metrics: prediction count mismatch");
  std::array<std::size_t, kNumGroups> correct{};
  GroupMetrics m;
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto g = static_cast<std::size_t>(ds[i].group);
    ++m.sizes[g];
    if (predictions[i] == ds[i].y_clean) {
      ++correct[g];
      ++total_correct;
    }
  }
  m.worst = 1.0;
  for (int k = 0; k < kNumGroups; ++k) {
    const auto g = static_cast<std::size_t>(k);
    if (m.sizes[g] == 0) continue;
    const double acc = static_cast<double>(correct[g]) / static_cast<double>(m.sizes[g]);
    m.accuracy[k] = acc;
    m.worst = std::min(m.worst, acc);
  }
  m.average = static_cast<double>(total_correct) / static_cast<double>(ds.size());
  return m;
}

GroupMetrics group_metrics(const LearnerParams& learner, const Dataset& ds) {
  if (ds.empty()) throw InputError("group_metrics: dataset has no examples");
  std::vector<int> predictions(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    predictions[i] = predict(learner, ds[i].x);
  }
  return group_metrics_from_predictions(predictions, ds);
}

std::vector<std::size_t> top_fraction_indices(const std::vector<double>& values, double top_frac) {
  if (!(top_frac > 0.0 && top_frac <= 1.0)) throw InputError("top fraction must lie in (0, 1]");
  const std::size_t n = values.size();
  const auto k = std::min(n, static_cast<std::size_t>(std::ceil(top_frac * static_cast<double>(n) - 1e-9)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

namespace {

void require_table(const WeightTable& w, const Dataset& ds, double top_frac) {
  if (w.size() != ds.size()) throw InputError("weight table and dataset sizes differ");
  if (!(top_frac > 0.0 && top_frac < 1.0)) throw InputError("top_frac must lie in (0, 1)");
}

}  // namespace

PRPoint minority_pr(const WeightTable& weights, const Dataset& ds, double top_frac, int epoch) {
  require_table(weights, ds, top_frac);
  PRPoint p;
  p.top_frac = top_frac;
  p.epoch = epoch;
  const auto picked = top_fraction_indices(weights.weights, top_frac);
  p.predicted = picked.size();
  for (std::size_t i : picked) {
    if (ds[i].is_minority()) ++p.hits;
  }
  for (const auto& e : ds.examples()) {
    if (e.is_minority()) ++p.minority;
  }
  p.precision = p.predicted == 0 ? 0.0 : static_cast<double>(p.hits) / static_cast<double>(p.predicted);
  if (p.minority > 0) {
    p.recall = static_cast<double>(p.hits) / static_cast<double>(p.minority);
  }
  return p;
}

double noisy_capture(const WeightTable& weights, const Dataset& ds, double top_frac) {
  require_table(weights, ds, top_frac);
  const auto picked = top_fraction_indices(weights.weights, top_frac);
  if (picked.empty()) return 0.0;
  const auto noisy = std::count_if(picked.begin(), picked.end(), [&](std::size_t i) { return ds[i].is_noisy; });
  return static_cast<double>(noisy) / static_cast<double>(picked.size());
}

FeatureAlignment feature_alignment(const LearnerParams& learner) {
  if (learner.kind != LearnerKind::linear) {
    throw UsageError("feature_alignment: only defined for linear learners");
  }
  if (learner.w.size() < kNoiseOffset) {
    throw InputError("feature_alignment: learner lacks the core and spurious coordinates");
  }
  return {std::abs(learner.w[kCoreIndex]), std::abs(learner.w[kSpuriousIndex]),
          learner.w.tail(learner.w.size() - kNoiseOffset).norm()};
}

void write_pr_csv(const std::vector<PRPoint>& points, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,precision,recall\n";
  for (const auto& p : points) {
    out << p.epoch << ',' << format_double(p.precision) << ',' << (p.recall ? format_double(*p.recall) : "nan")
        << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace brdro
