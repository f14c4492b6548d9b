#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "brdro/csv.hpp"
#include "brdro/dro.hpp"
#include "brdro/errors.hpp"
#include "trainer_common.hpp"

namespace brdro {

const char* to_string(Method method) {
  switch (method) {
    case Method::erm:
      return "erm";
    case Method::cvar:
      return "cvar";
    case Method::brdro:
      return "brdro";
    case Method::groupdro:
      return "groupdro";
    case Method::jtt:
      return "jtt";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::erm, Method::cvar, Method::brdro, Method::groupdro, Method::jtt}) {
    if (name == to_string(m)) return m;
  }
  throw InputError("unknown method '" + std::string(name) + "'");
}

AdversaryKind parse_adversary_kind(std::string_view name) {
  for (AdversaryKind k : {AdversaryKind::linear_l2, AdversaryKind::linear_l1, AdversaryKind::vib}) {
    if (name == to_string(k)) return k;
  }
  throw InputError("unknown adversary kind '" + std::string(name) + "'");
}

LearnerKind parse_learner_kind(std::string_view name) {
  if (name == "linear") return LearnerKind::linear;
  if (name == "mlp") return LearnerKind::mlp;
  throw InputError("unknown learner kind '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("TrainConfig: " + msg); };
  if (epochs <= 0) fail("epochs must be positive");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (!(lr_learner > 0.0)) fail("lr_learner must be positive");
  if (l2_reg < 0.0) fail("l2_reg must be nonnegative");
  if (!(init_std >= 0.0)) fail("init_std must be nonnegative");
  if (learner_kind == LearnerKind::mlp && hidden_dim <= 0) fail("hidden_dim must be positive");
  switch (method) {
    case Method::erm:
      break;
    case Method::cvar:
      if (!(alpha0 > 0.0 && alpha0 <= 1.0)) fail("alpha0 must lie in (0, 1]");
      break;
    case Method::brdro:
      if (!(lr_adversary >= 0.0)) fail("lr_adversary must be nonnegative");
      if (!(eta_top_frac > 0.0 && eta_top_frac < 1.0)) fail("eta_top_frac must lie in (0, 1)");
      if (beta_vib < 0.0 || beta_l2 < 0.0 || beta_l1 < 0.0) fail("betas must be nonnegative");
      if (!(weight_floor >= 0.0 && weight_floor < 1.0)) fail("weight_floor must lie in [0, 1)");
      if (adversary_kind == AdversaryKind::vib && latent_dim < 1) fail("latent_dim must be positive");
      if (!(adversary_init_std >= 0.0)) fail("adversary_init_std must be nonnegative");
      break;
    case Method::groupdro:
      if (groupdro_step < 0.0) fail("groupdro_step must be nonnegative");
      break;
    case Method::jtt:
      if (jtt_id_epochs <= 0) fail("jtt_id_epochs must be positive");
      if (!(jtt_lambda_up >= 1.0)) fail("jtt_lambda_up must be at least 1");
      if (jtt_l2_reg < 0.0) fail("jtt_l2_reg must be nonnegative");
      break;
  }
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x62726472u};
  return Rng(seq);
}

std::vector<double> example_losses(const LearnerParams& learner, const Dataset& ds) {
  std::vector<double> losses(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    losses[i] = logistic_loss(learner_margin(learner, ds[i].x), ds[i].y);
  }
  return losses;
}

namespace detail {

LearnerParams init_learner_for(const Dataset& train, const TrainConfig& cfg, std::uint64_t stream_offset) {
  Rng rng = make_rng(cfg.seed, kLearnerInitStream + stream_offset);
  return init_learner(cfg.learner_kind, train.feature_dim(), cfg.hidden_dim, cfg.l2_reg, cfg.init_std, rng);
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double weighted_step(LearnerParams& learner, const Dataset& train, std::span<const std::size_t> batch,
                     std::span<const double> weights, double lr) {
  LearnerParams grad = learner.zeros_like();
  double weight_sum = 0.0;
  double loss_sum = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Example& e = train[batch[k]];
    const double margin = learner_margin(learner, e.x);
    const double loss = logistic_loss(margin, e.y);
    if (!std::isfinite(loss)) {
      throw TrainingAborted("non-finite loss on training example " + std::to_string(batch[k]));
    }
    loss_sum += loss;
    const double w = weights[k];
    if (w != 0.0) {
      accumulate_margin_grad(learner, e.x, w * logistic_loss_grad(margin, e.y), grad);
      weight_sum += w;
    }
  }
  if (weight_sum > 0.0) {
    axpy(-lr / weight_sum, grad, learner);
    if (learner.l2_reg > 0.0) {
      LearnerParams reg = learner.zeros_like();
      accumulate_regularizer_grad(learner, reg);
      axpy(-lr, reg, learner);
    }
  }
  if (!learner.all_finite()) {
    throw TrainingAborted("learner parameters became non-finite");
  }
  return loss_sum / static_cast<double>(batch.size());
}

double weighted_epoch(LearnerParams& learner, const Dataset& train, const std::vector<std::size_t>& order,
                      std::span<const double> weights, const TrainConfig& cfg) {
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::vector<double> batch_weights;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    const std::span<const std::size_t> batch(order.data() + start, end - start);
    batch_weights.resize(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) batch_weights[k] = weights[batch[k]];
    loss_sum += weighted_step(learner, train, batch, batch_weights, cfg.lr_learner);
    ++batches;
  }
  return batches == 0 ? 0.0 : loss_sum / static_cast<double>(batches);
}

EpochRecord make_record(int epoch, double train_loss, const LearnerParams& learner, const Dataset& train,
                        const Dataset& eval, std::span<const double> weights) {
  EpochRecord r;
  r.epoch = epoch;
  r.train_loss = train_loss;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.group_accuracy.fill(nan);
  r.average_accuracy = nan;
  r.worst_group_accuracy = nan;
  if (!eval.empty()) {
    const GroupMetrics m = group_metrics(learner, eval);
    for (const auto& [g, acc] : m.accuracy) r.group_accuracy[static_cast<std::size_t>(g)] = acc;
    r.average_accuracy = m.average;
    r.worst_group_accuracy = m.worst;
  }
  double sums[3] = {0, 0, 0};
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < train.size() && i < weights.size(); ++i) {
    const std::size_t bucket = train[i].is_minority() ? 0 : 1;
    sums[bucket] += weights[i];
    ++counts[bucket];
    if (train[i].is_noisy) {
      sums[2] += weights[i];
      ++counts[2];
    }
  }
  auto mean = [&](int k) { return counts[k] == 0 ? nan : sums[k] / static_cast<double>(counts[k]); };
  r.weight_minority = mean(0);
  r.weight_majority = mean(1);
  r.weight_noisy = mean(2);
  return r;
}

void require_trainable(const Dataset& train, const TrainConfig& cfg, Method expected) {
  if (cfg.method != expected) {
    throw UsageError(std::string("trainer for '") + to_string(expected) + "' called with method '" +
                     to_string(cfg.method) + "'");
  }
  cfg.validate();
  if (train.empty()) throw InputError("training set is empty");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

using namespace detail;

TrainReport train_erm(const Dataset& train, const Dataset& eval, const TrainConfig& cfg) {
  require_trainable(train, cfg, Method::erm);
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  report.method = Method::erm;
  report.learner = init_learner_for(train, cfg);
  Rng shuffle = make_rng(cfg.seed, kShuffleStream);
  const std::vector<double> ones(train.size(), 1.0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_order(train.size(), shuffle);
    const double loss = weighted_epoch(report.learner, train, order, ones, cfg);
    push_epoch(report, make_record(epoch, loss, report.learner, train, eval, ones), ones);
  }
  report.weights.weights = ones;
  report.wall_seconds = seconds_since(start);
  return report;
}

TrainReport train_cvar_dro(const Dataset& train, const Dataset& eval, const TrainConfig& cfg) {
  require_trainable(train, cfg, Method::cvar);
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  report.method = Method::cvar;
  report.learner = init_learner_for(train, cfg);
  Rng shuffle = make_rng(cfg.seed, kShuffleStream);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    report.weights = cvar_topfrac_weights(example_losses(report.learner, train), cfg.alpha0);
    const auto order = shuffled_order(train.size(), shuffle);
    const double loss = weighted_epoch(report.learner, train, order, report.weights.weights, cfg);
    push_epoch(report, make_record(epoch, loss, report.learner, train, eval, report.weights.weights), report.weights.weights);
  }
  report.wall_seconds = seconds_since(start);
  return report;
}

TrainReport train_groupdro(const Dataset& train, const Dataset& eval, const TrainConfig& cfg) {
  require_trainable(train, cfg, Method::groupdro);
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  report.method = Method::groupdro;
  report.learner = init_learner_for(train, cfg);

  const auto& counts = train.groups().counts;
  std::array<double, kNumGroups> g{};
  int present = 0;
  for (std::size_t k = 0; k < kNumGroups; ++k) {
    if (counts[k] > 0) {
      ++present;
    } else {
      report.warnings.push_back("group " + std::to_string(k) + " absent from the training split; dropped");
    }
  }
  for (std::size_t k = 0; k < kNumGroups; ++k) g[k] = counts[k] > 0 ? 1.0 / present : 0.0;

  Rng shuffle = make_rng(cfg.seed, kShuffleStream);
  std::vector<double> example_weight(train.size());
  std::vector<double> table(train.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto losses = example_losses(report.learner, train);
    std::array<double, kNumGroups> group_loss{};
    for (std::size_t i = 0; i < train.size(); ++i) group_loss[static_cast<std::size_t>(train[i].group)] += losses[i];
    double z = 0.0;
    for (std::size_t k = 0; k < kNumGroups; ++k) {
      if (counts[k] == 0) continue;
      group_loss[k] /= static_cast<double>(counts[k]);
      g[k] *= std::exp(cfg.groupdro_step * group_loss[k]);
      z += g[k];
    }
    for (auto& v : g) v /= z;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto k = static_cast<std::size_t>(train[i].group);
      example_weight[i] = g[k] / static_cast<double>(counts[k]);
      table[i] = g[k];
    }
    const auto order = shuffled_order(train.size(), shuffle);
    const double loss = weighted_epoch(report.learner, train, order, example_weight, cfg);
    push_epoch(report, make_record(epoch, loss, report.learner, train, eval, table), table);
  }
  report.group_distribution = g;
  report.weights.weights = table;
  report.wall_seconds = seconds_since(start);
  return report;
}

TrainReport train_jtt(const Dataset& train, const Dataset& eval, const TrainConfig& cfg) {
  require_trainable(train, cfg, Method::jtt);
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  report.method = Method::jtt;

  // Stage 1: heavily regularized ERM on its own streams.
  TrainConfig id_cfg = cfg;
  id_cfg.l2_reg = cfg.jtt_l2_reg;
  LearnerParams identifier = init_learner_for(train, id_cfg, kJttStageOneOffset);
  Rng id_shuffle = make_rng(cfg.seed, kShuffleStream + kJttStageOneOffset);
  const std::vector<double> ones(train.size(), 1.0);
  for (int epoch = 1; epoch <= cfg.jtt_id_epochs; ++epoch) {
    weighted_epoch(identifier, train, shuffled_order(train.size(), id_shuffle), ones, id_cfg);
  }
  std::vector<double> upweight(train.size(), 1.0);
  report.weights.weights.assign(train.size(), 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (predict(identifier, train[i].x) != train[i].y) {
      report.error_set.push_back(i);
      upweight[i] = cfg.jtt_lambda_up;
      report.weights.weights[i] = 1.0;
    }
  }
  if (report.error_set.empty()) {
    report.warnings.push_back("jtt: empty error set; stage 2 reduces to ERM");
  }

  // Stage 2: fresh learner on the ERM streams.
  report.learner = init_learner_for(train, cfg);
  Rng shuffle = make_rng(cfg.seed, kShuffleStream);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_order(train.size(), shuffle);
    const double loss = weighted_epoch(report.learner, train, order, upweight, cfg);
    push_epoch(report, make_record(epoch, loss, report.learner, train, eval, report.weights.weights), report.weights.weights);
  }
  report.wall_seconds = seconds_since(start);
  return report;
}

TrainReport train(const Dataset& train_set, const Dataset& eval, const TrainConfig& cfg) {
  switch (cfg.method) {
    case Method::erm:
      return train_erm(train_set, eval, cfg);
    case Method::cvar:
      return train_cvar_dro(train_set, eval, cfg);
    case Method::brdro:
      return train_brdro(train_set, eval, cfg);
    case Method::groupdro:
      return train_groupdro(train_set, eval, cfg);
    case Method::jtt:
      return train_jtt(train_set, eval, cfg);
  }
  throw UsageError("unknown method");
}

// ---- serialization ------------------------------------------------------

std::string history_csv(const TrainReport& report) {
  std::ostringstream out;
  out << kHistoryHeader << '\n';
  for (const auto& r : report.history) {
    out << r.epoch << ',' << format_double(r.train_loss);
    for (double acc : r.group_accuracy) out << ',' << format_double(acc);
    out << ',' << format_double(r.average_accuracy) << ',' << format_double(r.worst_group_accuracy) << ','
        << format_double(r.weight_minority) << ',' << format_double(r.weight_majority) << ','
        << format_double(r.weight_noisy) << ',' << format_double(r.mean_kl) << ',' << format_double(r.penalty)
        << '\n';
  }
  out << "#summary,method=" << to_string(report.method) << ",epochs=" << report.history.size();
  if (!report.history.empty()) {
    const auto& last = report.history.back();
    out << ",avg_acc=" << format_double(last.average_accuracy)
        << ",worst_acc=" << format_double(last.worst_group_accuracy);
  }
  out << '\n';
  return out.str();
}

void write_history_csv(const TrainReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, history_csv(report));
}

void write_weights_csv(const WeightTable& weights, const Dataset& ds, const std::filesystem::path& path) {
  if (weights.size() != ds.size()) throw InputError("write_weights_csv: size mismatch");
  std::ostringstream out;
  out << "index,weight,group,is_noisy\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << i << ',' << format_double(weights[i]) << ',' << ds[i].group << ',' << (ds[i].is_noisy ? 1 : 0) << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace brdro
