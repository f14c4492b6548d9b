#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "brdro/dro.hpp"
#include "brdro/errors.hpp"
#include "trainer_common.hpp"

namespace brdro {

using namespace detail;

namespace {

double penalty_strength(const TrainConfig& cfg) {
  switch (cfg.adversary_kind) {
    case AdversaryKind::linear_l2:
      return cfg.beta_l2;
    case AdversaryKind::linear_l1:
      return cfg.beta_l1;
    case AdversaryKind::vib:
      return 0.0;
  }
  return 0.0;
}

}  // namespace

BrdroState init_brdro_state(const Dataset& train, const TrainConfig& cfg) {
  if (train.empty()) throw InputError("training set is empty");
  BrdroState s{.learner = init_learner_for(train, cfg),
               .adversary = {},
               .raw_weights = {},
               .learner_weights = {},
               .kl = {},
               .noise_rng = make_rng(cfg.seed, kNoiseStream)};
  Rng adv_rng = make_rng(cfg.seed, kAdversaryInitStream);
  s.adversary = init_adversary(cfg.adversary_kind, s.learner.feature_dim(), cfg.latent_dim, penalty_strength(cfg),
                               cfg.beta_vib, cfg.adversary_init_std, adv_rng);
  s.raw_weights.resize(train.size());
  s.learner_weights.resize(train.size());
  s.kl.resize(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const AdversaryOutput out =
        adversary_weight(s.adversary, learner_features(s.learner, train[i].x), train[i].y, &s.noise_rng);
    s.raw_weights[i] = out.weight;
    s.learner_weights[i] = std::max(out.weight, cfg.weight_floor);
    s.kl[i] = out.kl;
  }
  return s;
}

void brdro_round(BrdroState& s, const Dataset& train, std::span<const std::size_t> batch, const TrainConfig& cfg) {
  if (batch.empty()) return;
  const std::size_t m = batch.size();

  // Both players read the pre-round learner.
  std::vector<double> losses(m);
  std::vector<Eigen::VectorXd> features(m);
  for (std::size_t k = 0; k < m; ++k) {
    const Example& e = train[batch[k]];
    losses[k] = logistic_loss(learner_margin(s.learner, e.x), e.y);
    if (!std::isfinite(losses[k])) {
      throw TrainingAborted("brdro: non-finite loss on training example " + std::to_string(batch[k]));
    }
    features[k] = learner_features(s.learner, e.x).values;
  }

  // (i) learner step on the weight-scaled loss, weights from the previous round
  std::vector<double> cached(m);
  for (std::size_t k = 0; k < m; ++k) cached[k] = s.learner_weights[batch[k]];
  s.last_batch_loss = weighted_step(s.learner, train, batch, cached, cfg.lr_learner);

  // (ii) eta leaves the top eta_top_frac of the batch losses above it
  const double eta = top_fraction_threshold(losses, cfg.eta_top_frac);
  s.last_eta = eta;

  // (iii) adversary ascent on adv_objective
  const auto md = static_cast<double>(m);
  std::vector<Eigen::VectorXd> noise(m);
  std::vector<double> weights(m);
  std::vector<double> kls(m);
  AdversaryParams grad = s.adversary.zeros_like();
  for (std::size_t k = 0; k < m; ++k) {
    const Example& e = train[batch[k]];
    noise[k] = standard_normal(s.adversary.noise_dim(), s.noise_rng);
    const AdversaryOutput out = adversary_forward(s.adversary, features[k], e.y, noise[k]);
    weights[k] = out.weight;
    kls[k] = out.kl;
    accumulate_adversary_grad(s.adversary, features[k], e.y, noise[k], (losses[k] - eta) / md,
                              -s.adversary.beta_vib / md, grad);
  }
  s.last_objective =
      adv_objective(losses, weights, kls, adversary_penalty(s.adversary), eta, s.adversary.beta_vib);
  // The penalty enters through its proximal map so that large beta stays stable.
  axpy(cfg.lr_adversary, grad, s.adversary);
  apply_penalty_prox(s.adversary, cfg.lr_adversary);
  if (!s.adversary.all_finite()) {
    throw TrainingAborted("brdro: adversary parameters became non-finite");
  }

  // (iv) refresh the cached weights with the updated players, same noise draw
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = batch[k];
    const Example& e = train[i];
    const AdversaryOutput out =
        adversary_forward(s.adversary, learner_features(s.learner, e.x).values, e.y, noise[k]);
    s.raw_weights[i] = out.weight;
    s.learner_weights[i] = std::max(out.weight, cfg.weight_floor);
    s.kl[i] = out.kl;
  }
}

TrainReport train_brdro(const Dataset& train, const Dataset& eval, const TrainConfig& cfg) {
  require_trainable(train, cfg, Method::brdro);
  const auto start = std::chrono::steady_clock::now();
  BrdroState state = init_brdro_state(train, cfg);
  Rng shuffle = make_rng(cfg.seed, kShuffleStream);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  TrainReport report;
  report.method = Method::brdro;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_order(train.size(), shuffle);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t from = 0; from < order.size(); from += bs) {
      const std::size_t to = std::min(order.size(), from + bs);
      brdro_round(state, train, std::span<const std::size_t>(order.data() + from, to - from), cfg);
      loss_sum += state.last_batch_loss;
      ++batches;
    }
    EpochRecord r = make_record(epoch, loss_sum / static_cast<double>(batches), state.learner, train, eval,
                                state.raw_weights);
    double kl_sum = 0.0;
    for (double k : state.kl) kl_sum += k;
    r.mean_kl = kl_sum / static_cast<double>(state.kl.size());
    r.penalty = adversary_penalty(state.adversary);
    push_epoch(report, r, state.raw_weights);
  }
  report.learner = state.learner;
  report.adversary = state.adversary;
  report.weights.weights = state.raw_weights;
  report.wall_seconds = seconds_since(start);
  return report;
}

}  // namespace brdro
