#include "brdro/game.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "brdro/csv.hpp"
#include "brdro/errors.hpp"

namespace brdro {

void FiniteGame::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("FiniteGame: " + msg); };
  if (features.rows() == 0) fail("no examples");
  if (labels.size() != features.rows()) fail("label count differs from example count");
  if (groups.size() < 2) fail("need at least two candidate groups");
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].empty()) fail("group " + std::to_string(k) + " is empty");
    for (std::size_t i : groups[k]) {
      if (i >= static_cast<std::size_t>(features.rows())) fail("group index out of range");
    }
  }
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (!(l2_reg > 0.0)) fail("l2_reg must be positive for a strictly convex learner loss");
  if (!(alpha0 > 0.0 && alpha0 <= 1.0)) fail("alpha0 must lie in (0, 1]");
  if (horizon <= 0) fail("horizon must be positive");
}

double default_temperature(int horizon, std::size_t group_count) {
  if (group_count < 2) throw InputError("default_temperature: need at least two groups");
  return std::sqrt(static_cast<double>(horizon) / std::log(static_cast<double>(group_count)));
}

std::vector<std::vector<std::size_t>> candidate_groups(const Dataset& ds, std::size_t group_count, Rng& rng) {
  std::vector<std::vector<std::size_t>> groups;
  for (int spu_sign : {-1, 1}) {
    for (int label : {-1, 1}) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const int s = ds[i].x[kSpuriousIndex] >= 0.0 ? 1 : -1;
        if (s == spu_sign && ds[i].y == label) members.push_back(i);
      }
      if (!members.empty() && groups.size() < group_count) groups.push_back(std::move(members));
    }
  }
  const std::size_t size = std::max<std::size_t>(1, ds.size() / 4);
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  while (groups.size() < group_count) {
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<std::size_t> members(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
    std::sort(members.begin(), members.end());
    groups.push_back(std::move(members));
  }
  return groups;
}

FiniteGame make_game(const Dataset& ds, std::size_t group_count, double l2_reg, double alpha0, int horizon,
                     Rng& rng) {
  if (ds.empty()) throw InputError("make_game: empty dataset");
  FiniteGame g;
  g.features.resize(static_cast<Eigen::Index>(ds.size()), ds.feature_dim());
  g.labels.resize(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    g.features.row(static_cast<Eigen::Index>(i)) = ds[i].x.transpose();
    g.labels[static_cast<Eigen::Index>(i)] = ds[i].y;
  }
  g.groups = candidate_groups(ds, group_count, rng);
  g.l2_reg = l2_reg;
  g.alpha0 = alpha0;
  g.horizon = horizon;
  g.temperature = default_temperature(horizon, g.groups.size());
  g.validate();
  return g;
}

GamePlayer random_player(Eigen::Index dim, double init_std, Rng& rng) {
  GamePlayer h;
  h.w = Eigen::VectorXd::Zero(dim);
  std::normal_distribution<double> normal(0.0, init_std);
  for (Eigen::Index j = 0; j < dim; ++j) h.w[j] = normal(rng);
  return h;
}

namespace {

// log(1 + exp(-t)) and its derivative, for margins t = y (w.x + b).
inline double softplus_neg(double t) { return t > 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t)); }
inline double sigmoid_neg(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

std::vector<double> example_mass(const FiniteGame& game, std::span<const double> delta) {
  if (delta.size() != game.groups.size()) throw InputError("delta length differs from the group count");
  std::vector<double> mass(static_cast<std::size_t>(game.features.rows()), 0.0);
  for (std::size_t k = 0; k < game.groups.size(); ++k) {
    if (delta[k] == 0.0) continue;
    const double share = delta[k] / static_cast<double>(game.groups[k].size());
    for (std::size_t i : game.groups[k]) mass[i] += share;
  }
  return mass;
}

}  // namespace

Eigen::VectorXd game_losses(const FiniteGame& game, const GamePlayer& h) {
  const Eigen::VectorXd margins = ((game.features * h.w).array() + h.b).matrix().cwiseProduct(game.labels);
  const double reg = game.l2_reg * h.w.squaredNorm();
  return margins.unaryExpr([reg](double t) { return softplus_neg(t) + reg; });
}

double payoff(const FiniteGame& game, const GamePlayer& h, std::size_t group) {
  if (group >= game.groups.size() || game.groups[group].empty()) {
    throw InputError("payoff: group " + std::to_string(group) + " is empty or out of range");
  }
  const Eigen::VectorXd losses = game_losses(game, h);
  double sum = 0.0;
  for (std::size_t i : game.groups[group]) sum += losses[static_cast<Eigen::Index>(i)] - h.eta;
  return sum / (game.alpha0 * static_cast<double>(game.groups[group].size())) + h.eta;
}

std::vector<double> payoffs(const FiniteGame& game, const GamePlayer& h) {
  const Eigen::VectorXd losses = game_losses(game, h);
  std::vector<double> out(game.groups.size());
  for (std::size_t k = 0; k < game.groups.size(); ++k) {
    double sum = 0.0;
    for (std::size_t i : game.groups[k]) sum += losses[static_cast<Eigen::Index>(i)] - h.eta;
    out[k] = sum / (game.alpha0 * static_cast<double>(game.groups[k].size())) + h.eta;
  }
  return out;
}

std::vector<double> ftrl_update(std::span<const double> cum_payoffs, double temperature) {
  if (!(temperature > 0.0)) throw InputError("ftrl_update: temperature must be positive");
  if (cum_payoffs.empty()) throw InputError("ftrl_update: no actions");
  const double top = *std::max_element(cum_payoffs.begin(), cum_payoffs.end());
  if (!std::isfinite(top)) throw InputError("ftrl_update: non-finite payoff");
  std::vector<double> p(cum_payoffs.size());
  double z = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp((cum_payoffs[k] - top) / temperature);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

MixedObjective mixed_objective(const FiniteGame& game, const GamePlayer& h, std::span<const double> delta) {
  const std::vector<double> mass = example_mass(game, delta);
  const double total = std::accumulate(delta.begin(), delta.end(), 0.0);
  const double inv_alpha = 1.0 / game.alpha0;
  const Eigen::VectorXd margins = ((game.features * h.w).array() + h.b).matrix().cwiseProduct(game.labels);

  double weighted_loss = 0.0;
  Eigen::VectorXd coef(margins.size());
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const double m = mass[static_cast<std::size_t>(i)];
    weighted_loss += m * softplus_neg(margins[i]);
    coef[i] = -m * sigmoid_neg(margins[i]) * game.labels[i];
  }
  MixedObjective out;
  out.value = inv_alpha * (weighted_loss + game.l2_reg * h.w.squaredNorm() * total) + h.eta * total * (1.0 - inv_alpha);
  out.grad.w = inv_alpha * (game.features.transpose() * coef + 2.0 * game.l2_reg * total * h.w);
  out.grad.b = inv_alpha * coef.sum();
  out.grad.eta = total * (1.0 - inv_alpha);
  if (!out.grad.w.allFinite() || !std::isfinite(out.grad.b)) {
    throw InputError("mixed_objective: non-finite gradient");
  }
  return out;
}

void learner_step(const FiniteGame& game, GamePlayer& h, std::span<const double> delta, double lr, double eta_max) {
  if (lr == 0.0) return;
  const MixedObjective obj = mixed_objective(game, h, delta);
  h.w -= lr * obj.grad.w;
  h.b -= lr * obj.grad.b;
  h.eta = std::clamp(h.eta - lr * obj.grad.eta, 0.0, eta_max);
}

InnerSolution solve_inner(const FiniteGame& game, std::span<const double> delta, double eta_max,
                          const GamePlayer& start, const InnerSolveOptions& options) {
  const double total = std::accumulate(delta.begin(), delta.end(), 0.0);
  double max_sq = 0.0;
  for (Eigen::Index i = 0; i < game.features.rows(); ++i) {
    max_sq = std::max(max_sq, game.features.row(i).squaredNorm() + 1.0);
  }
  const double smoothness = (total * max_sq / 4.0 + 2.0 * game.l2_reg * total) / game.alpha0;
  const double step = 1.0 / smoothness;

  InnerSolution sol;
  sol.argmin = start;
  sol.argmin.eta = std::clamp(start.eta, 0.0, eta_max);
  for (int it = 0; it < options.max_iterations; ++it) {
    const MixedObjective obj = mixed_objective(game, sol.argmin, delta);
    const double eta_next = std::clamp(sol.argmin.eta - step * obj.grad.eta, 0.0, eta_max);
    const double eta_map = (sol.argmin.eta - eta_next) / step;
    const double norm = std::sqrt(obj.grad.w.squaredNorm() + obj.grad.b * obj.grad.b + eta_map * eta_map);
    if (norm < options.grad_tol) {
      sol.value = obj.value;
      sol.iterations = it;
      return sol;
    }
    sol.argmin.w -= step * obj.grad.w;
    sol.argmin.b -= step * obj.grad.b;
    sol.argmin.eta = eta_next;
  }
  throw ConvergenceError("solve_inner: no convergence within " + std::to_string(options.max_iterations) +
                         " iterations");
}

double duality_gap(const FiniteGame& game, const GamePlayer& h_avg, std::span<const double> delta_avg,
                   double eta_max, const InnerSolveOptions& options) {
  const std::vector<double> p = payoffs(game, h_avg);
  const double sup = *std::max_element(p.begin(), p.end());
  const InnerSolution inner = solve_inner(game, delta_avg, eta_max, h_avg, options);
  return sup - inner.value;
}

GameTrace play_game(const FiniteGame& game, double lr, std::span<const int> checkpoints, const GamePlayer& init) {
  game.validate();
  if (init.w.size() != game.dim()) throw InputError("play_game: initial learner has the wrong dimension");
  const std::size_t K = game.groups.size();
  GameTrace trace;
  trace.temperature = game.temperature;

  std::vector<int> marks(checkpoints.begin(), checkpoints.end());
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
  auto next_mark = std::find_if(marks.begin(), marks.end(), [](int t) { return t >= 1; });

  GamePlayer h = init;
  std::vector<double> cum(K, 0.0);
  GamePlayer sum_h{Eigen::VectorXd::Zero(game.dim()), 0.0, 0.0};
  std::vector<double> sum_delta(K, 0.0);
  double eta_max = game_losses(game, h).maxCoeff();
  trace.steps.reserve(static_cast<std::size_t>(game.horizon));

  for (int t = 1; t <= game.horizon; ++t) {
    const std::vector<double> delta = ftrl_update(cum, game.temperature);
    trace.steps.push_back({t, h.eta, h.w.norm(), h.b, delta});
    sum_h.w += h.w;
    sum_h.b += h.b;
    sum_h.eta += h.eta;
    for (std::size_t k = 0; k < K; ++k) sum_delta[k] += delta[k];

    const std::vector<double> p = payoffs(game, h);
    for (std::size_t k = 0; k < K; ++k) cum[k] += p[k];
    eta_max = std::max(eta_max, game_losses(game, h).maxCoeff());

    if (next_mark != marks.end() && *next_mark == t) {
      GameCheckpoint cp;
      cp.t = t;
      cp.average = {sum_h.w / t, sum_h.b / t, sum_h.eta / t};
      cp.average_delta.resize(K);
      for (std::size_t k = 0; k < K; ++k) cp.average_delta[k] = sum_delta[k] / t;
      cp.gap = duality_gap(game, cp.average, cp.average_delta, eta_max);
      trace.checkpoints.push_back(std::move(cp));
      ++next_mark;
    }
    learner_step(game, h, delta, lr, eta_max);
  }
  const double T = game.horizon;
  trace.average = {sum_h.w / T, sum_h.b / T, sum_h.eta / T};
  trace.average_delta.resize(K);
  for (std::size_t k = 0; k < K; ++k) trace.average_delta[k] = sum_delta[k] / T;
  trace.eta_max = eta_max;
  return trace;
}

void write_game_trace_csv(const GameTrace& trace, const std::filesystem::path& path) {
  std::ostringstream out;
  const std::size_t K = trace.average_delta.size();
  out << "step,eta,gap";
  for (std::size_t k = 0; k < K; ++k) out << ",delta_" << k;
  out << '\n';
  auto cp = trace.checkpoints.begin();
  for (const auto& s : trace.steps) {
    out << s.t << ',' << format_double(s.eta) << ',';
    if (cp != trace.checkpoints.end() && cp->t == s.t) {
      out << format_double(cp->gap);
      ++cp;
    }
    for (double d : s.delta) out << ',' << format_double(d);
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace brdro
