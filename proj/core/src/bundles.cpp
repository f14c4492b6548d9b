#include "brdro/bundles.hpp"

#include <sstream>

#include "brdro/csv.hpp"
#include "brdro/dro.hpp"
#include "brdro/game.hpp"
#include "brdro/models.hpp"
#include "brdro/synthdata.hpp"

namespace brdro {

namespace {

constexpr Eigen::Index kFixtureDim = 6;
constexpr int kFixtureSize = 8;

struct Fixture {
  std::vector<Eigen::VectorXd> x;
  std::vector<int> y;
  std::vector<double> losses;
  std::vector<Eigen::VectorXd> noise;
  double eta = 0.0;
};

Fixture make_fixture(Rng& rng, Eigen::Index noise_dim) {
  Fixture f;
  std::uniform_real_distribution<double> unif(0.0, 2.0);
  for (int i = 0; i < kFixtureSize; ++i) {
    f.x.push_back(standard_normal(kFixtureDim, rng));
    f.y.push_back(i % 2 == 0 ? 1 : -1);
    f.losses.push_back(unif(rng));
    f.noise.push_back(standard_normal(noise_dim, rng));
  }
  f.eta = top_fraction_threshold(f.losses, 0.25);
  return f;
}

ParamTree single(const std::string& name, const Eigen::MatrixXd& value) {
  ParamTree t;
  t.add(name, value);
  return t;
}

GradBundle learner_bundle(const std::string& name, const LearnerParams& like, const Fixture& f) {
  auto value = [like, f](const ParamTree& t) {
    const LearnerParams p = learner_from_tree(t, like);
    double sum = 0.0;
    for (std::size_t i = 0; i < f.x.size(); ++i) sum += logistic_loss(learner_margin(p, f.x[i]), f.y[i]);
    return sum / static_cast<double>(f.x.size()) + learner_regularizer(p);
  };
  auto gradient = [like, f](const ParamTree& t) {
    const LearnerParams p = learner_from_tree(t, like);
    LearnerParams g = p.zeros_like();
    const double n = static_cast<double>(f.x.size());
    for (std::size_t i = 0; i < f.x.size(); ++i) {
      accumulate_margin_grad(p, f.x[i], logistic_loss_grad(learner_margin(p, f.x[i]), f.y[i]) / n, g);
    }
    accumulate_regularizer_grad(p, g);
    return to_param_tree(g);
  };
  return {name, value, gradient, to_param_tree(like)};
}

GradBundle adversary_bundle(const std::string& name, const AdversaryParams& like, const Fixture& f) {
  auto value = [like, f](const ParamTree& t) {
    const AdversaryParams p = adversary_from_tree(t, like);
    std::vector<double> w;
    std::vector<double> kl;
    for (std::size_t i = 0; i < f.x.size(); ++i) {
      const AdversaryOutput out = adversary_forward(p, f.x[i], f.y[i], f.noise[i]);
      w.push_back(out.weight);
      kl.push_back(out.kl);
    }
    return adv_objective(f.losses, w, kl, adversary_penalty(p), f.eta, p.beta_vib);
  };
  auto gradient = [like, f](const ParamTree& t) {
    const AdversaryParams p = adversary_from_tree(t, like);
    AdversaryParams g = p.zeros_like();
    const double n = static_cast<double>(f.x.size());
    for (std::size_t i = 0; i < f.x.size(); ++i) {
      accumulate_adversary_grad(p, f.x[i], f.y[i], f.noise[i], (f.losses[i] - f.eta) / n, -p.beta_vib / n, g);
    }
    accumulate_penalty_grad(p, -1.0, g);
    return to_param_tree(g);
  };
  return {name, value, gradient, to_param_tree(like)};
}

ParamTree player_tree(const GamePlayer& h) {
  ParamTree t;
  t.add("game.w", h.w);
  t.add("game.b", Eigen::MatrixXd::Constant(1, 1, h.b));
  t.add("game.eta", Eigen::MatrixXd::Constant(1, 1, h.eta));
  return t;
}

GamePlayer player_from(const ParamTree& t) {
  GamePlayer h;
  h.w = t.at("game.w");
  h.b = t.at("game.b")(0, 0);
  h.eta = t.at("game.eta")(0, 0);
  return h;
}

GradBundle game_bundle(const std::string& name, const FiniteGame& game, const std::vector<double>& delta,
                       const GamePlayer& start) {
  auto value = [game, delta](const ParamTree& t) { return mixed_objective(game, player_from(t), delta).value; };
  auto gradient = [game, delta](const ParamTree& t) {
    return player_tree(mixed_objective(game, player_from(t), delta).grad);
  };
  return {name, value, gradient, player_tree(start)};
}

}  // namespace

std::vector<GradBundle> default_bundles(std::uint64_t seed) {
  Rng rng = make_rng(seed, 21);
  std::vector<GradBundle> out;
  constexpr int latent = 3;
  const Fixture f = make_fixture(rng, latent);

  {
    const std::vector<int> labels = f.y;
    auto value = [labels](const ParamTree& t) {
      const auto& m = t.at("margin");
      double sum = 0.0;
      for (Eigen::Index i = 0; i < m.rows(); ++i) sum += logistic_loss(m(i, 0), labels[static_cast<std::size_t>(i)]);
      return sum;
    };
    auto gradient = [labels](const ParamTree& t) {
      Eigen::MatrixXd g = t.at("margin");
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, 0) = logistic_loss_grad(g(i, 0), labels[static_cast<std::size_t>(i)]);
      return single("margin", g);
    };
    out.push_back({"logistic_loss", value, gradient, single("margin", standard_normal(kFixtureSize, rng))});
  }
  {
    auto value = [](const ParamTree& t) {
      return gaussian_kl(t.at("mu").col(0), t.at("logvar").col(0));
    };
    auto gradient = [](const ParamTree& t) {
      const GaussianKlGrad g = gaussian_kl_grad(t.at("mu").col(0), t.at("logvar").col(0));
      ParamTree out;
      out.add("mu", g.mu);
      out.add("logvar", g.logvar);
      return out;
    };
    ParamTree p;
    p.add("mu", standard_normal(latent, rng));
    p.add("logvar", standard_normal(latent, rng));
    out.push_back({"gaussian_kl", value, gradient, p});
  }
  {
    const Eigen::VectorXd noise = standard_normal(latent, rng);
    const Eigen::VectorXd coef = standard_normal(latent, rng);
    auto value = [noise, coef](const ParamTree& t) {
      return coef.dot(reparam_transform(t.at("mu").col(0), t.at("logvar").col(0), noise));
    };
    auto gradient = [noise, coef](const ParamTree& t) {
      const ReparamGrad g = reparam_backward(t.at("logvar").col(0), noise, coef);
      ParamTree out;
      out.add("mu", g.mu);
      out.add("logvar", g.logvar);
      return out;
    };
    ParamTree p;
    p.add("mu", standard_normal(latent, rng));
    p.add("logvar", standard_normal(latent, rng));
    out.push_back({"reparam", value, gradient, p});
  }

  out.push_back(learner_bundle("learner_linear", init_learner(LearnerKind::linear, kFixtureDim, 0, 0.1, 0.5, rng), f));
  out.push_back(learner_bundle("learner_mlp", init_learner(LearnerKind::mlp, kFixtureDim, 5, 0.1, 0.5, rng), f));

  out.push_back(adversary_bundle(
      "adversary_linear_l2", init_adversary(AdversaryKind::linear_l2, kFixtureDim, latent, 0.1, 0.0, 0.5, rng), f));
  out.push_back(adversary_bundle(
      "adversary_linear_l1", init_adversary(AdversaryKind::linear_l1, kFixtureDim, latent, 0.1, 0.0, 0.5, rng), f));
  out.push_back(adversary_bundle("adversary_vib",
                                 init_adversary(AdversaryKind::vib, kFixtureDim, latent, 0.0, 0.1, 0.5, rng), f));

  {
    SynthConfig sc;
    sc.n = 32;
    sc.d_noise = 2;
    sc.seed = seed;
    const Dataset ds = generate(sc);
    Rng grng = make_rng(seed, 22);
    const FiniteGame game = make_game(ds, 4, 0.05, 0.5, 100, grng);
    GamePlayer start = random_player(game.dim(), 0.5, grng);
    start.eta = 0.7;
    for (std::size_t k = 0; k < game.group_count(); ++k) {
      std::vector<double> point(game.group_count(), 0.0);
      point[k] = 1.0;
      out.push_back(game_bundle("game_payoff_" + std::to_string(k), game, point, start));
    }
    const std::vector<double> mix{0.1, 0.2, 0.3, 0.4};
    out.push_back(game_bundle("game_mixed_objective", game, mix, start));
  }
  return out;
}

GradcheckSummary run_gradcheck(const std::vector<GradBundle>& bundles, std::uint64_t seed,
                               const GradCheckOptions& options) {
  GradcheckSummary summary;
  Rng rng = make_rng(seed, 23);
  for (const auto& b : bundles) {
    summary.reports.push_back(grad_check(b, rng, options));
    if (!summary.reports.back().passed()) summary.passed = false;
  }
  return summary;
}

std::string gradcheck_csv(const GradcheckSummary& summary) {
  std::ostringstream out;
  out << "bundle,max_rel_error,probes,passed\n";
  for (const auto& r : summary.reports) {
    out << r.bundle << ',' << format_double(r.max_rel_error) << ',' << r.probe_count << ','
        << (r.passed() ? "true" : "false") << '\n';
  }
  return out.str();
}

}  // namespace brdro
