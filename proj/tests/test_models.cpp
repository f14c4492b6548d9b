#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "brdro/diffcore.hpp"
#include "brdro/errors.hpp"
#include "brdro/models.hpp"
#include "brdro/synthdata.hpp"

using namespace brdro;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// 2 inputs, 3 hidden units.
LearnerParams probe_mlp() {
  LearnerParams p = LearnerParams::mlp(2, 3);
  p.hidden_w << 1.0, 0.0, 0.0, 1.0, 1.0, -1.0;
  p.hidden_b << 0.0, 0.5, -0.25;
  p.out_w << 2.0, -1.0, 0.5;
  p.out_b = 0.1;
  return p;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("linear margins") {
    LearnerParams p = LearnerParams::linear(4);
    CHECK(learner_margin(p, vec({1.0, 2.0, 3.0, 4.0})) == 0.0);
    p.w(kCoreIndex) = 1.0;
    CHECK(learner_margin(p, vec({2.0, 5.0, -1.0, 0.0})) == 2.0);
    const FeatureView f = learner_features(p, vec({2.0, 5.0, -1.0, 0.0}));
    CHECK(f.source == FeatureSource::raw_input);
    CHECK(f.values == vec({2.0, 5.0, -1.0, 0.0}));
  }

  TEST_CASE("mlp forward pass by hand") {
    const LearnerParams p = probe_mlp();
    const Eigen::VectorXd x = vec({0.3, -0.8});
    // pre = [0.3, -0.3, 0.85], relu = [0.3, 0, 0.85]
    const double expected = 2.0 * 0.3 - 1.0 * 0.0 + 0.5 * 0.85 + 0.1;
    CHECK(std::abs(learner_margin(p, x) - expected) < 1e-12);
    const FeatureView f = learner_features(p, x);
    CHECK(f.source == FeatureSource::learner_hidden);
    CHECK((f.values - vec({0.3, 0.0, 0.85})).cwiseAbs().maxCoeff() < 1e-12);

    const LearnerParams zero = LearnerParams::mlp(2, 3);
    CHECK(learner_features(zero, x).values.isZero());
    CHECK(learner_margin(zero, x) == 0.0);
  }

  TEST_CASE("adversary weight oracles") {
    AdversaryParams lin = AdversaryParams::linear(AdversaryKind::linear_l2, 3, 0.1);
    const FeatureView f{vec({1.0, 0.0, 0.0}), FeatureSource::raw_input};
    CHECK(adversary_weight(lin, f, 1, nullptr).weight == 0.5);
    CHECK(adversary_weight(lin, f, 1, nullptr).kl == 0.0);
    lin.heads[head_index(1)].w(0) = 1.0;
    CHECK(adversary_weight(lin, f, 1, nullptr).weight == doctest::Approx(0.731059).epsilon(1e-6));

    AdversaryParams vib = AdversaryParams::vib(3, 2, 0.1);
    Rng rng(3);
    const AdversaryOutput out = adversary_weight(vib, f, -1, &rng);
    CHECK(out.kl == 0.0);
    CHECK(out.weight == 0.5);
    CHECK_THROWS_AS(adversary_weight(vib, f, -1, nullptr), UsageError);
  }

  TEST_CASE("adversary weight stays in the unit interval") {
    Rng rng(8);
    std::normal_distribution<double> n(0.0, 30.0);
    for (AdversaryKind kind : {AdversaryKind::linear_l2, AdversaryKind::linear_l1, AdversaryKind::vib}) {
      AdversaryParams p = init_adversary(kind, 4, 3, 0.1, 0.1, 5.0, rng);
      for (int i = 0; i < 10000 / 3; ++i) {
        const FeatureView f{vec({n(rng), n(rng), n(rng), n(rng)}), FeatureSource::raw_input};
        const AdversaryOutput out = adversary_weight(p, f, i % 2 ? 1 : -1, &rng);
        CHECK(out.weight >= 0.0);
        CHECK(out.weight <= 1.0);
        CHECK(out.kl >= 0.0);
      }
    }
  }

  TEST_CASE("heads are independent per label") {
    Rng rng(2);
    AdversaryParams p = init_adversary(AdversaryKind::linear_l2, 3, 0, 0.1, 0.0, 1.0, rng);
    const Eigen::VectorXd x = vec({0.4, -1.0, 2.0});
    const double before = adversary_forward(p, x, -1, {}).weight;
    p.heads[head_index(1)].w.setConstant(9.0);
    p.heads[head_index(1)].b = -4.0;
    CHECK(adversary_forward(p, x, -1, {}).weight == before);
  }

  TEST_CASE("penalty oracles") {
    AdversaryParams l2 = AdversaryParams::linear(AdversaryKind::linear_l2, 2, 0.01);
    CHECK(adversary_penalty(l2) == 0.0);
    l2.heads[0].w = vec({3.0, 4.0});
    CHECK(adversary_penalty(l2) == doctest::Approx(0.25).epsilon(1e-15));

    AdversaryParams l1 = AdversaryParams::linear(AdversaryKind::linear_l1, 2, 0.1);
    l1.heads[1].w = vec({3.0, -4.0});
    CHECK(adversary_penalty(l1) == doctest::Approx(0.7).epsilon(1e-15));

    // Biases count too: only the zero function keeps every weight at 1/2.
    l2.heads[1].b = 2.0;
    CHECK(adversary_penalty(l2) == doctest::Approx(0.29));

    CHECK(adversary_penalty(AdversaryParams::vib(2, 2, 5.0)) == 0.0);
  }

  TEST_CASE("penalty prox is the closed-form minimizer") {
    AdversaryParams l2 = AdversaryParams::linear(AdversaryKind::linear_l2, 2, 0.5);
    l2.heads[0].w = vec({3.0, -1.0});
    l2.heads[0].b = 1.0;
    apply_penalty_prox(l2, 0.2);
    // argmin 0.5 (v - u)^2 + 0.2 * 0.5 * v^2  =>  v = u / 1.2
    CHECK(l2.heads[0].w(0) == doctest::Approx(3.0 / 1.2));
    CHECK(l2.heads[0].b == doctest::Approx(1.0 / 1.2));

    AdversaryParams l1 = AdversaryParams::linear(AdversaryKind::linear_l1, 3, 1.0);
    l1.heads[1].w = vec({0.3, -0.05, -2.0});
    l1.heads[1].b = 0.08;
    apply_penalty_prox(l1, 0.1);
    CHECK(l1.heads[1].w(0) == doctest::Approx(0.2));
    CHECK(l1.heads[1].w(1) == 0.0);
    CHECK(l1.heads[1].w(2) == doctest::Approx(-1.9));
    CHECK(l1.heads[1].b == 0.0);

    AdversaryParams huge = AdversaryParams::linear(AdversaryKind::linear_l2, 2, 1e6);
    huge.heads[0].w = vec({5.0, 5.0});
    apply_penalty_prox(huge, 1.0);
    CHECK(huge.heads[0].w.cwiseAbs().maxCoeff() < 1e-5);
    CHECK_THROWS_AS(apply_penalty_prox(huge, -1.0), InputError);
  }

  TEST_CASE("penalty gradient matches finite differences") {
    Rng rng(4);
    for (AdversaryKind kind : {AdversaryKind::linear_l2, AdversaryKind::linear_l1}) {
      AdversaryParams p = init_adversary(kind, 3, 0, 0.3, 0.0, 1.0, rng);
      p.heads[0].b = 0.7;
      p.heads[1].b = -0.4;
      AdversaryParams g = p.zeros_like();
      accumulate_penalty_grad(p, 1.0, g);
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < 3; ++i) {
        AdversaryParams a = p, b = p;
        a.heads[1].w(i) += h;
        b.heads[1].w(i) -= h;
        CHECK(g.heads[1].w(i) == doctest::Approx((adversary_penalty(a) - adversary_penalty(b)) / (2 * h)));
      }
    }
  }

  TEST_CASE("adversary gradient with frozen noise") {
    Rng rng(6);
    AdversaryParams p = init_adversary(AdversaryKind::vib, 3, 2, 0.0, 0.5, 0.7, rng);
    const Eigen::VectorXd x = vec({0.4, -1.1, 0.9});
    const Eigen::VectorXd noise = standard_normal(2, rng);
    AdversaryParams g = p.zeros_like();
    accumulate_adversary_grad(p, x, 1, noise, 1.0, 0.3, g);
    auto f = [&](const AdversaryParams& q) {
      const AdversaryOutput o = adversary_forward(q, x, 1, noise);
      return o.weight + 0.3 * o.kl;
    };
    const double h = 1e-6;
    for (Eigen::Index r = 0; r < p.enc_w.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.enc_w.cols(); ++c) {
        AdversaryParams a = p, b = p;
        a.enc_w(r, c) += h;
        b.enc_w(r, c) -= h;
        CHECK(g.enc_w(r, c) == doctest::Approx((f(a) - f(b)) / (2 * h)).epsilon(1e-6));
      }
    }
    // The other head receives nothing.
    CHECK(g.heads[head_index(-1)].w.isZero());
  }

  TEST_CASE("param tree round trip and checkpoints") {
    Rng rng(12);
    const LearnerParams mlp = init_learner(LearnerKind::mlp, 4, 5, 0.01, 0.3, rng);
    const AdversaryParams adv = init_adversary(AdversaryKind::vib, 5, 3, 0.0, 0.2, 0.3, rng);
    CHECK(learner_from_tree(to_param_tree(mlp), mlp) == mlp);
    CHECK(adversary_from_tree(to_param_tree(adv), adv) == adv);

    const auto path = std::filesystem::temp_directory_path() / "brdro_test.ckpt";
    save_checkpoint(checkpoint_tree(mlp, &adv), path);
    const ParamTree back = load_checkpoint(path);
    CHECK(learner_from_checkpoint(back) == mlp);
    const auto adv_back = adversary_from_checkpoint(back);
    REQUIRE(adv_back.has_value());
    CHECK(*adv_back == adv);
    std::filesystem::remove(path);
  }
}
