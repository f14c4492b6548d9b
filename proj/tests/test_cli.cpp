#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "brdro/bundles.hpp"
#include "brdro/config.hpp"
#include "brdro/csv.hpp"
#include "brdro/errors.hpp"
#include "brdro/experiment.hpp"

using namespace brdro;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("brdro_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string message_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c;
  c.data.n = 600;
  c.data.d_noise = 5;
  c.train.epochs = 5;
  c.out_dir = out;
  c.seeds = {0, 1};
  c.methods = {Method::erm, Method::brdro, Method::jtt};
  c.train.method = Method::erm;
  return c;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

int run_cli(const std::string& args) {
  const char* exe = std::getenv("BRDRO_CLI");
  REQUIRE_MESSAGE(exe != nullptr, "BRDRO_CLI is not set");
  const int status = std::system((std::string(exe) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("minimal config resolves every default") {
    const ExperimentConfig c = parse_config_text("[train]\nmethod = erm\n");
    CHECK(c == ExperimentConfig{});
    CHECK(c.data.n == 10000);
    CHECK(c.train.lr_learner == 0.05);
  }

  TEST_CASE("errors name the key") {
    CHECK(message_of("[train]\nlearning_rte = 0.1\n").find("'learning_rte'") != std::string::npos);
    CHECK(message_of("[train]\nepochs = many\n").find("'epochs'") != std::string::npos);
    CHECK(message_of("[train]\nepochs = 3\nepochs = 4\n").find("duplicate") != std::string::npos);
    CHECK(message_of("[train]\nthis line has no equals sign\n").find("malformed") != std::string::npos);
    CHECK(message_of("[data]\np_maj = 2\n").find("p_maj") != std::string::npos);
    CHECK(message_of("[experiment]\nseeds = 1, 1\n").find("seeds") != std::string::npos);
    CHECK(message_of("[experiment]\nsweep = nonsense\nsweep_values = 1\n").find("nonsense") != std::string::npos);
    CHECK_THROWS_AS(parse_config("/nonexistent/brdro.cfg"), ConfigError);
  }

  TEST_CASE("comments, sections and qualified keys") {
    const ExperimentConfig c = parse_config_text(
        "# leading comment\n; another\n\n[data]\nn = 2000\np_noise = 0.2\n[train]\nmethod = erm, brdro\n"
        "adversary_kind = linear_l1\n[experiment]\nseeds = 3, 4, 5\nsweep = train.beta_l1\nsweep_values = 0.1, 1\n");
    CHECK(c.data.n == 2000);
    CHECK(c.data.p_noise == 0.2);
    CHECK(c.methods == std::vector<Method>{Method::erm, Method::brdro});
    CHECK(c.train.adversary_kind == AdversaryKind::linear_l1);
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4, 5});
    REQUIRE(c.sweep.has_value());
    CHECK(c.sweep->values == std::vector<double>{0.1, 1.0});
  }

  TEST_CASE("emit then parse is the identity on random configs") {
    Rng rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> small(1, 80);
    const std::vector<Method> all{Method::erm, Method::cvar, Method::brdro, Method::groupdro, Method::jtt};
    for (int trial = 0; trial < 200; ++trial) {
      ExperimentConfig c;
      auto set = [&c](const char* key, double v) { set_config_value(c, key, format_double(v)); };
      set("data.n", 100 + small(rng) * 37);
      set("data.d_noise", small(rng));
      set("sigma_core", 0.1 + 3 * u(rng));
      set("sigma_spu", 0.1 + 3 * u(rng));
      set("p_maj", u(rng));
      set("p_noise", 0.5 * u(rng));
      const double tr = 0.2 + 0.3 * u(rng);
      const double va = 0.2 * u(rng);
      set("split.train", tr);
      set("split.val", va);
      set("split.test", 1.0 - tr - va);
      set("epochs", small(rng));
      set("lr_learner", 1e-3 + u(rng));
      set("lr_adversary", u(rng));
      set("train.alpha0", 0.01 + 0.99 * u(rng));
      set("beta_l2", u(rng));
      set("beta_vib", u(rng));
      set("weight_floor", 0.2 * u(rng));
      set_config_value(c, "adversary_kind", trial % 3 == 0 ? "vib" : (trial % 3 == 1 ? "linear_l1" : "linear_l2"));
      set_config_value(c, "learner_kind", trial % 2 ? "mlp" : "linear");
      std::string methods;
      for (std::size_t m = 0; m < all.size(); ++m) {
        if (u(rng) < 0.5 || (methods.empty() && m + 1 == all.size())) {
          methods += (methods.empty() ? "" : ",") + std::string(to_string(all[m]));
        }
      }
      set_config_value(c, "method", methods);
      set_config_value(c, "seeds", std::to_string(trial) + "," + std::to_string(trial + 1000));
      if (trial % 2) {
        set_config_value(c, "sweep", "train.beta_l2");
        set_config_value(c, "sweep_values", format_double(u(rng)) + "," + format_double(1.0 + u(rng)));
      }
      set("game.lr_scale", 0.5 + 20 * u(rng));
      set("top_frac", 0.01 + 0.9 * u(rng));
      c.validate();
      CHECK(parse_config_text(emit_config(c)) == c);
    }
  }

  TEST_CASE("every key is emitted and reachable") {
    const std::string text = emit_config(ExperimentConfig{});
    for (const std::string& key : config_keys()) {
      const std::string bare = key.substr(key.find('.') + 1);
      CHECK_MESSAGE(text.find("\n" + bare + " = ") != std::string::npos, key);
    }
  }

  TEST_CASE("repeated runs write identical files") {
    const fs::path a = scratch("det_a");
    const fs::path b = scratch("det_b");
    ExperimentConfig c = tiny(a);
    run_experiment(c, 2);
    c.out_dir = b;
    run_experiment(c, 1);
    auto ta = read_tree(a);
    auto tb = read_tree(b);
    ta.erase("resolved.cfg");
    tb.erase("resolved.cfg");
    CHECK(ta.size() > 10);
    CHECK(ta == tb);
    CHECK(read_file(a / "summary.csv").find('\r') == std::string::npos);
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("resolved config reproduces the run") {
    const fs::path a = scratch("echo_a");
    ExperimentConfig c = tiny(a);
    c.seeds = {4};
    const ExperimentResult first = run_experiment(c);
    ExperimentConfig again = parse_config(a / "resolved.cfg");
    CHECK(again == c);
    const ExperimentResult second = run_experiment(again, 1, false);
    CHECK(summary_csv(first.rows) == summary_csv(second.rows));
    fs::remove_all(a);
  }

  TEST_CASE("grid shape, medians and summary round trip") {
    const fs::path a = scratch("grid");
    ExperimentConfig c = tiny(a);
    c.methods = {Method::erm, Method::cvar};
    c.seeds = {0, 1, 2};
    c.sweep = SweepAxis{"data.p_noise", {0.0, 0.2}};
    const ExperimentResult r = run_experiment(c);
    CHECK(r.rows.size() == 2 * 3 * 2);
    CHECK(r.medians.size() == 2 * 2);
    std::set<std::tuple<int, double, std::uint64_t>> keys;
    for (const auto& row : r.rows) keys.insert({int(row.method), *row.sweep_value, row.seed});
    CHECK(keys.size() == r.rows.size());
    CHECK(fs::exists(a / "runs" / "sweep1_0.2" / "seed_2" / "cvar" / "weights.csv"));
    const auto back = read_summary_csv(a / "summary.csv");
    CHECK(summary_csv(back) == read_file(a / "summary.csv"));
    CHECK(median_csv(median_rows(back)) == read_file(a / "summary_median.csv"));

    ExperimentConfig single = tiny(a);
    single.seeds = {0};
    const ExperimentResult one = run_experiment(single, 1, false);
    CHECK(one.rows.size() == single.methods.size());
    CHECK_FALSE(one.rows.front().sweep_value.has_value());
    fs::remove_all(a);
  }

  TEST_CASE("aborted runs are recorded and the grid continues") {
    const fs::path a = scratch("abort");
    ExperimentConfig c = tiny(a);
    c.seeds = {0};
    c.data.n = 1000;
    c.train.epochs = 20;
    c.methods = {Method::brdro, Method::erm};
    c.train.method = Method::brdro;
    c.train.adversary_kind = AdversaryKind::vib;
    c.train.beta_vib = 1e6;
    const ExperimentResult r = run_experiment(c);
    CHECK(r.aborted == 1);
    CHECK_FALSE(r.rows[0].error.empty());
    CHECK(r.rows[1].error.empty());
    CHECK(read_file(a / "summary.csv").find("aborted") != std::string::npos);
    fs::remove_all(a);
  }

  TEST_CASE("game verdicts") {
    ExperimentConfig c;
    c.game.horizons = {100, 200};
    c.game.burn_in = 500;
    CHECK(run_game(c, false).verdict == Verdict::insufficient_horizon);

    GameSettings s;
    s.burn_in = 10;
    auto run = [](int t, std::uint64_t init, double scaled, double w) {
      GameRun r;
      r.horizon = t;
      r.init_seed = init;
      r.scaled_gap = scaled;
      r.gap = scaled / std::sqrt(double(t));
      r.average.w = Eigen::VectorXd::Constant(2, w);
      r.checkpoints = {{t / 2, 2 * r.gap, {}, {}}, {t, r.gap, {}, {}}};
      return r;
    };
    CHECK(judge_game({run(100, 1, 1.0, 0.3), run(400, 1, 1.5, 0.3)}, s).verdict == Verdict::pass);
    CHECK(judge_game({run(100, 1, 1.0, 0.3), run(400, 1, 2.5, 0.3)}, s).verdict == Verdict::fail);
    CHECK(judge_game({run(100, 1, 1.0, 0.3), run(400, 1, 1.0, 0.3), run(400, 2, 1.0, 0.31)}, s).verdict ==
          Verdict::fail);
    auto rising = run(400, 1, 1.0, 0.3);
    rising.checkpoints[1].gap = 3 * rising.checkpoints[0].gap;
    CHECK(judge_game({run(100, 1, 1.0, 0.3), rising}, s).verdict == Verdict::fail);
  }

  TEST_CASE("gradcheck bundles") {
    const auto bundles = default_bundles();
    const GradcheckSummary pristine = run_gradcheck(bundles);
    CHECK(pristine.passed);
    std::set<std::string> names;
    for (const auto& r : pristine.reports) names.insert(r.bundle);
    CHECK(names.size() == bundles.size());
    CHECK(pristine.reports.size() == bundles.size());

    auto flipped = bundles;
    auto& victim = flipped[3];
    const GradientFn original = victim.gradient;
    victim.gradient = [original](const ParamTree& p) {
      ParamTree g = original(p);
      g.flat(0) = -g.flat(0);
      return g;
    };
    const GradcheckSummary broken = run_gradcheck(flipped);
    CHECK_FALSE(broken.passed);
    std::vector<std::string> failing;
    for (const auto& r : broken.reports) {
      if (!r.passed()) failing.push_back(r.bundle);
    }
    CHECK(failing == std::vector<std::string>{victim.name});
    CHECK(gradcheck_csv(broken).find(victim.name + ",") != std::string::npos);
  }

  TEST_CASE("command line exit codes") {
    const fs::path dir = scratch("exe");
    {
      std::ofstream(dir / "bad.cfg") << "[train]\nlearning_rte = 0.1\n";
      std::ofstream(dir / "abort.cfg") << "[data]\nn = 1000\nd_noise = 5\n[train]\nmethod = brdro\nepochs = 20\n"
                                          "adversary_kind = vib\nbeta_vib = 1e6\n";
      std::ofstream(dir / "tight.cfg") << "[game]\nhorizons = 1000, 4000\nband = 1\n";
      std::ofstream(dir / "ok.cfg") << "[data]\nn = 400\nd_noise = 3\n[train]\nmethod = erm\nepochs = 3\n";
    }
    const std::string d = dir.string();
    CHECK(run_cli("train --config " + d + "/bad.cfg") == 1);
    CHECK(run_cli("train --config " + d + "/missing.cfg") == 1);
    CHECK(run_cli("train --config " + d + "/abort.cfg --out " + d + "/o_abort") == 2);
    CHECK(run_cli("game --config " + d + "/tight.cfg --out " + d + "/o_game") == 3);
    CHECK(run_cli("gradcheck --out " + d + "/o_grad") == 0);
    CHECK(fs::exists(dir / "o_grad" / "gradcheck.csv"));
    CHECK(run_cli("train --config " + d + "/ok.cfg --seed 7 --out " + d + "/o_ok") == 0);
    CHECK(fs::exists(dir / "o_ok" / "runs" / "seed_7" / "erm" / "history.csv"));
    CHECK(run_cli("report --out " + d + "/o_ok") == 0);
    CHECK(run_cli("generate --config " + d + "/ok.cfg --out " + d + "/o_gen") == 0);
    CHECK(fs::exists(dir / "o_gen" / "data" / "seed_0" / "train.csv"));
    CHECK(run_cli("bogus") == 1);
    fs::remove_all(dir);
  }
}
