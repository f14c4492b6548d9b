// brdro: config-driven runner for data generation, training, sweeps, the
// finite game, gradient checks and summary reports.
//
// Exit codes: 0 success, 1 invalid config or usage, 2 training abort,
// 3 a built-in verdict failed.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "brdro/bundles.hpp"
#include "brdro/config.hpp"
#include "brdro/csv.hpp"
#include "brdro/errors.hpp"
#include "brdro/experiment.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kAbort = 2, kVerdict = 3 };

struct Options {
  std::string config;
  std::string out;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
};

brdro::ExperimentConfig load(const Options& o) {
  brdro::ExperimentConfig cfg = o.config.empty() ? brdro::ExperimentConfig{} : brdro::parse_config(o.config);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed) cfg.seeds = {*o.seed};
  cfg.validate();
  return cfg;
}

std::string cell(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void print_medians(const std::vector<brdro::MedianRow>& rows) {
  std::printf("%-9s %-10s %4s %8s %8s %8s %8s %8s %8s\n", "method", "sweep", "runs", "avg", "worst", "min_prec",
              "noisy@", "core", "spu");
  for (const auto& r : rows) {
    char sweep[32] = "-";
    if (r.sweep_value) std::snprintf(sweep, sizeof sweep, "%g", *r.sweep_value);
    std::printf("%-9s %-10s %4zu %8s %8s %8s %8s %8s %8s\n", brdro::to_string(r.method), sweep, r.runs,
                cell(r.average_accuracy).c_str(), cell(r.worst_group_accuracy).c_str(),
                cell(r.minority_precision).c_str(), cell(r.noisy_capture).c_str(), cell(r.core_weight_abs).c_str(),
                cell(r.spu_weight_abs).c_str());
  }
}

int finish_experiment(const brdro::ExperimentResult& result, const brdro::ExperimentConfig& cfg) {
  print_medians(result.medians);
  std::printf("wrote %s\n", (cfg.out_dir / "summary.csv").string().c_str());
  if (result.aborted > 0) {
    for (const auto& r : result.rows) {
      if (!r.error.empty()) {
        std::fprintf(stderr, "aborted: %s seed %llu: %s\n", brdro::to_string(r.method),
                     static_cast<unsigned long long>(r.seed), r.error.c_str());
      }
    }
    return kAbort;
  }
  return kOk;
}

int cmd_generate(const Options& o) {
  const auto cfg = load(o);
  for (std::uint64_t seed : cfg.seeds) {
    const auto data = brdro::make_cell_data(cfg, seed);
    const auto dir = cfg.out_dir / "data" / ("seed_" + std::to_string(seed));
    brdro::write_dataset_csv(data.train, dir / "train.csv");
    brdro::write_dataset_csv(data.test, dir / "test.csv");
    std::printf("seed %llu: %zu train, %zu test -> %s\n", static_cast<unsigned long long>(seed), data.train.size(),
                data.test.size(), dir.string().c_str());
  }
  brdro::write_file_atomic(cfg.out_dir / "resolved.cfg", brdro::emit_config(cfg));
  return kOk;
}

int cmd_train(const Options& o) {
  auto cfg = load(o);
  cfg.sweep.reset();
  return finish_experiment(brdro::run_experiment(cfg, o.jobs), cfg);
}

int cmd_sweep(const Options& o) {
  const auto cfg = load(o);
  if (!cfg.sweep) std::fprintf(stderr, "note: no sweep axis configured, running a single cell\n");
  return finish_experiment(brdro::run_experiment(cfg, o.jobs), cfg);
}

int cmd_game(const Options& o) {
  const auto cfg = load(o);
  const auto report = brdro::run_game(cfg);
  std::printf("%8s %6s %14s %14s\n", "T", "init", "gap", "gap*sqrt(T)");
  for (const auto& r : report.runs) {
    std::printf("%8d %6llu %14.6e %14.6f\n", r.horizon, static_cast<unsigned long long>(r.init_seed), r.gap,
                r.scaled_gap);
  }
  std::printf("verdict: %s (%s)\n", brdro::to_string(report.verdict), report.message.c_str());
  return report.verdict == brdro::Verdict::fail ? kVerdict : kOk;
}

int cmd_gradcheck(const Options& o) {
  const std::uint64_t seed = o.seed.value_or(0);
  const auto summary = brdro::run_gradcheck(brdro::default_bundles(seed), seed);
  for (const auto& r : summary.reports) {
    std::printf("%-24s %12.3e %4d %s\n", r.bundle.c_str(), r.max_rel_error, r.probe_count,
                r.passed() ? "pass" : "FAIL");
  }
  if (!o.out.empty()) {
    brdro::write_file_atomic(std::filesystem::path(o.out) / "gradcheck.csv", brdro::gradcheck_csv(summary));
  }
  return summary.passed ? kOk : kVerdict;
}

int cmd_report(const Options& o) {
  std::filesystem::path dir = o.out;
  if (dir.empty()) dir = o.config.empty() ? std::filesystem::path("out") : load(o).out_dir;
  const auto rows = brdro::read_summary_csv(dir / "summary.csv");
  print_medians(brdro::median_rows(rows));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bitrate-constrained DRO experiments on synthetic group-shift data"};
  app.require_subcommand(1);
  Options opts;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool with_jobs) {
    sub->add_option("--config", opts.config, "Config file (key = value with [section] headers)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "Output directory (overrides experiment.out_dir)");
    sub->add_option("--seed", seed, "Run this single seed instead of experiment.seeds");
    if (with_jobs) sub->add_option("--jobs", opts.jobs, "Parallel cells")->check(CLI::PositiveNumber);
  };

  struct Entry {
    CLI::App* app;
    int (*run)(const Options&);
  };
  std::vector<Entry> entries;
  auto sub = [&](const char* name, const char* help, int (*run)(const Options&), bool jobs) {
    CLI::App* s = app.add_subcommand(name, help);
    add_common(s, jobs);
    entries.push_back({s, run});
  };
  sub("generate", "Write train/test CSVs for each seed", cmd_generate, false);
  sub("train", "Train every configured method (sweep axis ignored)", cmd_train, true);
  sub("sweep", "Train over the sweep axis x seeds", cmd_sweep, true);
  sub("game", "Run the finite game and its rate check", cmd_game, false);
  sub("gradcheck", "Finite-difference check of every analytic gradient", cmd_gradcheck, false);
  sub("report", "Print per-method medians from summary.csv", cmd_report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  for (const auto& e : entries) {
    if (!e.app->parsed()) continue;
    if (e.app->count("--seed") > 0) opts.seed = seed;
    try {
      return e.run(opts);
    } catch (const brdro::TrainingAborted& ex) {
      std::cerr << "training aborted: " << ex.what() << '\n';
      return kAbort;
    } catch (const brdro::ConfigError& ex) {
      std::cerr << "config error: " << ex.what() << '\n';
      return kConfig;
    } catch (const std::invalid_argument& ex) {
      std::cerr << "invalid input: " << ex.what() << '\n';
      return kConfig;
    } catch (const std::exception& ex) {
      std::cerr << "error: " << ex.what() << '\n';
      return kConfig;
    }
  }
  return kConfig;
}
