#include "brdro/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "brdro/csv.hpp"
#include "brdro/errors.hpp"
#include "brdro/metrics.hpp"

namespace brdro {

namespace {

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

constexpr std::uint64_t kSplitStream = 5;
constexpr std::uint64_t kNoiseStream = 6;
constexpr std::uint64_t kGameGroupStream = 7;
constexpr std::uint64_t kGameInitStream = 8;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::filesystem::path cell_dir(const ExperimentConfig& cfg, std::optional<std::size_t> sweep_index,
                               std::uint64_t seed) {
  std::filesystem::path dir = cfg.out_dir / "runs";
  if (sweep_index) {
    dir /= "sweep" + std::to_string(*sweep_index) + "_" + short_double(cfg.sweep->values[*sweep_index]);
  }
  return dir / ("seed_" + std::to_string(seed));
}

double error_set_noise_share(const TrainReport& report, const Dataset& train) {
  if (report.method != Method::jtt) return kNaN;
  if (report.error_set.empty()) return 0.0;
  std::size_t noisy = 0;
  for (std::size_t i : report.error_set) noisy += train[i].is_noisy ? 1 : 0;
  return static_cast<double>(noisy) / static_cast<double>(report.error_set.size());
}

SummaryRow evaluate(const ExperimentConfig& cfg, Method method, std::optional<double> sweep_value,
                    std::uint64_t seed, const CellData& data, const std::filesystem::path* dir) {
  SummaryRow row;
  row.method = method;
  row.sweep_value = sweep_value;
  row.seed = seed;
  TrainConfig tc = cfg.train;
  tc.method = method;
  tc.seed = seed;
  try {
    const TrainReport report = train(data.train, data.test, tc);
    const GroupMetrics gm = group_metrics(report.learner, data.test);
    row.average_accuracy = gm.average;
    row.worst_group_accuracy = gm.worst;
    row.minority_precision = minority_pr(report.weights, data.train, cfg.top_frac).precision;
    row.noisy_capture = noisy_capture(report.weights, data.train, cfg.top_frac);
    if (report.learner.kind == LearnerKind::linear) {
      const FeatureAlignment fa = feature_alignment(report.learner);
      row.core_weight_abs = fa.core_weight_abs;
      row.spu_weight_abs = fa.spu_weight_abs;
    } else {
      row.core_weight_abs = row.spu_weight_abs = kNaN;
    }
    row.mean_kl = report.history.empty() ? 0.0 : report.history.back().mean_kl;
    row.error_set_noisy = error_set_noise_share(report, data.train);

    if (dir) {
      const std::filesystem::path out = *dir / to_string(method);
      write_history_csv(report, out / "history.csv");
      write_weights_csv(report.weights, data.train, out / "weights.csv");
      std::vector<PRPoint> pr;
      for (std::size_t e = 0; e < report.weight_history.size(); ++e) {
        pr.push_back(minority_pr(WeightTable{report.weight_history[e]}, data.train, cfg.top_frac,
                                 static_cast<int>(e) + 1));
      }
      write_pr_csv(pr, out / "pr.csv");
      save_checkpoint(checkpoint_tree(report.learner, report.adversary ? &*report.adversary : nullptr),
                      out / "model.ckpt");
    }
  } catch (const TrainingAborted& e) {
    row.error = e.what();
    row.average_accuracy = row.worst_group_accuracy = row.minority_precision = row.noisy_capture = kNaN;
    row.core_weight_abs = row.spu_weight_abs = row.mean_kl = row.error_set_noisy = kNaN;
  }
  return row;
}

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string csv_value(double v) { return std::isnan(v) ? std::string() : format_double(v); }

double parse_cell(const std::string& s) {
  if (s.empty() || s == "nan") return kNaN;
  return std::stod(s);
}

}  // namespace

CellData make_cell_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  SynthConfig sc = cfg.data;
  sc.seed = seed;
  const double p_noise = sc.p_noise;
  sc.p_noise = 0.0;
  const Dataset all = generate(sc);
  Rng split_rng = make_rng(seed, kSplitStream);
  DatasetSplits parts = split(all, cfg.split, split_rng);
  CellData out{std::move(parts.train), std::move(parts.test)};
  if (p_noise > 0.0) {
    Rng noise_rng = make_rng(seed, kNoiseStream);
    out.train = inject_label_noise(out.train, p_noise, noise_rng);
  }
  return out;
}

ExperimentConfig apply_sweep(const ExperimentConfig& cfg, double value) {
  if (!cfg.sweep) throw UsageError("apply_sweep: the config has no sweep axis");
  ExperimentConfig out = cfg;
  set_config_value(out, cfg.sweep->parameter, format_double(value));
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs, bool write) {
  cfg.validate();
  if (jobs < 1) throw InputError("run_experiment: jobs must be at least 1");
  if (write) write_file_atomic(cfg.out_dir / "resolved.cfg", emit_config(cfg));

  struct Cell {
    std::optional<std::size_t> sweep_index;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  const std::size_t sweeps = cfg.sweep ? cfg.sweep->values.size() : 1;
  for (std::size_t s = 0; s < sweeps; ++s) {
    for (std::uint64_t seed : cfg.seeds) {
      cells.push_back({cfg.sweep ? std::optional<std::size_t>(s) : std::nullopt, seed});
    }
  }

  const std::size_t per_cell = cfg.methods.size();
  std::vector<SummaryRow> rows(cells.size() * per_cell);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    while (true) {
      const std::size_t c = next.fetch_add(1);
      if (c >= cells.size()) return;
      try {
        const Cell& cell = cells[c];
        const std::optional<double> value =
            cell.sweep_index ? std::optional<double>(cfg.sweep->values[*cell.sweep_index]) : std::nullopt;
        const ExperimentConfig local = value ? apply_sweep(cfg, *value) : cfg;
        const CellData data = make_cell_data(local, cell.seed);
        const std::filesystem::path dir = cell_dir(cfg, cell.sweep_index, cell.seed);
        for (std::size_t m = 0; m < per_cell; ++m) {
          rows[c * per_cell + m] = evaluate(local, cfg.methods[m], value, cell.seed, data, write ? &dir : nullptr);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failure) failure = std::current_exception();
        next.store(cells.size());
      }
    }
  };

  const auto threads = static_cast<std::size_t>(std::min<int>(jobs, static_cast<int>(cells.size())));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentResult result;
  result.rows = std::move(rows);
  for (const auto& r : result.rows) result.aborted += r.error.empty() ? 0 : 1;
  result.medians = median_rows(result.rows);
  if (write) {
    write_file_atomic(cfg.out_dir / "summary.csv", summary_csv(result.rows));
    write_file_atomic(cfg.out_dir / "summary_median.csv", median_csv(result.medians));
  }
  return result;
}

std::vector<MedianRow> median_rows(const std::vector<SummaryRow>& rows) {
  // Keyed by first appearance so the output follows the row order.
  std::vector<std::pair<Method, std::optional<double>>> keys;
  std::map<std::pair<int, double>, std::vector<const SummaryRow*>> groups;
  for (const auto& r : rows) {
    const std::pair<int, double> k{static_cast<int>(r.method), r.sweep_value.value_or(kNaN)};
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return g.first.first == k.first &&
             (g.first.second == k.second || (std::isnan(g.first.second) && std::isnan(k.second)));
    });
    if (it == groups.end()) {
      keys.emplace_back(r.method, r.sweep_value);
      it = groups.emplace(k, std::vector<const SummaryRow*>{}).first;
    }
    if (r.error.empty()) it->second.push_back(&r);
  }
  std::vector<MedianRow> out;
  for (const auto& [method, value] : keys) {
    const std::pair<int, double> k{static_cast<int>(method), value.value_or(kNaN)};
    const auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return g.first.first == k.first &&
             (g.first.second == k.second || (std::isnan(g.first.second) && std::isnan(k.second)));
    });
    const auto& members = it->second;
    auto collect = [&members](double SummaryRow::*field) {
      std::vector<double> v;
      for (const SummaryRow* r : members) v.push_back(r->*field);
      return median(v);
    };
    MedianRow m;
    m.method = method;
    m.sweep_value = value;
    m.runs = members.size();
    m.average_accuracy = collect(&SummaryRow::average_accuracy);
    m.worst_group_accuracy = collect(&SummaryRow::worst_group_accuracy);
    m.minority_precision = collect(&SummaryRow::minority_precision);
    m.noisy_capture = collect(&SummaryRow::noisy_capture);
    m.core_weight_abs = collect(&SummaryRow::core_weight_abs);
    m.spu_weight_abs = collect(&SummaryRow::spu_weight_abs);
    m.mean_kl = collect(&SummaryRow::mean_kl);
    m.error_set_noisy = collect(&SummaryRow::error_set_noisy);
    out.push_back(m);
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    std::string status = r.error.empty() ? "ok" : "aborted: " + r.error;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << to_string(r.method) << ',' << (r.sweep_value ? format_double(*r.sweep_value) : "") << ',' << r.seed
        << ',' << csv_value(r.average_accuracy) << ',' << csv_value(r.worst_group_accuracy) << ','
        << csv_value(r.minority_precision) << ',' << csv_value(r.noisy_capture) << ','
        << csv_value(r.core_weight_abs) << ',' << csv_value(r.spu_weight_abs) << ',' << csv_value(r.mean_kl)
        << ',' << csv_value(r.error_set_noisy) << ',' << status << '\n';
  }
  return out.str();
}

std::string median_csv(const std::vector<MedianRow>& rows) {
  std::ostringstream out;
  out << kMedianHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.method) << ',' << (r.sweep_value ? format_double(*r.sweep_value) : "") << ',' << r.runs
        << ',' << csv_value(r.average_accuracy) << ',' << csv_value(r.worst_group_accuracy) << ','
        << csv_value(r.minority_precision) << ',' << csv_value(r.noisy_capture) << ','
        << csv_value(r.core_weight_abs) << ',' << csv_value(r.spu_weight_abs) << ',' << csv_value(r.mean_kl)
        << ',' << csv_value(r.error_set_noisy) << '\n';
  }
  return out.str();
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw InputError("summary file not found: " + path.string());
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kSummaryHeader) {
    throw InputError(path.string() + ": unexpected summary header");
  }
  std::vector<SummaryRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 12) {
      throw InputError(path.string() + ": line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                       " fields, expected 12");
    }
    try {
      SummaryRow r;
      r.method = parse_method(f[0]);
      if (!f[1].empty()) r.sweep_value = std::stod(f[1]);
      r.seed = std::stoull(f[2]);
      r.average_accuracy = parse_cell(f[3]);
      r.worst_group_accuracy = parse_cell(f[4]);
      r.minority_precision = parse_cell(f[5]);
      r.noisy_capture = parse_cell(f[6]);
      r.core_weight_abs = parse_cell(f[7]);
      r.spu_weight_abs = parse_cell(f[8]);
      r.mean_kl = parse_cell(f[9]);
      r.error_set_noisy = parse_cell(f[10]);
      if (f[11] != "ok") r.error = f[11];
      rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw InputError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

// ---- game ---------------------------------------------------------------

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::insufficient_horizon:
      return "insufficient horizon";
  }
  return "?";
}

GameReport judge_game(std::vector<GameRun> runs, const GameSettings& settings) {
  // Gaps at this level are solver noise rather than a rate.
  constexpr double kConverged = 1e-6;
  GameReport report;
  report.runs = std::move(runs);
  std::ostringstream msg;

  std::map<std::uint64_t, std::vector<const GameRun*>> by_init;
  for (const auto& r : report.runs) {
    if (r.horizon >= settings.burn_in) by_init[r.init_seed].push_back(&r);
  }
  std::size_t horizons_checked = 0;
  for (auto& [seed, list] : by_init) {
    horizons_checked = std::max(horizons_checked, list.size());
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    bool all_converged = true;
    for (const GameRun* r : list) {
      if (r->gap > kConverged) all_converged = false;
      lo = std::min(lo, r->scaled_gap);
      hi = std::max(hi, r->scaled_gap);
      for (std::size_t i = 1; i < r->checkpoints.size(); ++i) {
        const auto& prev = r->checkpoints[i - 1];
        const auto& cur = r->checkpoints[i];
        if (prev.t * 10 < r->horizon) continue;
        if (cur.gap > kConverged && cur.gap > 1.05 * prev.gap) report.monotone = false;
      }
    }
    if (!all_converged && lo > 0.0) report.band_ratio = std::max(report.band_ratio, hi / lo);
    if (!all_converged && !(lo > 0.0)) report.band_ratio = std::numeric_limits<double>::infinity();
  }

  if (horizons_checked < 2) {
    report.verdict = Verdict::insufficient_horizon;
    msg << "fewer than two horizons at or above the burn-in of " << settings.burn_in << " steps";
    report.message = msg.str();
    return report;
  }

  int longest = 0;
  for (const auto& r : report.runs) longest = std::max(longest, r.horizon);
  std::vector<const GameRun*> finals;
  for (const auto& r : report.runs) {
    if (r.horizon == longest) finals.push_back(&r);
  }
  for (std::size_t i = 0; i < finals.size(); ++i) {
    for (std::size_t j = i + 1; j < finals.size(); ++j) {
      const GamePlayer& a = finals[i]->average;
      const GamePlayer& b = finals[j]->average;
      double d = std::abs(a.b - b.b);
      if (a.w.size() == b.w.size() && a.w.size() > 0) d = std::max(d, (a.w - b.w).cwiseAbs().maxCoeff());
      report.uniqueness_diff = std::max(report.uniqueness_diff, d);
    }
  }

  const bool band_ok = report.band_ratio <= settings.band;
  const bool unique_ok = report.uniqueness_diff < settings.uniqueness_tol;
  report.verdict = band_ok && unique_ok && report.monotone ? Verdict::pass : Verdict::fail;
  msg << "band ratio " << short_num(report.band_ratio) << (band_ok ? " <= " : " > ")
      << format_double(settings.band) << "; uniqueness " << short_num(report.uniqueness_diff)
      << (unique_ok ? " < " : " >= ") << format_double(settings.uniqueness_tol) << "; checkpoints "
      << (report.monotone ? "non-increasing" : "not non-increasing") << " after T/10";
  report.message = msg.str();
  return report;
}

GameReport run_game(const ExperimentConfig& cfg, bool write) {
  cfg.validate();
  const GameSettings& gs = cfg.game;
  SynthConfig sc = cfg.data;
  sc.n = static_cast<int>(gs.n);
  sc.d_noise = static_cast<int>(gs.d_noise);
  sc.p_noise = 0.0;
  sc.seed = gs.seed;
  const Dataset ds = generate(sc);
  const std::filesystem::path dir = cfg.out_dir / "game";

  std::vector<GameRun> runs;
  for (int horizon : gs.horizons) {
    Rng group_rng = make_rng(gs.seed, kGameGroupStream);
    const FiniteGame game = make_game(ds, gs.groups, gs.l2_reg, gs.alpha0, horizon, group_rng);
    std::vector<int> marks{horizon / 8, horizon / 4, horizon / 2, horizon};
    for (std::uint64_t init_seed : gs.init_seeds) {
      Rng init_rng = make_rng(init_seed, kGameInitStream);
      const GamePlayer init = random_player(game.dim(), gs.init_std, init_rng);
      GameTrace trace = play_game(game, gs.lr_scale / std::sqrt(static_cast<double>(horizon)), marks, init);
      GameRun run;
      run.horizon = horizon;
      run.init_seed = init_seed;
      run.gap = trace.checkpoints.back().gap;
      run.scaled_gap = run.gap * std::sqrt(static_cast<double>(horizon));
      run.average = trace.average;
      run.checkpoints = trace.checkpoints;
      if (write) {
        write_game_trace_csv(trace, dir / ("trace_T" + std::to_string(horizon) + "_init" +
                                           std::to_string(init_seed) + ".csv"));
      }
      runs.push_back(std::move(run));
    }
  }

  GameReport report = judge_game(std::move(runs), gs);
  if (write) {
    std::ostringstream summary;
    summary << "horizon,init_seed,gap,gap_sqrt_t\n";
    for (const auto& r : report.runs) {
      summary << r.horizon << ',' << r.init_seed << ',' << format_double(r.gap) << ','
              << format_double(r.scaled_gap) << '\n';
    }
    write_file_atomic(dir / "summary.csv", summary.str());
    write_file_atomic(dir / "verdict.txt", std::string(to_string(report.verdict)) + "\n" + report.message + "\n");
  }
  return report;
}

}  // namespace brdro
