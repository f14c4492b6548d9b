#include "brdro/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "brdro/csv.hpp"
#include "brdro/errors.hpp"

namespace brdro {

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("SynthConfig: " + msg); };
  if (n <= 0) fail("n must be positive");
  if (d_noise < 0) fail("d_noise must be nonnegative");
  if (!(sigma_core > 0.0)) fail("sigma_core must be positive");
  if (!(sigma_spu > 0.0)) fail("sigma_spu must be positive");
  if (!(sigma_noise > 0.0)) fail("sigma_noise must be positive");
  if (!(p_maj >= 0.0 && p_maj <= 1.0)) fail("p_maj must lie in [0, 1]");
  if (!(p_noise >= 0.0 && p_noise <= 1.0)) fail("p_noise must lie in [0, 1]");
}

int group_of(int y_clean, int a) {
  if ((y_clean != 1 && y_clean != -1) || (a != 1 && a != -1)) {
    throw InputError("group_of: labels must be -1 or +1");
  }
  return 2 * (y_clean == 1 ? 1 : 0) + (a == y_clean ? 1 : 0);
}

GroupStructure compute_groups(const std::vector<Example>& examples) {
  std::array<std::vector<std::size_t>, kNumGroups> members;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    members[static_cast<std::size_t>(examples[i].group)].push_back(i);
  }
  GroupStructure gs;
  for (int k = 0; k < kNumGroups; ++k) {
    auto& m = members[static_cast<std::size_t>(k)];
    gs.counts[static_cast<std::size_t>(k)] = m.size();
    if (!m.empty()) {
      gs.groups.push_back({k, std::move(m)});
    }
  }
  return gs;
}

Dataset::Dataset(std::vector<Example> examples, SynthConfig provenance, bool noise_injected)
    : examples_(std::move(examples)),
      groups_(compute_groups(examples_)),
      provenance_(provenance),
      noise_injected_(noise_injected) {}

Eigen::Index Dataset::feature_dim() const {
  return examples_.empty() ? kNoiseOffset + provenance_.d_noise : examples_.front().x.size();
}

double Dataset::minority_fraction() const {
  if (examples_.empty()) return 0.0;
  const auto count = std::count_if(examples_.begin(), examples_.end(),
                                   [](const Example& e) { return e.is_minority(); });
  return static_cast<double>(count) / static_cast<double>(examples_.size());
}

double Dataset::noisy_fraction() const {
  if (examples_.empty()) return 0.0;
  const auto count = std::count_if(examples_.begin(), examples_.end(),
                                   [](const Example& e) { return e.is_noisy; });
  return static_cast<double>(count) / static_cast<double>(examples_.size());
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    out.push_back(examples_.at(i));
  }
  return Dataset(std::move(out), provenance_, noise_injected_);
}

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution majority(cfg.p_maj);
  std::bernoulli_distribution flip(cfg.p_noise);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise_scale = cfg.d_noise > 0 ? cfg.sigma_noise / std::sqrt(static_cast<double>(cfg.d_noise)) : 0.0;

  std::vector<Example> examples;
  examples.reserve(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    Example e;
    e.y_clean = coin(rng) ? 1 : -1;
    e.a = majority(rng) ? e.y_clean : -e.y_clean;
    e.x.resize(kNoiseOffset + cfg.d_noise);
    e.x[kCoreIndex] = e.y_clean + cfg.sigma_core * normal(rng);
    e.x[kSpuriousIndex] = e.a + cfg.sigma_spu * normal(rng);
    for (int j = 0; j < cfg.d_noise; ++j) {
      e.x[kNoiseOffset + j] = noise_scale * normal(rng);
    }
    e.is_noisy = flip(rng);
    e.y = e.is_noisy ? -e.y_clean : e.y_clean;
    e.group = group_of(e.y_clean, e.a);
    examples.push_back(std::move(e));
  }
  return Dataset(std::move(examples), cfg, cfg.p_noise > 0.0);
}

Dataset inject_label_noise(const Dataset& ds, double p_noise, Rng& rng) {
  if (!(p_noise >= 0.0 && p_noise <= 1.0)) {
    throw InputError("inject_label_noise: p_noise must lie in [0, 1]");
  }
  const bool any_noisy = std::any_of(ds.examples().begin(), ds.examples().end(),
                                     [](const Example& e) { return e.is_noisy; });
  if (ds.noise_injected() || any_noisy) {
    throw UsageError("inject_label_noise: dataset already carries label noise");
  }
  std::bernoulli_distribution flip(p_noise);
  std::vector<Example> out = ds.examples();
  for (auto& e : out) {
    e.is_noisy = flip(rng);
    e.y = e.is_noisy ? -e.y_clean : e.y_clean;
  }
  SynthConfig prov = ds.provenance();
  prov.p_noise = p_noise;
  return Dataset(std::move(out), prov, true);
}

DatasetSplits split(const Dataset& ds, const SplitFractions& f, Rng& rng) {
  const double sum = f.train + f.val + f.test;
  if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0 || std::abs(sum - 1.0) > 1e-9) {
    throw InputError("split: fractions must be nonnegative and sum to 1");
  }
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n))));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n))));
  auto take = [&](std::size_t from, std::size_t count) {
    return ds.subset(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(from),
                                              order.begin() + static_cast<std::ptrdiff_t>(from + count)));
  };
  return {take(0, n_train), take(n_train, n_val), take(n_train + n_val, n - n_train - n_val)};
}

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  const Eigen::Index dim = ds.feature_dim();
  std::ostringstream out;
  for (Eigen::Index j = 0; j < dim; ++j) {
    out << "x_" << j << ',';
  }
  out << "y,y_clean,a,group,is_noisy\n";
  for (const auto& e : ds.examples()) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      out << format_double(e.x[j]) << ',';
    }
    out << e.y << ',' << e.y_clean << ',' << e.a << ',' << e.group << ',' << (e.is_noisy ? 1 : 0) << '\n';
  }
  write_file_atomic(path, out.str());
}

namespace {

int parse_int(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw InputError("dataset csv: bad integer for " + what + ": '" + s + "'");
  }
  if (pos != s.size()) throw InputError("dataset csv: bad integer for " + what + ": '" + s + "'");
  return v;
}

}  // namespace

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) {
    throw InputError("dataset csv: empty file " + path.string());
  }
  const auto header = split_fields(line);
  if (header.size() < 7 || header[header.size() - 5] != "y") {
    throw InputError("dataset csv: unexpected header in " + path.string());
  }
  const auto dim = static_cast<Eigen::Index>(header.size() - 5);
  std::vector<Example> examples;
  bool any_noisy = false;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw InputError("dataset csv: row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(header.size()));
    }
    Example e;
    e.x.resize(dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      e.x[j] = std::stod(fields[static_cast<std::size_t>(j)]);
    }
    const auto base = static_cast<std::size_t>(dim);
    e.y = parse_int(fields[base], "y");
    e.y_clean = parse_int(fields[base + 1], "y_clean");
    e.a = parse_int(fields[base + 2], "a");
    e.group = parse_int(fields[base + 3], "group");
    e.is_noisy = parse_int(fields[base + 4], "is_noisy") != 0;
    if (e.group != group_of(e.y_clean, e.a) || e.is_noisy != (e.y != e.y_clean)) {
      throw InputError("dataset csv: inconsistent labels on row " + std::to_string(row));
    }
    any_noisy = any_noisy || e.is_noisy;
    examples.push_back(std::move(e));
  }
  SynthConfig prov;
  prov.n = static_cast<int>(examples.size());
  prov.d_noise = static_cast<int>(dim - kNoiseOffset);
  return Dataset(std::move(examples), prov, any_noisy);
}

}  // namespace brdro
