#include "brdro/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "brdro/csv.hpp"
#include "brdro/errors.hpp"

namespace brdro {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view why) {
  throw ConfigError("invalid value for '" + std::string(key) + "': '" + std::string(value) + "' (" +
                    std::string(why) + ")");
}

double to_double(std::string_view key, std::string_view text) {
  const std::string_view t = trim(text);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || end != t.data() + t.size()) bad_value(key, text, "expected a number");
  if (!std::isfinite(v)) bad_value(key, text, "must be finite");
  return v;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view text) {
  const std::string_view t = trim(text);
  Int v{};
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || end != t.data() + t.size()) bad_value(key, text, "expected an integer");
  return v;
}

std::vector<std::string_view> to_list(std::string_view text) {
  std::vector<std::string_view> out;
  if (trim(text).empty()) return out;
  std::size_t from = 0;
  while (true) {
    const std::size_t comma = text.find(',', from);
    out.push_back(trim(text.substr(from, comma == std::string_view::npos ? std::string_view::npos : comma - from)));
    if (comma == std::string_view::npos) break;
    from = comma + 1;
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

std::string fmt_int(long long v) { return std::to_string(v); }

template <typename E, typename Parse>
E to_enum(std::string_view key, std::string_view text, Parse&& parse) {
  try {
    return parse(trim(text));
  } catch (const InputError&) {
    bad_value(key, text, "unknown name");
  }
}

struct Key {
  std::string section;
  std::string name;
  bool numeric = false;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;

  std::string qualified() const { return section + "." + name; }
};

#define BRDRO_DOUBLE(sec, field, expr)                                                                       \
  Key {                                                                                                      \
    sec, #field, true, [](const ExperimentConfig& c) { return format_double(c.expr); },                     \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.expr = to_double(k, v); }        \
  }
#define BRDRO_INT(sec, field, expr, type)                                                                    \
  Key {                                                                                                      \
    sec, #field, true, [](const ExperimentConfig& c) { return std::to_string(c.expr); },                    \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.expr = to_int<type>(k, v); }     \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back(BRDRO_INT("data", n, data.n, int));
    k.push_back(BRDRO_INT("data", d_noise, data.d_noise, int));
    k.push_back(BRDRO_DOUBLE("data", sigma_core, data.sigma_core));
    k.push_back(BRDRO_DOUBLE("data", sigma_spu, data.sigma_spu));
    k.push_back(BRDRO_DOUBLE("data", sigma_noise, data.sigma_noise));
    k.push_back(BRDRO_DOUBLE("data", p_maj, data.p_maj));
    k.push_back(BRDRO_DOUBLE("data", p_noise, data.p_noise));

    k.push_back(BRDRO_DOUBLE("split", train, split.train));
    k.push_back(BRDRO_DOUBLE("split", val, split.val));
    k.push_back(BRDRO_DOUBLE("split", test, split.test));

    k.push_back(Key{"train", "method", false,
                    [](const ExperimentConfig& c) {
                      return join(c.methods, [](Method m) { return std::string(to_string(m)); });
                    },
                    [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                      std::vector<Method> methods;
                      for (auto item : to_list(v)) methods.push_back(to_enum<Method>(key, item, parse_method));
                      if (methods.empty()) bad_value(key, v, "at least one method is required");
                      c.methods = methods;
                      c.train.method = methods.front();
                    }});
    k.push_back(BRDRO_INT("train", epochs, train.epochs, int));
    k.push_back(BRDRO_INT("train", batch_size, train.batch_size, int));
    k.push_back(BRDRO_DOUBLE("train", lr_learner, train.lr_learner));
    k.push_back(BRDRO_DOUBLE("train", lr_adversary, train.lr_adversary));
    k.push_back(BRDRO_DOUBLE("train", alpha0, train.alpha0));
    k.push_back(BRDRO_DOUBLE("train", eta_top_frac, train.eta_top_frac));
    k.push_back(BRDRO_DOUBLE("train", beta_vib, train.beta_vib));
    k.push_back(BRDRO_DOUBLE("train", beta_l2, train.beta_l2));
    k.push_back(BRDRO_DOUBLE("train", beta_l1, train.beta_l1));
    k.push_back(Key{"train", "adversary_kind", false,
                    [](const ExperimentConfig& c) { return std::string(to_string(c.train.adversary_kind)); },
                    [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                      c.train.adversary_kind = to_enum<AdversaryKind>(key, v, parse_adversary_kind);
                    }});
    k.push_back(BRDRO_DOUBLE("train", groupdro_step, train.groupdro_step));
    k.push_back(BRDRO_INT("train", jtt_id_epochs, train.jtt_id_epochs, int));
    k.push_back(BRDRO_DOUBLE("train", jtt_lambda_up, train.jtt_lambda_up));
    k.push_back(BRDRO_DOUBLE("train", jtt_l2_reg, train.jtt_l2_reg));
    k.push_back(BRDRO_DOUBLE("train", weight_floor, train.weight_floor));
    k.push_back(Key{"train", "learner_kind", false,
                    [](const ExperimentConfig& c) { return std::string(to_string(c.train.learner_kind)); },
                    [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                      c.train.learner_kind = to_enum<LearnerKind>(key, v, parse_learner_kind);
                    }});
    k.push_back(BRDRO_INT("train", hidden_dim, train.hidden_dim, int));
    k.push_back(BRDRO_DOUBLE("train", l2_reg, train.l2_reg));
    k.push_back(BRDRO_INT("train", latent_dim, train.latent_dim, int));
    k.push_back(BRDRO_DOUBLE("train", init_std, train.init_std));
    k.push_back(BRDRO_DOUBLE("train", adversary_init_std, train.adversary_init_std));

    k.push_back(Key{"experiment", "out_dir", false, [](const ExperimentConfig& c) { return c.out_dir.string(); },
                    [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                      if (trim(v).empty()) bad_value(key, v, "must not be empty");
                      c.out_dir = std::string(trim(v));
                    }});
    k.push_back(Key{"experiment", "seeds", false,
                    [](const ExperimentConfig& c) {
                      return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
                    },
                    [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                      std::vector<std::uint64_t> seeds;
                      for (auto item : to_list(v)) seeds.push_back(to_int<std::uint64_t>(key, item));
                      c.seeds = seeds;
                    }});
    k.push_back(Key{"experiment", "sweep", false,
                    [](const ExperimentConfig& c) { return c.sweep ? c.sweep->parameter : std::string(); },
                    [](ExperimentConfig& c, std::string_view, std::string_view v) {
                      const std::string name(trim(v));
                      if (name.empty()) {
                        c.sweep.reset();
                        return;
                      }
                      if (!c.sweep) c.sweep.emplace();
                      c.sweep->parameter = name;
                    }});
    k.push_back(Key{"experiment", "sweep_values", false,
                    [](const ExperimentConfig& c) {
                      return c.sweep ? join(c.sweep->values, format_double) : std::string();
                    },
                    [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                      std::vector<double> values;
                      for (auto item : to_list(v)) values.push_back(to_double(key, item));
                      if (values.empty() && !c.sweep) return;
                      if (!c.sweep) c.sweep.emplace();
                      c.sweep->values = values;
                    }});
    k.push_back(BRDRO_DOUBLE("experiment", top_frac, top_frac));

    k.push_back(BRDRO_INT("game", n, game.n, std::size_t));
    k.push_back(BRDRO_INT("game", d_noise, game.d_noise, std::size_t));
    k.push_back(BRDRO_INT("game", groups, game.groups, std::size_t));
    k.push_back(BRDRO_DOUBLE("game", l2_reg, game.l2_reg));
    k.push_back(BRDRO_DOUBLE("game", alpha0, game.alpha0));
    k.push_back(Key{"game", "horizons", false,
                    [](const ExperimentConfig& c) { return join(c.game.horizons, fmt_int); },
                    [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                      std::vector<int> hs;
                      for (auto item : to_list(v)) hs.push_back(to_int<int>(key, item));
                      c.game.horizons = hs;
                    }});
    k.push_back(BRDRO_DOUBLE("game", lr_scale, game.lr_scale));
    k.push_back(BRDRO_DOUBLE("game", init_std, game.init_std));
    k.push_back(Key{"game", "init_seeds", false,
                    [](const ExperimentConfig& c) {
                      return join(c.game.init_seeds, [](std::uint64_t s) { return std::to_string(s); });
                    },
                    [](ExperimentConfig& c, std::string_view key, std::string_view v) {
                      std::vector<std::uint64_t> seeds;
                      for (auto item : to_list(v)) seeds.push_back(to_int<std::uint64_t>(key, item));
                      c.game.init_seeds = seeds;
                    }});
    k.push_back(BRDRO_INT("game", burn_in, game.burn_in, int));
    k.push_back(BRDRO_INT("game", seed, game.seed, std::uint64_t));
    k.push_back(BRDRO_DOUBLE("game", band, game.band));
    k.push_back(BRDRO_DOUBLE("game", uniqueness_tol, game.uniqueness_tol));
    return k;
  }();
  return keys;
}

#undef BRDRO_DOUBLE
#undef BRDRO_INT

const std::vector<std::string>& section_names() {
  static const std::vector<std::string> names{"data", "split", "train", "experiment", "game"};
  return names;
}

const Key& resolve(std::string_view section, std::string_view name) {
  const auto& keys = key_table();
  if (section.empty()) {
    const std::size_t dot = name.find('.');
    if (dot != std::string_view::npos) return resolve(name.substr(0, dot), name.substr(dot + 1));
    const Key* found = nullptr;
    for (const auto& k : keys) {
      if (k.name != name) continue;
      if (found) {
        throw ConfigError("ambiguous key '" + std::string(name) + "': qualify it as " + found->qualified() +
                          " or " + k.qualified());
      }
      found = &k;
    }
    if (!found) throw ConfigError("unknown key '" + std::string(name) + "'");
    return *found;
  }
  for (const auto& k : keys) {
    if (k.section == section && k.name == name) return k;
  }
  if (std::find(section_names().begin(), section_names().end(), section) == section_names().end()) {
    throw ConfigError("unknown section '" + std::string(section) + "' for key '" + std::string(name) + "'");
  }
  throw ConfigError("unknown key '" + std::string(name) + "' in section [" + std::string(section) + "]");
}

void rethrow_as_config(const std::function<void()>& f) {
  try {
    f();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(k.qualified());
  return out;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  resolve("", key).set(cfg, key, value);
}

void ExperimentConfig::validate() const {
  rethrow_as_config([this] { data.validate(); });
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };

  const double parts[] = {split.train, split.val, split.test};
  for (double p : parts) {
    if (!(p >= 0.0)) fail("invalid value for split fractions: must be nonnegative");
  }
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    fail("invalid value for split fractions: train + val + test must equal 1");
  }
  if (!(split.train > 0.0)) fail("invalid value for 'train': the train split must be nonempty");

  if (methods.empty()) fail("invalid value for 'method': at least one method is required");
  if (train.method != methods.front()) fail("internal: train.method differs from the first listed method");
  std::set<Method> unique_methods(methods.begin(), methods.end());
  if (unique_methods.size() != methods.size()) fail("invalid value for 'method': methods must be distinct");
  for (Method m : methods) {
    TrainConfig t = train;
    t.method = m;
    rethrow_as_config([&t] { t.validate(); });
  }

  if (seeds.empty()) fail("invalid value for 'seeds': at least one seed is required");
  std::set<std::uint64_t> unique_seeds(seeds.begin(), seeds.end());
  if (unique_seeds.size() != seeds.size()) fail("invalid value for 'seeds': seeds must be distinct");
  if (!(top_frac > 0.0 && top_frac < 1.0)) fail("invalid value for 'top_frac': must lie in (0, 1)");

  if (sweep) {
    const Key* key = nullptr;
    try {
      key = &resolve("", sweep->parameter);
    } catch (const ConfigError& e) {
      fail("invalid value for 'sweep': " + std::string(e.what()));
    }
    if (!key->numeric || key->section == "experiment" || key->section == "game") {
      fail("invalid value for 'sweep': '" + sweep->parameter + "' is not a sweepable numeric key");
    }
    if (sweep->values.empty()) fail("invalid value for 'sweep_values': a sweep needs at least one value");
    std::set<double> unique_values(sweep->values.begin(), sweep->values.end());
    if (unique_values.size() != sweep->values.size()) fail("invalid value for 'sweep_values': values must be distinct");
    for (double v : sweep->values) {
      ExperimentConfig probe = *this;
      probe.sweep.reset();
      key->set(probe, key->qualified(), format_double(v));
      probe.validate();
    }
  }

  if (game.groups < 2) fail("invalid value for 'groups': the game needs at least two groups");
  if (game.n < 4) fail("invalid value for game 'n': need at least four examples");
  if (!(game.l2_reg > 0.0)) fail("invalid value for game 'l2_reg': must be positive");
  if (!(game.alpha0 > 0.0 && game.alpha0 <= 1.0)) fail("invalid value for game 'alpha0': must lie in (0, 1]");
  if (game.horizons.empty()) fail("invalid value for 'horizons': at least one horizon is required");
  for (int h : game.horizons) {
    if (h <= 0) fail("invalid value for 'horizons': horizons must be positive");
  }
  if (!(game.lr_scale > 0.0)) fail("invalid value for 'lr_scale': must be positive");
  if (!(game.init_std >= 0.0)) fail("invalid value for game 'init_std': must be nonnegative");
  if (game.init_seeds.empty()) fail("invalid value for 'init_seeds': at least one seed is required");
  if (game.burn_in < 0) fail("invalid value for 'burn_in': must be nonnegative");
  if (!(game.band >= 1.0)) fail("invalid value for 'band': must be at least 1");
  if (!(game.uniqueness_tol > 0.0)) fail("invalid value for 'uniqueness_tol': must be positive");
}

ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t from = 0;
  while (from <= text.size()) {
    const std::size_t nl = text.find('\n', from);
    std::string_view line = text.substr(from, nl == std::string_view::npos ? std::string_view::npos : nl - from);
    from = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header '" + std::string(line) + "'");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (std::find(section_names().begin(), section_names().end(), section) == section_names().end()) {
        throw ConfigError(where + "unknown section '" + section + "'");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + "malformed line '" + std::string(line) + "': expected key = value");
    }
    const std::string_view name = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (name.empty()) throw ConfigError(where + "missing key before '='");
    const Key* key = nullptr;
    try {
      key = &resolve(section, name);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (!seen.insert(key->qualified()).second) {
      throw ConfigError(where + "duplicate key '" + std::string(name) + "'");
    }
    try {
      key->set(cfg, name, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  return parse_config_text(read_file(path));
}

std::string emit_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : key_table()) {
    if (k.section != section) {
      if (!section.empty()) out << '\n';
      section = k.section;
      out << '[' << section << "]\n";
    }
    out << k.name << " = " << k.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace brdro
