#include "infosep/config.hpp"

#include "infosep/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace infosep::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back({});
  return out;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"data",
       {"source", "path", "target", "delimiter", "n_samples", "d_total", "d_dominant", "d_subtle",
        "generator_hidden", "generator_gain", "subtle_scale", "target_noise", "mixing_bias_std", "generator_seed", "split", "ratio",
        "count", "valid_fraction"}},
      {"model",
       {"kind", "variant", "head", "d_task", "d_noise", "encoder_hidden", "predictor_hidden", "final_hidden",
        "mlp_hidden", "vib_encoder_hidden", "vib_predictor_hidden", "vib_d_z", "slope", "noise_loss_weight",
        "noise_grad_to_task"}},
      {"beta", {"task", "noise", "floor", "vib"}},
      {"adv", {"lambda", "gp_coeff", "n_critic", "objective", "non_saturating", "critic_hidden"}},
      {"train", {"strategy", "batch_size", "epochs", "lr", "patience"}},
      {"run", {"name", "seeds", "jobs"}},
      {"sweep", {}},
  };
  return keys;
}

// Typed access to one raw config; parse failures are rethrown naming the key.
class Reader {
 public:
  explicit Reader(const RawConfig& raw) : raw_(raw) {}

  const std::string* find(const std::string& section, const std::string& key) {
    const auto s = raw_.find(section);
    if (s == raw_.end()) return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    return &k->second;
  }

  template <class T, class Parse>
  void read(const std::string& section, const std::string& key, T& target, Parse parse) {
    const std::string* v = find(section, key);
    if (!v) return;
    try {
      target = parse(*v);
    } catch (const ConfigError& e) {
      throw ConfigError("key '" + section + "." + key + "': " + e.what());
    }
  }

 private:
  const RawConfig& raw_;
};

double to_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

long long to_int(const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("expected an integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ConfigError("expected true/false, got '" + s + "'");
}

std::vector<Index> to_dims(const std::string& s) {
  std::vector<Index> out;
  if (trim(s).empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(static_cast<Index>(to_int(part)));
  return out;
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) out.push_back(to_double(part));
  return out;
}

std::vector<int> to_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& part : split(s, ',')) out.push_back(static_cast<int>(to_int(part)));
  return out;
}

latent::BetaSpec to_beta(const std::string& s, double floor) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) return latent::BetaSpec::fixed_at(to_double(trim(s)));
  return latent::BetaSpec::normal(to_double(trim(s.substr(0, slash))), to_double(trim(s.substr(slash + 1))), floor);
}

std::vector<latent::BetaSpec> to_betas(const std::string& s, double floor) {
  std::vector<latent::BetaSpec> out;
  for (const auto& part : split(s, ',')) out.push_back(to_beta(part, floor));
  return out;
}

template <class T>
std::vector<T> broadcast(const std::vector<T>& v, std::size_t n, const std::string& what) {
  if (v.size() == n) return v;
  if (v.size() == 1) return std::vector<T>(n, v.front());
  throw ConfigError(what + ": expected 1 or " + std::to_string(n) + " values, got " + std::to_string(v.size()));
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Raw INI

RawConfig parse_ini(std::istream& in, const std::string& source_name) {
  RawConfig raw;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_keys().count(section)) throw ConfigError(where + ": unknown section '" + section + "'");
      raw[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (raw[section].count(key)) throw ConfigError(where + ": duplicate key '" + section + "." + key + "'");
    raw[section][key] = trim(line.substr(eq + 1));
  }
  return raw;
}

RawConfig load_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  return parse_ini(in, path);
}

void write_ini(std::ostream& out, const RawConfig& raw) {
  bool first = true;
  for (const auto& [section, keys] : raw) {
    if (!first) out << '\n';
    first = false;
    out << '[' << section << "]\n";
    for (const auto& [k, v] : keys) out << k << " = " << v << '\n';
  }
}

void set_value(RawConfig& raw, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted_key.size()) {
    throw ConfigError("expected 'section.key', got '" + dotted_key + "'");
  }
  raw[dotted_key.substr(0, dot)][dotted_key.substr(dot + 1)] = value;
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::adverisf: return "adverisf";
    case ModelKind::mlp: return "mlp";
    case ModelKind::vib: return "vib";
  }
  return "?";
}

std::string DataConfig::regime() const {
  if (split.mode == data::SplitSpec::Mode::count) return "N=" + std::to_string(split.count);
  return "ratio=" + format_number(split.ratio);
}

std::string ExperimentConfig::hash() const {
  std::ostringstream canon;
  for (const auto& [section, keys] : raw) {
    if (section == "run" || section == "sweep") continue;
    for (const auto& [k, v] : keys) canon << section << '.' << k << '=' << v << '\n';
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon.str())));
  return buf;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split(text, ',')) {
    if (part.empty()) throw ConfigError("empty entry in seed list '" + text + "'");
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      const long long v = to_int(part);
      if (v < 0) throw ConfigError("seeds must be non-negative");
      seeds.push_back(static_cast<std::uint64_t>(v));
      continue;
    }
    const long long lo = to_int(trim(part.substr(0, dash)));
    const long long hi = to_int(trim(part.substr(dash + 1)));
    if (lo < 0 || hi < lo) throw ConfigError("bad seed range '" + part + "'");
    for (long long s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

// ---------------------------------------------------------------------------
// Interpretation

ExperimentConfig interpret(const RawConfig& raw) {
  for (const auto& [section, keys] : raw) {
    const auto known = known_keys().find(section);
    if (known == known_keys().end()) throw ConfigError("unknown section '" + section + "'");
    if (section == "sweep") continue;
    for (const auto& [k, v] : keys) {
      if (!known->second.count(k)) throw ConfigError("unknown key '" + section + "." + k + "'");
    }
  }

  ExperimentConfig cfg;
  cfg.raw = raw;
  Reader r(raw);

  // [data]
  auto& d = cfg.data;
  r.read("data", "source", d.source, [](const std::string& s) {
    if (s == "synthetic") return DataConfig::Source::synthetic;
    if (s == "csv") return DataConfig::Source::csv;
    throw ConfigError("expected synthetic or csv, got '" + s + "'");
  });
  r.read("data", "path", d.path, [](const std::string& s) { return s; });
  r.read("data", "target", d.target, [](const std::string& s) { return s; });
  r.read("data", "delimiter", d.delimiter, [](const std::string& s) {
    if (s == "tab" || s == "\\t") return '\t';
    if (s.size() != 1) throw ConfigError("delimiter must be a single character");
    return s.front();
  });
  const auto as_index = [](const std::string& s) { return static_cast<Index>(to_int(s)); };
  r.read("data", "n_samples", d.synthetic.n_samples, as_index);
  r.read("data", "d_total", d.synthetic.d_total, as_index);
  r.read("data", "d_dominant", d.synthetic.d_dominant, as_index);
  r.read("data", "d_subtle", d.synthetic.d_subtle, as_index);
  r.read("data", "generator_hidden", d.synthetic.generator_hidden, as_index);
  r.read("data", "generator_gain", d.synthetic.generator_gain, to_double);
  r.read("data", "subtle_scale", d.synthetic.subtle_scale, to_double);
  r.read("data", "target_noise", d.synthetic.target_noise, to_double);
  r.read("data", "mixing_bias_std", d.synthetic.mixing_bias_std, to_double);
  r.read("data", "generator_seed", d.generator_seed,
         [](const std::string& s) { return static_cast<std::uint64_t>(to_int(s)); });
  r.read("data", "split", d.split.mode, [](const std::string& s) {
    if (s == "ratio") return data::SplitSpec::Mode::ratio;
    if (s == "count") return data::SplitSpec::Mode::count;
    throw ConfigError("expected ratio or count, got '" + s + "'");
  });
  r.read("data", "ratio", d.split.ratio, to_double);
  r.read("data", "count", d.split.count, as_index);
  r.read("data", "valid_fraction", d.split.valid_fraction, to_double);
  if (d.source == DataConfig::Source::csv && d.path.empty()) throw ConfigError("key 'data.path': required for csv");
  try {
    if (d.source == DataConfig::Source::synthetic) d.synthetic.validate();
  } catch (const data::DataError& e) {
    throw ConfigError(std::string("[data]: ") + e.what());
  }
  if (d.split.mode == data::SplitSpec::Mode::ratio && !(d.split.ratio > 0.0 && d.split.ratio < 1.0)) {
    throw ConfigError("key 'data.ratio': must lie in (0, 1)");
  }
  if (d.split.mode == data::SplitSpec::Mode::count && d.split.count < 1) {
    throw ConfigError("key 'data.count': must be >= 1");
  }

  // [model]
  auto& m = cfg.model;
  r.read("model", "kind", m.kind, [](const std::string& s) {
    if (s == "adverisf") return ModelKind::adverisf;
    if (s == "mlp") return ModelKind::mlp;
    if (s == "vib") return ModelKind::vib;
    throw ConfigError("expected adverisf, mlp or vib, got '" + s + "'");
  });
  r.read("model", "variant", m.variant, [](const std::string& s) {
    try {
      return pipeline::parse_variant(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  });
  r.read("model", "head", m.head, [](const std::string& s) {
    if (s == "aggregated") return pipeline::FinalHead::aggregated;
    if (s == "first_task_predictor") return pipeline::FinalHead::first_task_predictor;
    throw ConfigError("expected aggregated or first_task_predictor, got '" + s + "'");
  });
  r.read("model", "d_task", m.d_task, to_dims);
  r.read("model", "d_noise", m.d_noise, to_dims);
  r.read("model", "encoder_hidden", m.encoder_hidden, to_dims);
  r.read("model", "predictor_hidden", m.predictor_hidden, to_dims);
  r.read("model", "final_hidden", m.final_hidden, to_dims);
  r.read("model", "mlp_hidden", m.mlp_hidden, to_dims);
  r.read("model", "vib_encoder_hidden", m.vib_encoder_hidden, to_dims);
  r.read("model", "vib_predictor_hidden", m.vib_predictor_hidden, to_dims);
  r.read("model", "vib_d_z", m.vib_d_z, as_index);
  r.read("model", "slope", m.slope, to_double);
  r.read("model", "noise_loss_weight", m.noise_loss_weight, to_double);
  r.read("model", "noise_grad_to_task", m.noise_grad_to_task, to_bool);

  // [beta]
  r.read("beta", "floor", m.beta_floor, to_double);
  const double floor = m.beta_floor;
  r.read("beta", "task", m.beta_task, [floor](const std::string& s) { return to_betas(s, floor); });
  r.read("beta", "noise", m.beta_noise, [floor](const std::string& s) { return to_betas(s, floor); });
  r.read("beta", "vib", m.beta_vib, to_double);

  // [adv]
  r.read("adv", "lambda", m.lambda_adv, to_doubles);
  r.read("adv", "gp_coeff", m.gp_coeff, to_double);
  r.read("adv", "n_critic", m.n_critic, [](const std::string& s) { return static_cast<int>(to_int(s)); });
  r.read("adv", "objective", m.objective, [](const std::string& s) {
    if (s == "wasserstein" || s == "wasserstein_gp") return adversarial::Objective::wasserstein_gp;
    if (s == "jsd") return adversarial::Objective::jsd;
    throw ConfigError("expected wasserstein or jsd, got '" + s + "'");
  });
  r.read("adv", "non_saturating", m.non_saturating, to_bool);
  r.read("adv", "critic_hidden", m.critic_hidden, to_dims);

  // [train]
  auto& t = cfg.schedule;
  r.read("train", "strategy", t.strategy, [](const std::string& s) {
    if (s == "joint") return pipeline::ScheduleSpec::Strategy::joint;
    if (s == "two_stage") return pipeline::ScheduleSpec::Strategy::two_stage;
    throw ConfigError("expected joint or two_stage, got '" + s + "'");
  });
  r.read("train", "batch_size", t.batch_size, as_index);
  r.read("train", "epochs", t.epochs, to_ints);
  r.read("train", "lr", t.lr, to_doubles);
  r.read("train", "patience", t.patience, [](const std::string& s) { return static_cast<int>(to_int(s)); });

  // [run]
  r.read("run", "name", cfg.name, [](const std::string& s) {
    if (s.empty() || s.find('/') != std::string::npos) throw ConfigError("name must be non-empty without '/'");
    return s;
  });
  r.read("run", "seeds", cfg.seeds, parse_seeds);
  r.read("run", "jobs", cfg.jobs, [](const std::string& s) {
    const auto j = to_int(s);
    if (j < 1) throw ConfigError("jobs must be >= 1");
    return static_cast<int>(j);
  });

  // [sweep]: axisN = section.key: v1 | v2 | ...
  if (const auto s = raw.find("sweep"); s != raw.end()) {
    for (const auto& [k, v] : s->second) {
      if (k.rfind("axis", 0) != 0) throw ConfigError("unknown key 'sweep." + k + "' (expected axis1, axis2, ...)");
      const auto colon = v.find(':');
      if (colon == std::string::npos) throw ConfigError("key 'sweep." + k + "': expected 'section.key: v1 | v2'");
      SweepAxis axis;
      axis.key = trim(v.substr(0, colon));
      if (axis.key.rfind("run.", 0) == 0 || axis.key.rfind("sweep.", 0) == 0) {
        throw ConfigError("key 'sweep." + k + "': cannot sweep over " + axis.key);
      }
      for (const auto& value : split(v.substr(colon + 1), '|')) {
        if (!value.empty()) axis.values.push_back(value);
      }
      if (axis.values.empty()) throw ConfigError("key 'sweep." + k + "': no values");
      cfg.sweep.push_back(std::move(axis));
    }
  }

  // Cross-field checks: build the model once against a placeholder input width.
  try {
    switch (m.kind) {
      case ModelKind::adverisf: {
        build_model(m, 1).validate();
        const std::size_t phases =
            t.strategy == pipeline::ScheduleSpec::Strategy::joint ? 1 : m.layers();
        t.validate(phases);
        break;
      }
      case ModelKind::mlp:
        build_mlp(m, 1).validate();
        [[fallthrough]];
      case ModelKind::vib:
        if (m.kind == ModelKind::vib) {
          build_vib(m, 1).encoder().validate();
          build_vib(m, 1).predictor().validate();
        }
        if (t.strategy != pipeline::ScheduleSpec::Strategy::joint) {
          throw ConfigError("key 'train.strategy': baselines train jointly");
        }
        t.validate(1);
        break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

void resolve_data_path(ExperimentConfig& cfg, const std::string& config_path) {
  if (cfg.data.source != DataConfig::Source::csv) return;
  std::filesystem::path data_path(cfg.data.path);
  if (data_path.is_relative()) data_path = std::filesystem::path(config_path).parent_path() / data_path;
  data_path = data_path.lexically_normal();
  if (!std::filesystem::exists(data_path)) {
    throw data::DataError("key 'data.path': " + data_path.string() + " does not exist");
  }
  cfg.data.path = data_path.string();
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg = interpret(load_ini(path));
  resolve_data_path(cfg, path);
  return cfg;
}

// ---------------------------------------------------------------------------
// Model construction

pipeline::ModelSpec build_model(const ModelConfig& cfg, Index input_dim) {
  const std::size_t L = cfg.layers();
  if (L == 0) throw ConfigError("key 'model.d_task': at least one layer required");
  if (cfg.d_noise.size() + 1 != L && cfg.d_noise.size() != L) {
    throw ConfigError("key 'model.d_noise': expected " + std::to_string(L - 1) + " or " + std::to_string(L) +
                      " values for " + std::to_string(L) + " layers, got " + std::to_string(cfg.d_noise.size()));
  }
  const std::size_t noise_layers = cfg.d_noise.size();
  const auto beta_task = broadcast(cfg.beta_task, L, "key 'beta.task'");
  const auto beta_noise =
      noise_layers ? broadcast(cfg.beta_noise, noise_layers, "key 'beta.noise'") : std::vector<latent::BetaSpec>{};
  const auto lambda = noise_layers ? broadcast(cfg.lambda_adv, noise_layers, "key 'adv.lambda'") : std::vector<double>{};

  pipeline::ModelSpec spec;
  spec.final_hidden = cfg.final_hidden;
  spec.slope = cfg.slope;
  spec.head = cfg.head;
  spec.variant = cfg.variant;
  spec.noise_loss_weight = cfg.noise_loss_weight;
  for (std::size_t l = 0; l < L; ++l) {
    separation::BlockSpec b;
    b.input_dim = l == 0 ? input_dim : cfg.d_noise[l - 1];
    b.d_task = cfg.d_task[l];
    b.d_noise = l < noise_layers ? cfg.d_noise[l] : 0;
    b.encoder_hidden = cfg.encoder_hidden;
    b.predictor_hidden = cfg.predictor_hidden;
    b.slope = cfg.slope;
    b.beta_task = beta_task[l];
    if (l < noise_layers) b.beta_noise = beta_noise[l];
    b.noise_grad_to_task = cfg.noise_grad_to_task;
    spec.layers.push_back(b);

    adversarial::AdvSpec a;
    a.critic = {b.d_task + b.d_noise, cfg.critic_hidden, 1, cfg.slope};
    a.lambda_adv = l < noise_layers ? lambda[l] : 0.0;
    a.gp_coeff = cfg.gp_coeff;
    a.n_critic = cfg.n_critic;
    a.objective = cfg.objective;
    a.non_saturating = cfg.non_saturating;
    spec.adv.push_back(a);
  }
  return spec;
}

nn::MlpSpec build_mlp(const ModelConfig& cfg, Index input_dim) {
  return {input_dim, cfg.mlp_hidden, 1, cfg.slope};
}

pipeline::VibSpec build_vib(const ModelConfig& cfg, Index input_dim) {
  pipeline::VibSpec v;
  v.input_dim = input_dim;
  v.d_z = cfg.vib_d_z;
  v.encoder_hidden = cfg.vib_encoder_hidden;
  v.predictor_hidden = cfg.vib_predictor_hidden;
  v.slope = cfg.slope;
  v.beta = cfg.beta_vib;
  return v;
}

}  // namespace infosep::config
