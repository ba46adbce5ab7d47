#include "infosep/experiment.hpp"

#include "infosep/rng.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace infosep::experiment {

using nlohmann::json;
using pipeline::RunRecord;

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json trace_array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number_or_null(x));
  return a;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == '/' || c == ' ' || c == '\\' || c == ':') c = '~';
  }
  return s;
}

}  // namespace

data::Dataset prepare_dataset(const config::DataConfig& cfg, std::uint64_t seed) {
  data::Dataset ds = cfg.source == config::DataConfig::Source::synthetic
                         ? data::generate_synthetic(cfg.synthetic, cfg.generator_seed)
                         : data::load_csv(cfg.path, cfg.target, cfg.delimiter);
  ds = data::split(std::move(ds), cfg.split, derive_seed(seed, "split"));
  return data::normalize(std::move(ds));
}

RunRecord run_one(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  const data::Dataset ds = prepare_dataset(cfg.data, seed);
  const ad::Index d = ds.features();
  try {
    switch (cfg.model.kind) {
      case config::ModelKind::adverisf:
        return pipeline::train(config::build_model(cfg.model, d), ds, cfg.schedule, seed).record;
      case config::ModelKind::mlp:
        return pipeline::train_baseline_mlp(config::build_mlp(cfg.model, d), ds, cfg.schedule, seed).record;
      case config::ModelKind::vib:
        return pipeline::train_baseline_vib(config::build_vib(cfg.model, d), ds, cfg.schedule, seed).record;
    }
  } catch (const nn::DivergenceError& e) {
    RunRecord rec;
    rec.model = config::to_string(cfg.model.kind);
    rec.variant = pipeline::to_string(cfg.model.variant);
    rec.strategy = pipeline::to_string(cfg.schedule.strategy);
    rec.seed = seed;
    rec.diverged = true;
    rec.diagnostic = e.what();
    return rec;
  }
  throw std::logic_error("run_one: unhandled model kind");
}

std::string model_label(const config::ExperimentConfig& cfg) {
  if (cfg.model.kind != config::ModelKind::adverisf) return config::to_string(cfg.model.kind);
  std::string label = "adverisf/" + pipeline::to_string(cfg.schedule.strategy);
  if (cfg.model.variant != pipeline::Variant::A0) label += "/" + pipeline::to_string(cfg.model.variant);
  return label;
}

json record_to_json(const RunRecord& rec, const RecordMeta& meta) {
  json j;
  j["schema_version"] = std::to_string(kSchemaMajor) + "." + std::to_string(kSchemaMinor);
  j["kind"] = "run_record";
  j["name"] = meta.name;
  j["config_hash"] = meta.config_hash;
  j["label"] = meta.label;
  j["regime"] = meta.regime;
  j["model"] = rec.model;
  j["variant"] = rec.variant;
  j["strategy"] = rec.strategy;
  j["seed"] = rec.seed;
  j["r2"] = {{"train", number_or_null(rec.r2_train)},
             {"valid", number_or_null(rec.r2_valid)},
             {"test", number_or_null(rec.r2_test)}};
  j["latent_abs_corr"] = number_or_null(rec.latent_abs_corr);
  j["diverged"] = rec.diverged;
  j["diagnostic"] = rec.diagnostic;
  j["epochs_run"] = rec.epochs_run;
  j["critic_steps"] = rec.critic_steps;
  j["critic_graph_builds"] = rec.critic_graph_builds;
  j["encoder_steps"] = rec.encoder_steps;
  const auto& t = rec.trace;
  j["trace"] = {{"total", trace_array(t.total)},   {"task", trace_array(t.task)},
                {"noise", trace_array(t.noise)},   {"adv", trace_array(t.adv)},
                {"critic", trace_array(t.critic)}, {"kl", trace_array(t.kl)},
                {"final", trace_array(t.final_mse)}, {"independence", trace_array(t.independence)}};
  return j;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  double sum = 0.0;
  int n = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) return {pipeline::kNaN, pipeline::kNaN};
  const double mean = sum / n;
  if (n < 2) return {mean, pipeline::kNaN};
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  }
  return {mean, std::sqrt(ss / (n - 1))};
}

Aggregate aggregate(const std::vector<RunRecord>& records, const std::string& label, const std::string& regime) {
  Aggregate a;
  a.label = label;
  a.regime = regime;
  a.n = static_cast<int>(records.size());
  std::vector<double> test, train, corr;
  for (const auto& r : records) {
    if (r.diverged) ++a.n_diverged;
    test.push_back(r.r2_test);
    train.push_back(r.r2_train);
    corr.push_back(r.latent_abs_corr);
  }
  std::tie(a.mean, a.std) = mean_std(test);
  a.mean_train = mean_std(train).first;
  a.mean_latent_corr = mean_std(corr).first;
  return a;
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

RunOutcome run(const config::ExperimentConfig& cfg, const fs::path& dir, int jobs) {
  if (cfg.seeds.empty()) throw config::ConfigError("no seeds to run");
  const RecordMeta meta{cfg.name, cfg.hash(), cfg.data.regime(), model_label(cfg)};
  const std::size_t n = cfg.seeds.size();
  std::vector<RunRecord> records(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        records[i] = run_one(cfg, cfg.seeds[i]);
        write_atomic(dir / "records" / ("seed_" + std::to_string(cfg.seeds[i]) + ".json"),
                     record_to_json(records[i], meta).dump() + "\n");
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunOutcome out;
  out.records = records;
  out.summary = aggregate(records, meta.label, meta.regime);
  out.any_diverged = out.summary.n_diverged > 0;

  json agg;
  agg["schema_version"] = std::to_string(kSchemaMajor) + "." + std::to_string(kSchemaMinor);
  agg["kind"] = "aggregate";
  agg["name"] = meta.name;
  agg["config_hash"] = meta.config_hash;
  agg["label"] = meta.label;
  agg["regime"] = meta.regime;
  agg["n"] = out.summary.n;
  agg["n_diverged"] = out.summary.n_diverged;
  agg["r2_test_mean"] = number_or_null(out.summary.mean);
  agg["r2_test_std"] = number_or_null(out.summary.std);
  agg["r2_train_mean"] = number_or_null(out.summary.mean_train);
  agg["latent_abs_corr_mean"] = number_or_null(out.summary.mean_latent_corr);
  json seeds = json::array(), tests = json::array();
  for (const auto& r : records) {
    seeds.push_back(r.seed);
    tests.push_back(number_or_null(r.r2_test));
  }
  agg["seeds"] = seeds;
  agg["r2_test"] = tests;
  write_atomic(dir / "aggregate.json", agg.dump(2) + "\n");

  std::ostringstream csv;
  csv << "label,regime,n,n_diverged,r2_test_mean,r2_test_std,r2_train_mean,latent_abs_corr_mean\n";
  csv << meta.label << ',' << meta.regime << ',' << out.summary.n << ',' << out.summary.n_diverged << ','
      << fmt(out.summary.mean) << ',' << fmt(out.summary.std) << ',' << fmt(out.summary.mean_train) << ','
      << fmt(out.summary.mean_latent_corr) << '\n';
  write_atomic(dir / "aggregate.csv", csv.str());

  std::ostringstream timing;
  timing << "seed,wall_clock_s\n";
  for (const auto& r : records) timing << r.seed << ',' << fmt(r.wall_clock_s) << '\n';
  write_atomic(dir / "timing.csv", timing.str());
  return out;
}

namespace {

config::ExperimentConfig derive_config(const config::ExperimentConfig& base, config::RawConfig raw,
                                       const std::string& name) {
  raw.erase("sweep");
  config::ExperimentConfig cfg = config::interpret(raw);
  cfg.name = name;
  cfg.seeds = base.seeds;
  cfg.jobs = base.jobs;
  return cfg;
}

}  // namespace

SweepOutcome sweep(const config::ExperimentConfig& cfg, const fs::path& dir, int jobs) {
  if (cfg.sweep.empty()) throw config::ConfigError("sweep: empty grid (no [sweep] axis)");
  SweepOutcome out;
  out.axes = cfg.sweep;

  std::vector<std::size_t> idx(cfg.sweep.size(), 0);
  while (true) {
    config::RawConfig raw = cfg.raw;
    std::vector<std::string> values;
    std::string cell;
    for (std::size_t a = 0; a < cfg.sweep.size(); ++a) {
      const auto& axis = cfg.sweep[a];
      values.push_back(axis.values[idx[a]]);
      config::set_value(raw, axis.key, axis.values[idx[a]]);
      cell += (a ? "__" : "") + axis.key + "=" + axis.values[idx[a]];
    }
    const auto cell_cfg = derive_config(cfg, raw, cfg.name + "/" + sanitize(cell));
    SweepCell c;
    c.values = values;
    c.outcome = run(cell_cfg, dir / "cells" / sanitize(cell), jobs);
    out.any_diverged = out.any_diverged || c.outcome.any_diverged;
    out.cells.push_back(std::move(c));

    std::size_t a = cfg.sweep.size();
    while (a > 0) {
      --a;
      if (++idx[a] < cfg.sweep[a].values.size()) break;
      idx[a] = 0;
      if (a == 0) {
        a = cfg.sweep.size() + 1;
        break;
      }
    }
    if (a == cfg.sweep.size() + 1) break;
  }

  std::ostringstream longform;
  for (const auto& axis : cfg.sweep) longform << axis.key << ',';
  longform << "n,n_diverged,r2_test_mean,r2_test_std\n";
  for (const auto& c : out.cells) {
    for (const auto& v : c.values) longform << '"' << v << "\",";
    const auto& s = c.outcome.summary;
    longform << s.n << ',' << s.n_diverged << ',' << fmt(s.mean) << ',' << fmt(s.std) << '\n';
  }
  write_atomic(dir / "sweep.csv", longform.str());

  if (cfg.sweep.size() <= 2) {
    std::ostringstream heat;
    const auto& rows = cfg.sweep[0];
    if (cfg.sweep.size() == 1) {
      heat << rows.key << ",r2_test_mean\n";
      for (std::size_t i = 0; i < rows.values.size(); ++i) {
        heat << '"' << rows.values[i] << "\"," << fmt(out.cells[i].outcome.summary.mean) << '\n';
      }
    } else {
      const auto& cols = cfg.sweep[1];
      heat << rows.key << '\\' << cols.key;
      for (const auto& v : cols.values) heat << ",\"" << v << '"';
      heat << '\n';
      for (std::size_t i = 0; i < rows.values.size(); ++i) {
        heat << '"' << rows.values[i] << '"';
        for (std::size_t j = 0; j < cols.values.size(); ++j) {
          heat << ',' << fmt(out.cells[i * cols.values.size() + j].outcome.summary.mean);
        }
        heat << '\n';
      }
    }
    write_atomic(dir / "heatmap.csv", heat.str());
  }
  return out;
}

AblationOutcome ablate(const config::ExperimentConfig& cfg, const fs::path& dir, int jobs) {
  if (cfg.model.kind != config::ModelKind::adverisf) {
    throw config::ConfigError("key 'model.kind': ablation needs adverisf");
  }
  AblationOutcome out;
  const char* names[] = {"A0", "A1", "A2", "A3"};
  for (const char* v : names) {
    config::RawConfig raw = cfg.raw;
    config::set_value(raw, "model.variant", v);
    const auto vcfg = derive_config(cfg, raw, cfg.name + "/" + v);
    out.variants.push_back(run(vcfg, dir / v, jobs));
    out.any_diverged = out.any_diverged || out.variants.back().any_diverged;
  }

  std::ostringstream csv;
  csv << "variant,label,regime,n,n_diverged,r2_test_mean,r2_test_std\n";
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : out.variants) {
    if (std::isfinite(r.summary.mean)) best = std::max(best, r.summary.mean);
  }
  std::ostringstream md;
  md << "| Variant | " << out.variants.front().summary.regime << " |\n|---|---|\n";
  for (std::size_t i = 0; i < out.variants.size(); ++i) {
    const auto& s = out.variants[i].summary;
    csv << names[i] << ',' << s.label << ',' << s.regime << ',' << s.n << ',' << s.n_diverged << ','
        << fmt(s.mean) << ',' << fmt(s.std) << '\n';
    char cell[64];
    std::snprintf(cell, sizeof cell, "%.3f ± %.3f", s.mean, std::isfinite(s.std) ? s.std : 0.0);
    const bool bold = std::isfinite(s.mean) && s.mean == best;
    md << "| " << names[i] << " | " << (bold ? "**" : "") << cell << (bold ? "**" : "") << " |\n";
  }
  write_atomic(dir / "ablation.csv", csv.str());
  write_atomic(dir / "ablation.md", md.str());
  return out;
}

void generate_csv(const config::DataConfig& cfg, const fs::path& path) {
  if (cfg.source != config::DataConfig::Source::synthetic) {
    throw config::ConfigError("key 'data.source': gen-data needs synthetic");
  }
  const data::Dataset ds = data::generate_synthetic(cfg.synthetic, cfg.generator_seed);
  std::ostringstream out;
  data::write_csv(out, ds);
  write_atomic(path, out.str());
}

}  // namespace infosep::experiment
