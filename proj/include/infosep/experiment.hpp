#pragma once

// Seeded experiment runs on top of the pipeline: dataset preparation, record
// files, aggregates, grid sweeps and the A0-A3 ablation.
//
// Layout of one run directory:
//   records/seed_<s>.json   one record per seed (schema_version 1.x)
//   aggregate.json|.csv      mean and sample std over seeds
//   timing.csv               wall clock per seed (kept out of records so
//                            reruns are byte-identical)

#include "infosep/config.hpp"
#include "infosep/pipeline.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace infosep::experiment {

namespace fs = std::filesystem;

inline constexpr int kSchemaMajor = 1;
inline constexpr int kSchemaMinor = 0;

/// Loads or generates the data, splits it with a seed-derived stream and
/// standardizes with train statistics.
data::Dataset prepare_dataset(const config::DataConfig& cfg, std::uint64_t seed);

/// Trains one model for one seed. Divergence is caught and reported in the
/// record (diverged = true, R^2 fields NaN).
pipeline::RunRecord run_one(const config::ExperimentConfig& cfg, std::uint64_t seed);

struct RecordMeta {
  std::string name;
  std::string config_hash;
  std::string regime;
  std::string label;
};

/// Display label: "mlp", "vib", "adverisf/two_stage", "adverisf/joint/A1".
std::string model_label(const config::ExperimentConfig& cfg);

nlohmann::json record_to_json(const pipeline::RunRecord& rec, const RecordMeta& meta);

struct Aggregate {
  std::string label;
  std::string regime;
  int n = 0;
  int n_diverged = 0;
  double mean = pipeline::kNaN;
  /// Sample standard deviation (n - 1); NaN for a single finite value.
  double std = pipeline::kNaN;
  double mean_train = pipeline::kNaN;
  double mean_latent_corr = pipeline::kNaN;
};

/// Statistics over the finite test R^2 values of `records`.
Aggregate aggregate(const std::vector<pipeline::RunRecord>& records, const std::string& label,
                    const std::string& regime);

/// Mean and sample std (n - 1) of the finite entries.
std::pair<double, double> mean_std(const std::vector<double>& values);

/// Writes to a temporary sibling first and renames it into place.
void write_atomic(const fs::path& path, const std::string& content);

struct RunOutcome {
  Aggregate summary;
  std::vector<pipeline::RunRecord> records;
  bool any_diverged = false;
};

/// Runs every seed of `cfg` on a pool of `jobs` workers and writes records,
/// aggregates and timing into `dir`.
RunOutcome run(const config::ExperimentConfig& cfg, const fs::path& dir, int jobs);

struct SweepCell {
  std::vector<std::string> values;  // one per axis
  RunOutcome outcome;
};

struct SweepOutcome {
  std::vector<config::SweepAxis> axes;
  std::vector<SweepCell> cells;
  bool any_diverged = false;
};

/// Cartesian product over cfg.sweep; each cell runs all seeds. Writes
/// cells/<cell>/ run directories, sweep.csv (long form) and, for one or two
/// axes, heatmap.csv (rows = axis 1, cols = axis 2).
SweepOutcome sweep(const config::ExperimentConfig& cfg, const fs::path& dir, int jobs);

struct AblationOutcome {
  std::vector<RunOutcome> variants;  // A0, A1, A2, A3
  bool any_diverged = false;
};

/// Runs A0-A3 under identical seeds; writes ablation.csv and ablation.md.
AblationOutcome ablate(const config::ExperimentConfig& cfg, const fs::path& dir, int jobs);

/// Synthetic dataset as CSV (features x0.., target y, raw scale).
void generate_csv(const config::DataConfig& cfg, const fs::path& path);

}  // namespace infosep::experiment
