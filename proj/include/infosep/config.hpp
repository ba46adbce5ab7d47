#pragma once

// Experiment configuration: a flat INI-style text format.
//
//   # comment
//   [section]
//   key = value
//
// Lists are comma separated. A KL weight written "mu/sigma" is resampled per
// batch from N(mu, sigma^2); a plain number is fixed. The accepted keys are
// documented in configs/README.md.

#include "infosep/data.hpp"
#include "infosep/pipeline.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace infosep::config {

using ad::Index;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// section -> key -> raw value, as written.
using RawConfig = std::map<std::string, std::map<std::string, std::string>>;

RawConfig parse_ini(std::istream& in, const std::string& source_name = "<config>");
RawConfig load_ini(const std::string& path);
void write_ini(std::ostream& out, const RawConfig& raw);

/// Sets "section.key" to `value`, creating the section if needed.
void set_value(RawConfig& raw, const std::string& dotted_key, const std::string& value);

enum class ModelKind { adverisf, mlp, vib };
std::string to_string(ModelKind k);

struct DataConfig {
  enum class Source { synthetic, csv };

  Source source = Source::synthetic;
  data::SyntheticSpec synthetic;
  std::uint64_t generator_seed = 0;
  std::string path;
  /// Empty selects the last column.
  std::string target;
  char delimiter = ',';
  data::SplitSpec split = data::SplitSpec::by_ratio(0.7);

  /// "ratio=0.7" or "N=30"; used to group records in reports.
  std::string regime() const;
};

struct ModelConfig {
  ModelKind kind = ModelKind::adverisf;
  pipeline::Variant variant = pipeline::Variant::A0;
  pipeline::FinalHead head = pipeline::FinalHead::aggregated;
  std::vector<Index> d_task{2, 2};
  /// One per non-terminal layer, or one per layer to give the last layer a noise branch too.
  std::vector<Index> d_noise{5};
  std::vector<Index> encoder_hidden{100, 100};
  std::vector<Index> predictor_hidden{100, 100};
  std::vector<Index> final_hidden{100, 100};
  std::vector<Index> mlp_hidden{400, 400, 400};
  std::vector<Index> vib_encoder_hidden{200, 200, 200};
  std::vector<Index> vib_predictor_hidden{200, 200, 200};
  Index vib_d_z = 4;
  double slope = nn::kDefaultSlope;
  double noise_loss_weight = 1.0;
  bool noise_grad_to_task = true;

  std::vector<latent::BetaSpec> beta_task{latent::BetaSpec::fixed_at(0.0)};
  std::vector<latent::BetaSpec> beta_noise{latent::BetaSpec::fixed_at(0.0)};
  double beta_floor = 0.0;
  double beta_vib = 0.0;

  std::vector<double> lambda_adv{1.0};
  double gp_coeff = 10.0;
  int n_critic = 2;
  adversarial::Objective objective = adversarial::Objective::wasserstein_gp;
  bool non_saturating = false;
  std::vector<Index> critic_hidden{50, 50};

  std::size_t layers() const { return d_task.size(); }
};

struct SweepAxis {
  std::string key;  // dotted, e.g. "adv.lambda"
  std::vector<std::string> values;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataConfig data;
  ModelConfig model;
  pipeline::ScheduleSpec schedule;
  std::vector<std::uint64_t> seeds{0};
  int jobs = 1;
  std::vector<SweepAxis> sweep;
  RawConfig raw;

  /// Stable 16-hex-digit digest of every setting that affects results.
  std::string hash() const;
};

/// Interprets a raw config; unknown sections or keys and malformed values
/// raise ConfigError naming the key.
ExperimentConfig interpret(const RawConfig& raw);
/// Makes a relative csv data.path relative to the config file's directory;
/// raises data::DataError when the file does not exist.
void resolve_data_path(ExperimentConfig& cfg, const std::string& config_path);
/// interpret() of the file, then resolve_data_path().
ExperimentConfig load_config(const std::string& path);

/// "0-9", "1,5,7" or a mix ("0-2,10").
std::vector<std::uint64_t> parse_seeds(const std::string& text);

pipeline::ModelSpec build_model(const ModelConfig& cfg, Index input_dim);
nn::MlpSpec build_mlp(const ModelConfig& cfg, Index input_dim);
pipeline::VibSpec build_vib(const ModelConfig& cfg, Index input_dim);

}  // namespace infosep::config
