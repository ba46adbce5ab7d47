#pragma once

// Cascaded separation blocks: layer l+1 consumes the sampled noise code of
// layer l, and an aggregated head predicts from every layer's task code.
// Also hosts the training schedules and the plain-MLP / VIB baselines.

#include "infosep/adversarial.hpp"
#include "infosep/data.hpp"
#include "infosep/separation.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace infosep::pipeline {

using ad::Graph;
using ad::Index;
using ad::Matrix;
using ad::Var;
using adversarial::AdvSpec;
using data::Dataset;
using data::Vector;
using nn::MlpSpec;
using nn::ParamStore;
using separation::BlockOutput;
using separation::BlockParams;
using separation::BlockSpec;
using separation::Mode;

/// A0 full model; A1 first layer only; A2 no sampling and no KL;
/// A3 no critic and no adversarial term.
enum class Variant { A0, A1, A2, A3 };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

enum class FinalHead {
  /// Dedicated predictor over concat(z_task of every layer), trained with an extra MSE term.
  aggregated,
  /// Layer 1's task predictor is the model output; no extra term.
  first_task_predictor,
};

struct ModelSpec {
  std::vector<BlockSpec> layers;
  /// One per layer; entries of feature-only layers are ignored.
  std::vector<AdvSpec> adv;
  std::vector<Index> final_hidden{100, 100};
  double slope = nn::kDefaultSlope;
  FinalHead head = FinalHead::aggregated;
  Variant variant = Variant::A0;
  /// Multiplies every layer's noise-branch loss.
  double noise_loss_weight = 1.0;

  std::size_t depth() const { return layers.size(); }
  /// Layers the variant actually uses (1 for A1).
  std::size_t active_depth() const;
  FinalHead effective_head() const;
  MlpSpec final_predictor() const;
  bool uses_critic(std::size_t layer) const;
  void validate() const;
};

struct ModelParams {
  std::vector<BlockParams> blocks;
  std::vector<ParamStore> critics;
  ParamStore final_head;

  bool operator==(const ModelParams&) const = default;
};

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed);

struct BoundModel {
  std::vector<separation::BoundBlock> blocks;
  std::vector<Var> final_head;
};

struct CascadeOutput {
  std::vector<BlockOutput> layers;
  /// Present once every layer the head needs has been evaluated.
  std::optional<Var> y_final;
};

/// Evaluates the first `depth` layers (all bound blocks by default).
CascadeOutput forward_cascade(const BoundModel& model, const ModelSpec& spec, Var x, Mode mode,
                              Rng& rng, std::optional<std::size_t> depth = std::nullopt);

struct LayerBetas {
  double task = 0.0;
  double noise = 0.0;
};

std::vector<LayerBetas> sample_betas(const ModelSpec& spec, Rng& rng);

struct LossTerms {
  Var total;
  double task = 0.0;
  double noise = 0.0;
  double adv = 0.0;
  double kl = 0.0;
  double final_mse = 0.0;
};

/// Sum over included layers of L_task + w_noise * L_noise + lambda_adv * L_adv,
/// plus the aggregated head's MSE when `include_final` is set. `adv_terms[l]`
/// is the encoder-side adversarial loss of layer l, if built.
LossTerms total_loss(const ModelSpec& spec, const CascadeOutput& out, Var y,
                     std::span<const LayerBetas> betas, std::span<const std::optional<Var>> adv_terms,
                     const std::vector<bool>& include_layer, bool include_final);

// ---------------------------------------------------------------------------
// Training

struct ScheduleSpec {
  enum class Strategy { joint, two_stage };

  Strategy strategy = Strategy::joint;
  Index batch_size = 20;
  /// One entry per phase: 1 for joint, one per layer for two_stage.
  std::vector<int> epochs{100};
  std::vector<double> lr{3e-4};
  /// Early-stopping window on validation R^2; 0 disables.
  int patience = 0;

  int total_epochs() const;
  void validate(std::size_t phases) const;
};

std::string to_string(ScheduleSpec::Strategy s);

struct EpochTrace {
  std::vector<double> total;
  std::vector<double> task;
  std::vector<double> noise;
  std::vector<double> adv;
  std::vector<double> critic;
  std::vector<double> kl;
  std::vector<double> final_mse;
  /// E_paired[D] - E_shuffled[D] from the last critic step, batch-averaged.
  std::vector<double> independence;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RunRecord {
  std::string model;
  std::string variant;
  std::string strategy;
  std::uint64_t seed = 0;
  double r2_train = kNaN;
  double r2_valid = kNaN;
  double r2_test = kNaN;
  /// Mean |Pearson| between layer-1 z_task and z_noise coordinates on the test split.
  double latent_abs_corr = kNaN;
  bool diverged = false;
  std::string diagnostic;
  int epochs_run = 0;
  std::int64_t critic_steps = 0;
  std::int64_t critic_graph_builds = 0;
  std::int64_t encoder_steps = 0;
  double wall_clock_s = 0.0;
  EpochTrace trace;
};

struct TrainResult {
  RunRecord record;
  ModelParams params;
};

/// Expects a split, normalized dataset. Throws nn::DivergenceError on a
/// non-finite loss or gradient.
TrainResult train_joint(const ModelSpec& spec, const Dataset& data, const ScheduleSpec& schedule,
                        std::uint64_t seed);
TrainResult train_two_stage(const ModelSpec& spec, const Dataset& data, const ScheduleSpec& schedule,
                            std::uint64_t seed);
/// Dispatches on schedule.strategy.
TrainResult train(const ModelSpec& spec, const Dataset& data, const ScheduleSpec& schedule,
                  std::uint64_t seed);

/// Eval-mode predictions on the standardized target scale.
Vector predict(const ModelSpec& spec, const ModelParams& params, const Matrix& x);

/// Mean |Pearson correlation| over all (z_task_i, z_noise_j) pairs of layer 1
/// using posterior means.
double latent_abs_correlation(const ModelSpec& spec, const ModelParams& params, const Matrix& x);

// ---------------------------------------------------------------------------
// Baselines

struct MlpBaselineResult {
  RunRecord record;
  ParamStore params;
};

MlpBaselineResult train_baseline_mlp(const MlpSpec& spec, const Dataset& data,
                                     const ScheduleSpec& schedule, std::uint64_t seed);

struct VibSpec {
  Index input_dim = 1;
  Index d_z = 4;
  std::vector<Index> encoder_hidden{200, 200, 200};
  std::vector<Index> predictor_hidden{200, 200, 200};
  double slope = nn::kDefaultSlope;
  double beta = 0.05;

  MlpSpec encoder() const { return {input_dim, encoder_hidden, 2 * d_z, slope}; }
  MlpSpec predictor() const { return {d_z, predictor_hidden, 1, slope}; }
};

struct VibParams {
  ParamStore encoder;
  ParamStore predictor;
};

VibParams init_vib(const VibSpec& spec, std::uint64_t seed);

/// MSE(predictor(z), y) + beta * KL, z reparameterized with one draw from `rng`
/// (or the posterior mean in eval mode).
separation::BranchLoss vib_loss(std::span<const Var> encoder, std::span<const Var> predictor,
                                const VibSpec& spec, Var x, Var y, Mode mode, Rng& rng);

struct VibBaselineResult {
  RunRecord record;
  VibParams params;
};

VibBaselineResult train_baseline_vib(const VibSpec& spec, const Dataset& data,
                                     const ScheduleSpec& schedule, std::uint64_t seed);

}  // namespace infosep::pipeline
