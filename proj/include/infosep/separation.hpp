#pragma once

// One separation block: a feature branch (x -> z_task -> y) and a conditional
// noise branch ((x, z_task) -> z_noise, (z_task, z_noise) -> y).
// The adversarial term that couples the two lives in adversarial.hpp.

#include "infosep/latent.hpp"
#include "infosep/nn.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace infosep::separation {

using ad::Graph;
using ad::Index;
using ad::Matrix;
using ad::Var;
using latent::BetaSpec;
using latent::GaussianLatent;
using nn::MlpSpec;
using nn::ParamStore;

struct BlockSpec {
  Index input_dim = 1;
  Index d_task = 2;
  /// 0 makes a feature-only block (no noise encoder, joint predictor or critic).
  Index d_noise = 5;
  std::vector<Index> encoder_hidden{100, 100};
  std::vector<Index> predictor_hidden{100, 100};
  double slope = nn::kDefaultSlope;
  BetaSpec beta_task = BetaSpec::fixed_at(0.0);
  BetaSpec beta_noise = BetaSpec::fixed_at(0.0);
  /// When false, the noise encoder sees z_task as a constant.
  bool noise_grad_to_task = true;

  bool has_noise_branch() const { return d_noise > 0; }
  MlpSpec feature_encoder() const;
  MlpSpec task_predictor() const;
  MlpSpec noise_encoder() const;
  MlpSpec joint_predictor() const;
  void validate() const;
};

struct BlockParams {
  ParamStore feature_encoder;
  ParamStore task_predictor;
  ParamStore noise_encoder;
  ParamStore joint_predictor;

  bool operator==(const BlockParams&) const = default;
};

/// Each network gets its own stream derived from `seed`.
BlockParams init_block(const BlockSpec& spec, std::uint64_t seed);

struct BoundBlock {
  std::vector<Var> feature_encoder;
  std::vector<Var> task_predictor;
  std::vector<Var> noise_encoder;
  std::vector<Var> joint_predictor;
};

BoundBlock bind_block(Graph& graph, const BlockParams& params, bool trainable);

enum class Mode { train, eval };

struct BlockOutput {
  GaussianLatent z_task_dist;
  Var z_task;
  Var y_task;
  std::optional<GaussianLatent> z_noise_dist;
  std::optional<Var> z_noise;
  std::optional<Var> y_joint;
};

/// Train mode draws one reparameterization sample per branch from `rng`;
/// eval mode uses posterior means and never touches `rng`.
BlockOutput block_forward(const BoundBlock& params, const BlockSpec& spec, Var x, Mode mode,
                          Rng& rng);

struct BranchLoss {
  Var total;
  Var mse;
  Var kl;
};

Var mse(Var prediction, Var target);

/// MSE(y_task, y) + beta_task * KL(z_task posterior || N(0, I)).
BranchLoss task_loss(const BlockOutput& out, Var y, double beta_task);

/// MSE(y_joint, y) + beta_noise * KL(z_noise posterior || N(0, I)).
BranchLoss noise_loss(const BlockOutput& out, Var y, double beta_noise);

}  // namespace infosep::separation
