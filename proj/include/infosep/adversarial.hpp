#pragma once

// Independence game between z_task and z_noise. Paired rows (z_task_j,
// z_noise_j) sample the joint; permuting z_noise within the batch samples the
// product of marginals. A critic separates the two; the encoders are trained
// to make them indistinguishable.

#include "infosep/nn.hpp"
#include "infosep/rng.hpp"

#include <functional>
#include <span>
#include <vector>

namespace infosep::adversarial {

using ad::Graph;
using ad::Index;
using ad::Matrix;
using ad::Var;
using nn::MlpSpec;

enum class Objective { wasserstein_gp, jsd };

struct AdvSpec {
  MlpSpec critic{7, {50, 50}, 1, nn::kDefaultSlope};
  double lambda_adv = 1.0;
  double gp_coeff = 10.0;
  int n_critic = 2;
  Objective objective = Objective::wasserstein_gp;
  /// JSD only: encoders minimize -log(1 - D(paired)) - log D(shuffled).
  bool non_saturating = false;

  void validate(Index d_task, Index d_noise) const;
};

MlpSpec default_critic(Index d_task, Index d_noise, double slope = nn::kDefaultSlope);

std::vector<Index> random_permutation(Index n, Rng& rng);

/// Rows of z_noise reordered so that row j holds z_noise[perm[j]].
Var shuffle(Var z_noise, std::span<const Index> perm);

/// eps * paired + (1 - eps) * shuffled with one eps per row (eps is batch x 1).
Var interpolate(Var paired, Var shuffled, const Matrix& eps);

/// Critic input: concat(z_noise, z_task).
Var critic_input(Var z_task, Var z_noise);

struct PairBatch {
  Var z_task;
  Var z_noise;
  std::vector<Index> perm;

  Var paired() const;
  Var shuffled() const;
};

struct CriticLoss {
  Var loss;
  Var paired_mean;
  Var shuffled_mean;
  Var penalty;

  /// E_paired[D] - E_shuffled[D].
  double estimate() const { return paired_mean.scalar() - shuffled_mean.scalar(); }
};

/// E_shuffled[D] - E_paired[D] + gp_coeff * E[(||grad D(z_hat)||_2 - 1)^2].
CriticLoss critic_loss(std::span<const Var> critic, const AdvSpec& spec, const PairBatch& pair,
                       const Matrix& eps);

/// E_paired[D] - E_shuffled[D]; bind the critic frozen so no gradient reaches it.
Var encoder_adv_loss(std::span<const Var> critic, const MlpSpec& critic_spec, const PairBatch& pair);

inline constexpr double kProbabilityClamp = 1e-7;

struct JsdLosses {
  Var critic_loss;
  Var encoder_loss;
  /// E_paired[log D] + E_shuffled[log(1 - D)], maximized by the critic.
  Var objective;
};

JsdLosses jsd_losses(std::span<const Var> critic, const AdvSpec& spec, const PairBatch& pair);

/// n_critic critic updates followed by exactly one encoder update.
void critic_schedule(int n_critic, const std::function<void(int)>& critic_step,
                     const std::function<void()>& encoder_step);

}  // namespace infosep::adversarial
