#include "infosep/adversarial.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace infosep::adversarial {

void AdvSpec::validate(Index d_task, Index d_noise) const {
  critic.validate();
  if (critic.in_dim != d_task + d_noise || critic.out_dim != 1) {
    throw std::invalid_argument("AdvSpec: critic must map " + std::to_string(d_task + d_noise) +
                                " inputs to 1 output");
  }
  if (lambda_adv < 0.0 || gp_coeff < 0.0) {
    throw std::invalid_argument("AdvSpec: lambda_adv and gp_coeff must be non-negative");
  }
  if (n_critic < 1) throw std::invalid_argument("AdvSpec: n_critic must be >= 1");
}

MlpSpec default_critic(Index d_task, Index d_noise, double slope) {
  return {d_task + d_noise, {50, 50}, 1, slope};
}

std::vector<Index> random_permutation(Index n, Rng& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

Var shuffle(Var z_noise, std::span<const Index> perm) { return z_noise.graph->permute_rows(z_noise, perm); }

Var interpolate(Var paired, Var shuffled, const Matrix& eps) {
  Graph& g = *paired.graph;
  if (paired.shape() != shuffled.shape()) {
    throw ad::ShapeError("interpolate: paired " + paired.shape().str() + " vs shuffled " +
                         shuffled.shape().str());
  }
  if (eps.rows() != paired.rows() || eps.cols() != 1) {
    throw ad::ShapeError("interpolate: eps must be " + std::to_string(paired.rows()) + "x1, got " +
                         ad::shape_of(eps).str());
  }
  const Matrix w = eps.replicate(1, paired.cols());
  const Matrix one_minus = (1.0 - w.array()).matrix();
  return g.add(g.mul(g.constant(w), paired), g.mul(g.constant(one_minus), shuffled));
}

Var critic_input(Var z_task, Var z_noise) { return z_task.graph->concat(z_noise, z_task); }

Var PairBatch::paired() const { return critic_input(z_task, z_noise); }
Var PairBatch::shuffled() const { return critic_input(z_task, shuffle(z_noise, perm)); }

CriticLoss critic_loss(std::span<const Var> critic, const AdvSpec& spec, const PairBatch& pair,
                       const Matrix& eps) {
  Graph& g = *pair.z_task.graph;
  const Var paired = pair.paired();
  const Var shuffled = pair.shuffled();

  CriticLoss out;
  out.paired_mean = g.mean(nn::mlp_forward(critic, spec.critic, paired));
  out.shuffled_mean = g.mean(nn::mlp_forward(critic, spec.critic, shuffled));

  const Var z_hat = interpolate(paired, shuffled, eps);
  const Var d_hat = g.sum(nn::mlp_forward(critic, spec.critic, z_hat));
  const Var grad = g.gradient_graph(d_hat, z_hat);
  out.penalty = g.scale(g.mean(g.square(g.add_scalar(g.row_l2_norm(grad), -1.0))), spec.gp_coeff);

  out.loss = g.add(g.sub(out.shuffled_mean, out.paired_mean), out.penalty);
  return out;
}

Var encoder_adv_loss(std::span<const Var> critic, const MlpSpec& critic_spec, const PairBatch& pair) {
  Graph& g = *pair.z_task.graph;
  const Var paired = g.mean(nn::mlp_forward(critic, critic_spec, pair.paired()));
  const Var shuffled = g.mean(nn::mlp_forward(critic, critic_spec, pair.shuffled()));
  return g.sub(paired, shuffled);
}

JsdLosses jsd_losses(std::span<const Var> critic, const AdvSpec& spec, const PairBatch& pair) {
  Graph& g = *pair.z_task.graph;
  const auto prob = [&](Var input) {
    return g.clamp(g.sigmoid(nn::mlp_forward(critic, spec.critic, input)), kProbabilityClamp,
                   1.0 - kProbabilityClamp);
  };
  const auto one_minus = [&](Var p) { return g.add_scalar(g.scale(p, -1.0), 1.0); };
  const Var p_paired = prob(pair.paired());
  const Var p_shuffled = prob(pair.shuffled());

  JsdLosses out;
  out.objective = g.add(g.mean(g.log(p_paired)), g.mean(g.log(one_minus(p_shuffled))));
  out.critic_loss = g.scale(out.objective, -1.0);
  if (spec.non_saturating) {
    out.encoder_loss = g.scale(g.add(g.mean(g.log(one_minus(p_paired))), g.mean(g.log(p_shuffled))), -1.0);
  } else {
    out.encoder_loss = out.objective;
  }
  return out;
}

void critic_schedule(int n_critic, const std::function<void(int)>& critic_step,
                     const std::function<void()>& encoder_step) {
  if (n_critic < 1) throw std::invalid_argument("critic_schedule: n_critic must be >= 1");
  for (int k = 0; k < n_critic; ++k) critic_step(k);
  encoder_step();
}

}  // namespace infosep::adversarial
