#include "infosep/separation.hpp"

#include <stdexcept>

namespace infosep::separation {

MlpSpec BlockSpec::feature_encoder() const { return {input_dim, encoder_hidden, 2 * d_task, slope}; }
MlpSpec BlockSpec::task_predictor() const { return {d_task, predictor_hidden, 1, slope}; }
MlpSpec BlockSpec::noise_encoder() const {
  return {input_dim + d_task, encoder_hidden, 2 * d_noise, slope};
}
MlpSpec BlockSpec::joint_predictor() const { return {d_task + d_noise, predictor_hidden, 1, slope}; }

void BlockSpec::validate() const {
  if (input_dim < 1 || d_task < 1 || d_noise < 0) {
    throw std::invalid_argument("BlockSpec: input_dim and d_task must be >= 1, d_noise >= 0");
  }
  feature_encoder().validate();
  task_predictor().validate();
  if (has_noise_branch()) {
    noise_encoder().validate();
    joint_predictor().validate();
  }
  beta_task.validate();
  beta_noise.validate();
}

BlockParams init_block(const BlockSpec& spec, std::uint64_t seed) {
  spec.validate();
  BlockParams p;
  p.feature_encoder = nn::init_params(spec.feature_encoder(), derive_seed(seed, "feature_encoder"));
  p.task_predictor = nn::init_params(spec.task_predictor(), derive_seed(seed, "task_predictor"));
  if (spec.has_noise_branch()) {
    p.noise_encoder = nn::init_params(spec.noise_encoder(), derive_seed(seed, "noise_encoder"));
    p.joint_predictor = nn::init_params(spec.joint_predictor(), derive_seed(seed, "joint_predictor"));
  }
  return p;
}

BoundBlock bind_block(Graph& graph, const BlockParams& params, bool trainable) {
  return {params.feature_encoder.bind(graph, trainable), params.task_predictor.bind(graph, trainable),
          params.noise_encoder.bind(graph, trainable), params.joint_predictor.bind(graph, trainable)};
}

BlockOutput block_forward(const BoundBlock& params, const BlockSpec& spec, Var x, Mode mode,
                          Rng& rng) {
  if (x.cols() != spec.input_dim) {
    throw ad::ShapeError("block_forward: input has " + std::to_string(x.cols()) +
                         " columns, block expects " + std::to_string(spec.input_dim));
  }
  Graph& g = *x.graph;
  const Index batch = x.rows();
  const auto draw = [&](Index d) -> std::optional<Matrix> {
    if (mode == Mode::eval) return std::nullopt;
    return standard_normal(batch, d, rng);
  };

  BlockOutput out;
  out.z_task_dist = latent::gaussian_head(
      nn::mlp_forward(params.feature_encoder, spec.feature_encoder(), x), spec.d_task);
  out.z_task = latent::reparameterize(out.z_task_dist, draw(spec.d_task));
  out.y_task = nn::mlp_forward(params.task_predictor, spec.task_predictor(), out.z_task);

  if (spec.has_noise_branch()) {
    const Var task_in = spec.noise_grad_to_task ? out.z_task : g.constant(out.z_task.value());
    const Var h = nn::mlp_forward(params.noise_encoder, spec.noise_encoder(), g.concat(x, task_in));
    out.z_noise_dist = latent::gaussian_head(h, spec.d_noise);
    out.z_noise = latent::reparameterize(*out.z_noise_dist, draw(spec.d_noise));
    out.y_joint = nn::mlp_forward(params.joint_predictor, spec.joint_predictor(),
                                  g.concat(out.z_task, *out.z_noise));
  }
  return out;
}

Var mse(Var prediction, Var target) {
  Graph& g = *prediction.graph;
  return g.mean(g.square(g.sub(prediction, target)));
}

namespace {

BranchLoss branch_loss(Var prediction, const GaussianLatent& posterior, Var y, double beta) {
  Graph& g = *y.graph;
  BranchLoss loss;
  loss.mse = mse(prediction, y);
  loss.kl = latent::kl_standard_normal(posterior);
  loss.total = g.add(loss.mse, g.scale(loss.kl, beta));
  return loss;
}

}  // namespace

BranchLoss task_loss(const BlockOutput& out, Var y, double beta_task) {
  return branch_loss(out.y_task, out.z_task_dist, y, beta_task);
}

BranchLoss noise_loss(const BlockOutput& out, Var y, double beta_noise) {
  if (!out.y_joint) throw std::logic_error("noise_loss: block has no noise branch");
  return branch_loss(*out.y_joint, *out.z_noise_dist, y, beta_noise);
}

}  // namespace infosep::separation
