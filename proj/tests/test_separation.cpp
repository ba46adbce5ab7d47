#include "infosep/separation.hpp"

#include "support/finite_diff.hpp"

#include <gtest/gtest.h>

using namespace infosep;
using namespace infosep::separation;
using namespace infosep::testing;

namespace {

BlockSpec small_block() {
  BlockSpec s;
  s.input_dim = 4;
  s.d_task = 2;
  s.d_noise = 3;
  s.encoder_hidden = {6};
  s.predictor_hidden = {5};
  return s;
}

BlockOutput manual_output(Graph& g, const Matrix& y_task, const Matrix& mu, const Matrix& log_var) {
  BlockOutput out;
  out.z_task_dist = {g.constant(mu), g.constant(log_var)};
  out.z_task = out.z_task_dist.mean;
  out.y_task = g.constant(y_task);
  return out;
}

}  // namespace

TEST(Block, EvalModeIsDeterministicAndLeavesRngAlone) {
  const BlockSpec spec = small_block();
  const BlockParams p = init_block(spec, 3);
  Rng rng_a(1), rng_b(1);
  Rng input_rng(2);
  const Matrix x = standard_normal(5, 4, input_rng);
  Graph g;
  const BoundBlock b = bind_block(g, p, false);
  const BlockOutput o1 = block_forward(b, spec, g.constant(x), Mode::eval, rng_a);
  const BlockOutput o2 = block_forward(b, spec, g.constant(x), Mode::eval, rng_a);
  EXPECT_EQ(o1.y_task.value(), o2.y_task.value());
  EXPECT_EQ(o1.y_joint->value(), o2.y_joint->value());
  EXPECT_EQ(rng_a(), rng_b());
}

TEST(Block, LatentShapesMatchConfiguredDims) {
  BlockSpec spec = small_block();
  spec.input_dim = 8;
  spec.d_task = 2;
  spec.d_noise = 5;
  const BlockParams p = init_block(spec, 0);
  Graph g;
  Rng rng(0);
  const BlockOutput o = block_forward(bind_block(g, p, true), spec, g.constant(Matrix::Ones(20, 8)), Mode::train, rng);
  EXPECT_EQ(o.z_task.rows(), 20);
  EXPECT_EQ(o.z_task.cols(), 2);
  EXPECT_EQ(o.z_noise->rows(), 20);
  EXPECT_EQ(o.z_noise->cols(), 5);
  EXPECT_EQ(o.y_task.cols(), 1);
  EXPECT_EQ(o.y_joint->cols(), 1);
}

TEST(Block, ZeroedNoiseHeadGivesPriorPosterior) {
  const BlockSpec spec = small_block();
  BlockParams p = init_block(spec, 5);
  p.noise_encoder.at("W1").setZero();
  p.noise_encoder.at("b1").setZero();
  Graph g;
  Rng rng(0);
  const BlockOutput o = block_forward(bind_block(g, p, false), spec, g.constant(Matrix::Ones(3, 4)), Mode::eval, rng);
  EXPECT_TRUE(o.z_noise_dist->mean.value().isZero(0.0));
  EXPECT_TRUE(o.z_noise_dist->log_var.value().isZero(0.0));
  EXPECT_TRUE(o.z_noise->value().isZero(0.0));
}

TEST(Block, FeatureOnlyBlockHasNoNoiseBranch) {
  BlockSpec spec = small_block();
  spec.d_noise = 0;
  const BlockParams p = init_block(spec, 5);
  EXPECT_TRUE(p.noise_encoder.empty());
  Graph g;
  Rng rng(0);
  const BlockOutput o = block_forward(bind_block(g, p, false), spec, g.constant(Matrix::Ones(3, 4)), Mode::eval, rng);
  EXPECT_FALSE(o.z_noise.has_value());
  EXPECT_THROW(noise_loss(o, g.constant(Matrix::Zero(3, 1)), 0.1), std::logic_error);
}

TEST(Block, WrongInputWidthThrows) {
  const BlockSpec spec = small_block();
  const BlockParams p = init_block(spec, 5);
  Graph g;
  Rng rng(0);
  EXPECT_THROW(block_forward(bind_block(g, p, false), spec, g.constant(Matrix::Ones(3, 5)), Mode::eval, rng),
               ad::ShapeError);
}

TEST(TaskLoss, PerfectPredictionAtPriorIsZero) {
  Graph g;
  const Matrix y = Matrix::Constant(3, 1, 1.5);
  const BlockOutput o = manual_output(g, y, Matrix::Zero(3, 2), Matrix::Zero(3, 2));
  EXPECT_EQ(task_loss(o, g.constant(y), 0.7).total.scalar(), 0.0);
}

TEST(TaskLoss, KlWeightedByBeta) {
  Graph g;
  const Matrix y = Matrix::Constant(1, 1, 2.0);
  const BlockOutput o = manual_output(g, y, Matrix::Ones(1, 1), Matrix::Zero(1, 1));
  EXPECT_DOUBLE_EQ(task_loss(o, g.constant(y), 0.5).total.scalar(), 0.25);
}

TEST(TaskLoss, ZeroBetaIsPlainMse) {
  Graph g;
  Matrix pred(3, 1), y(3, 1);
  pred << 1.0, 2.0, 4.0;
  y << 0.0, 2.5, 1.0;
  // (1 + 0.25 + 9) / 3
  const BlockOutput o = manual_output(g, pred, Matrix::Ones(3, 2), Matrix::Ones(3, 2));
  EXPECT_DOUBLE_EQ(task_loss(o, g.constant(y), 0.0).total.scalar(), 10.25 / 3.0);
}

TEST(NoiseLoss, Examples) {
  Graph g;
  BlockOutput o = manual_output(g, Matrix::Zero(2, 1), Matrix::Zero(2, 2), Matrix::Zero(2, 2));
  o.z_noise_dist = GaussianLatent{g.constant(Matrix::Zero(2, 1)), g.constant(Matrix::Zero(2, 1))};
  o.z_noise = o.z_noise_dist->mean;
  o.y_joint = g.constant(Matrix::Constant(2, 1, 2.0));
  EXPECT_EQ(noise_loss(o, g.constant(Matrix::Constant(2, 1, 2.0)), 0.3).total.scalar(), 0.0);

  o.y_joint = g.constant(Matrix::Zero(2, 1));
  EXPECT_DOUBLE_EQ(noise_loss(o, g.constant(Matrix::Constant(2, 1, 2.0)), 0.0).mse.scalar(), 4.0);

  // KL of a unit-mean, unit-variance one-dim posterior is 0.5; two dims give 1.
  o.z_noise_dist = GaussianLatent{g.constant(Matrix::Ones(2, 2)), g.constant(Matrix::Zero(2, 2))};
  o.y_joint = g.constant(Matrix::Constant(2, 1, 2.0));
  EXPECT_NEAR(noise_loss(o, g.constant(Matrix::Constant(2, 1, 2.0)), 8e-5).total.scalar(), 8e-5, 1e-18);
}

TEST(Gradients, TaskAndNoiseLossesMatchFiniteDifferences) {
  const BlockSpec spec = small_block();
  const BlockParams p = init_block(spec, 21);
  Rng data_rng(4);
  Graph g;
  const BoundBlock b = bind_block(g, p, true);
  const Var x = g.constant(standard_normal(6, 4, data_rng));
  const Var y = g.constant(standard_normal(6, 1, data_rng));
  Rng rng(9);
  const BlockOutput o = block_forward(b, spec, x, Mode::train, rng);

  const Var lt = task_loss(o, y, 0.3).total;
  g.backward(lt);
  for (const auto* group : {&b.feature_encoder, &b.task_predictor}) {
    for (const Var& leaf : *group) {
      EXPECT_LT(rel_error(g.grad(leaf), numeric_grad(g, leaf, lt)), 1e-4);
    }
  }

  const Var ln = noise_loss(o, y, 0.2).total;
  g.backward(ln);
  for (const auto* group : {&b.feature_encoder, &b.noise_encoder, &b.joint_predictor}) {
    for (const Var& leaf : *group) {
      EXPECT_LT(rel_error(g.grad(leaf), numeric_grad(g, leaf, ln)), 1e-4);
    }
  }
}

TEST(Gradients, PredictorsOnlySeeTheirOwnLoss) {
  const BlockSpec spec = small_block();
  const BlockParams p = init_block(spec, 2);
  Rng data_rng(4);
  Graph g;
  const BoundBlock b = bind_block(g, p, true);
  const Var x = g.constant(standard_normal(6, 4, data_rng));
  const Var y = g.constant(standard_normal(6, 1, data_rng));
  Rng rng(1);
  const BlockOutput o = block_forward(b, spec, x, Mode::train, rng);

  g.backward(task_loss(o, y, 0.1).total);
  for (const Var& v : b.joint_predictor) EXPECT_TRUE(g.grad(v).isZero(0.0));
  for (const Var& v : b.noise_encoder) EXPECT_TRUE(g.grad(v).isZero(0.0));

  g.backward(noise_loss(o, y, 0.1).total);
  for (const Var& v : b.task_predictor) EXPECT_TRUE(g.grad(v).isZero(0.0));
  double joint_norm = 0.0;
  for (const Var& v : b.joint_predictor) joint_norm += g.grad(v).norm();
  EXPECT_GT(joint_norm, 0.0);
}

TEST(Gradients, DetachedTaskInputToNoiseEncoder) {
  BlockSpec spec = small_block();
  const BlockParams p = init_block(spec, 2);
  Rng data_rng(4);
  const Matrix xv = standard_normal(6, 4, data_rng);
  const Matrix yv = standard_normal(6, 1, data_rng);
  const auto feature_grad = [&](bool flow) {
    spec.noise_grad_to_task = flow;
    Graph g;
    const BoundBlock b = bind_block(g, p, true);
    Rng rng(1);
    const BlockOutput o = block_forward(b, spec, g.constant(xv), Mode::eval, rng);
    // Only the noise-encoder path: KL of z_noise depends on z_task solely through that encoder.
    g.backward(o.z_noise_dist->log_var.graph->sum(o.z_noise_dist->mean));
    return g.grad(b.feature_encoder[0]);
  };
  EXPECT_GT(feature_grad(true).norm(), 0.0);
  EXPECT_TRUE(feature_grad(false).isZero(0.0));
}
