#include "infosep/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace infosep;
using namespace infosep::pipeline;

namespace {

Dataset tiny_synthetic(Index n = 60, std::uint64_t seed = 1) {
  data::SyntheticSpec s;
  s.n_samples = n;
  return data::normalize(data::split(data::generate_synthetic(s, 7), data::SplitSpec::by_ratio(0.7), seed));
}

/// Two small layers: 13 -> (2 task, 3 noise) -> (2 task, feature only).
ModelSpec small_model(Variant v = Variant::A0) {
  BlockSpec b1;
  b1.input_dim = 13;
  b1.d_task = 2;
  b1.d_noise = 3;
  b1.encoder_hidden = {8};
  b1.predictor_hidden = {8};
  b1.beta_task = latent::BetaSpec::normal(0.06, 0.001);
  b1.beta_noise = latent::BetaSpec::fixed_at(8e-5);
  BlockSpec b2 = b1;
  b2.input_dim = 3;
  b2.d_noise = 0;
  b2.beta_task = latent::BetaSpec::normal(4e-4, 1e-5);
  b2.beta_noise = latent::BetaSpec::fixed_at(0.0);

  ModelSpec m;
  m.layers = {b1, b2};
  AdvSpec a;
  a.critic = adversarial::default_critic(2, 3);
  a.critic.hidden = {8};
  m.adv = {a, a};
  m.final_hidden = {8};
  m.variant = v;
  return m;
}

ScheduleSpec joint(int epochs) {
  ScheduleSpec s;
  s.epochs = {epochs};
  s.lr = {1e-3};
  return s;
}

ScheduleSpec two_stage(int e1, int e2) {
  ScheduleSpec s;
  s.strategy = ScheduleSpec::Strategy::two_stage;
  s.epochs = {e1, e2};
  s.lr = {1e-3, 5e-4};
  return s;
}

}  // namespace

TEST(Variant, RoundTrip) {
  for (Variant v : {Variant::A0, Variant::A1, Variant::A2, Variant::A3}) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("A9"), std::invalid_argument);
}

TEST(ModelSpec, ValidatesCascadeWidths) {
  ModelSpec m = small_model();
  EXPECT_NO_THROW(m.validate());
  m.layers[1].input_dim = 4;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = small_model();
  m.adv.pop_back();
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = small_model();
  m.layers[0].d_noise = 0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(ModelSpec, VariantsShapeTheModel) {
  EXPECT_EQ(small_model(Variant::A0).active_depth(), 2u);
  EXPECT_EQ(small_model(Variant::A1).active_depth(), 1u);
  EXPECT_EQ(small_model(Variant::A1).effective_head(), FinalHead::first_task_predictor);
  EXPECT_TRUE(small_model(Variant::A0).uses_critic(0));
  EXPECT_FALSE(small_model(Variant::A0).uses_critic(1));
  EXPECT_FALSE(small_model(Variant::A3).uses_critic(0));
  EXPECT_EQ(small_model().final_predictor().in_dim, 4);
}

TEST(Cascade, NoiseCodeFeedsNextLayer) {
  const ModelSpec spec = small_model();
  const ModelParams p = init_model(spec, 3);
  Graph g;
  BoundModel bound;
  for (const auto& b : p.blocks) bound.blocks.push_back(separation::bind_block(g, b, false));
  bound.final_head = p.final_head.bind(g, false);
  Rng rng(0);
  const CascadeOutput out = forward_cascade(bound, spec, g.constant(Matrix::Ones(5, 13)), Mode::eval, rng);
  ASSERT_EQ(out.layers.size(), 2u);
  EXPECT_EQ(out.layers[0].z_noise->cols(), 3);
  EXPECT_FALSE(out.layers[1].z_noise.has_value());
  ASSERT_TRUE(out.y_final.has_value());
  EXPECT_EQ(out.y_final->rows(), 5);

  const CascadeOutput shallow =
      forward_cascade(bound, spec, g.constant(Matrix::Ones(5, 13)), Mode::eval, rng, std::size_t{1});
  EXPECT_EQ(shallow.layers.size(), 1u);
  EXPECT_FALSE(shallow.y_final.has_value());
}

TEST(VibReduction, DegenerateSingleLayerEqualsVibLoss) {
  VibSpec vib;
  vib.input_dim = 6;
  vib.d_z = 3;
  vib.encoder_hidden = {7, 5};
  vib.predictor_hidden = {4};
  vib.beta = 0.37;

  BlockSpec b;
  b.input_dim = vib.input_dim;
  b.d_task = vib.d_z;
  b.d_noise = 0;
  b.encoder_hidden = vib.encoder_hidden;
  b.predictor_hidden = vib.predictor_hidden;
  b.beta_task = latent::BetaSpec::fixed_at(vib.beta);
  ModelSpec m;
  m.layers = {b};
  m.adv = {AdvSpec{}};
  m.head = FinalHead::first_task_predictor;
  m.variant = Variant::A3;

  const VibParams vp = init_vib(vib, 11);
  ModelParams mp = init_model(m, 0);
  mp.blocks[0].feature_encoder = vp.encoder;
  mp.blocks[0].task_predictor = vp.predictor;

  Rng data_rng(5);
  const Matrix x = standard_normal(9, 6, data_rng);
  const Matrix y = standard_normal(9, 1, data_rng);

  Graph g1;
  Rng r1(42);
  const double expected =
      vib_loss(vp.encoder.bind(g1, true), vp.predictor.bind(g1, true), vib, g1.constant(x), g1.constant(y), Mode::train, r1)
          .total.scalar();

  Graph g2;
  Rng r2(42);
  BoundModel bound;
  bound.blocks.push_back(separation::bind_block(g2, mp.blocks[0], true));
  const CascadeOutput out = forward_cascade(bound, m, g2.constant(x), Mode::train, r2);
  Rng beta_rng(0);
  const auto betas = sample_betas(m, beta_rng);
  const std::vector<std::optional<Var>> no_adv(1);
  const double actual = total_loss(m, out, g2.constant(y), betas, no_adv, {true}, true).total.scalar();
  EXPECT_NEAR(actual, expected, 1e-12);
}

TEST(Loss, ZeroLambdaBlocksAdversarialGradient) {
  ModelSpec spec = small_model();
  spec.adv[0].lambda_adv = 0.0;
  const ModelParams p = init_model(spec, 3);
  Rng data_rng(2);
  const Matrix x = standard_normal(6, 13, data_rng);
  const Matrix y = standard_normal(6, 1, data_rng);
  const auto encoder_grad = [&](bool with_adv) {
    Graph g;
    BoundModel bound;
    for (const auto& b : p.blocks) bound.blocks.push_back(separation::bind_block(g, b, true));
    bound.final_head = p.final_head.bind(g, true);
    Rng rng(4);
    const CascadeOutput out = forward_cascade(bound, spec, g.constant(x), Mode::train, rng);
    std::vector<std::optional<Var>> adv(2);
    if (with_adv) {
      const auto critic = p.critics[0].bind(g, false);
      Rng prng(1);
      adv[0] = adversarial::encoder_adv_loss(
          critic, spec.adv[0].critic,
          {out.layers[0].z_task, *out.layers[0].z_noise, adversarial::random_permutation(6, prng)});
    }
    const std::vector<LayerBetas> betas(2, LayerBetas{0.1, 0.01});
    g.backward(total_loss(spec, out, g.constant(y), betas, adv, {true, true}, true).total);
    return g.grad(bound.blocks[0].feature_encoder[0]);
  };
  EXPECT_EQ(encoder_grad(true), encoder_grad(false));
}

TEST(Loss, A2DropsKlTerms) {
  const ModelSpec spec = small_model(Variant::A2);
  const ModelParams p = init_model(spec, 3);
  Graph g;
  BoundModel bound;
  for (const auto& b : p.blocks) bound.blocks.push_back(separation::bind_block(g, b, true));
  bound.final_head = p.final_head.bind(g, true);
  Rng rng(0);
  const Var y = g.constant(Matrix::Zero(4, 1));
  const CascadeOutput out = forward_cascade(bound, spec, g.constant(Matrix::Ones(4, 13)), Mode::eval, rng);
  const std::vector<LayerBetas> big(2, LayerBetas{100.0, 100.0});
  const std::vector<LayerBetas> none(2, LayerBetas{0.0, 0.0});
  const std::vector<std::optional<Var>> adv(2);
  EXPECT_EQ(total_loss(spec, out, y, big, adv, {true, true}, true).total.scalar(),
            total_loss(spec, out, y, none, adv, {true, true}, true).total.scalar());
}

TEST(Schedule, ValidatesPhaseCounts) {
  EXPECT_THROW(joint(5).validate(2), std::invalid_argument);
  EXPECT_THROW(two_stage(1, 1).validate(1), std::invalid_argument);
  ScheduleSpec s = joint(1);
  s.lr = {0.0};
  EXPECT_THROW(s.validate(1), std::invalid_argument);
}

TEST(Training, CriticStepsPerEncoderStep) {
  const Dataset data = tiny_synthetic();
  ModelSpec spec = small_model();
  spec.adv[0].n_critic = 2;
  const TrainResult r = train(spec, data, joint(2), 0);
  EXPECT_GT(r.record.encoder_steps, 0);
  EXPECT_EQ(r.record.critic_steps, 2 * r.record.encoder_steps);
  EXPECT_EQ(r.record.critic_graph_builds, r.record.critic_steps);
  EXPECT_EQ(r.record.epochs_run, 2);

  spec.adv[0].n_critic = 6;
  EXPECT_EQ(train(spec, data, joint(1), 0).record.critic_steps, 6 * train(spec, data, joint(1), 0).record.encoder_steps);
}

TEST(Training, A3BuildsNoCriticGraph) {
  const Dataset data = tiny_synthetic();
  const TrainResult r = train(small_model(Variant::A3), data, joint(2), 0);
  EXPECT_EQ(r.record.critic_graph_builds, 0);
  EXPECT_EQ(r.record.critic_steps, 0);
  for (double c : r.record.trace.critic) EXPECT_EQ(c, 0.0);
  for (double a : r.record.trace.adv) EXPECT_EQ(a, 0.0);
}

TEST(Training, SameSeedSameResult) {
  const Dataset data = tiny_synthetic();
  const TrainResult a = train(small_model(), data, two_stage(2, 2), 5);
  const TrainResult b = train(small_model(), data, two_stage(2, 2), 5);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(a.record.r2_test, b.record.r2_test);
  EXPECT_EQ(a.record.trace.total, b.record.trace.total);
  const TrainResult c = train(small_model(), data, two_stage(2, 2), 6);
  EXPECT_FALSE(a.params == c.params);
}

TEST(Training, TwoStageFreezesFirstLayerInSecondPhase) {
  const Dataset data = tiny_synthetic();
  const ModelSpec spec = small_model();
  const ModelParams init = init_model(spec, 9);
  const TrainResult phase1_only = train(spec, data, two_stage(3, 0), 9);
  const TrainResult both = train(spec, data, two_stage(3, 4), 9);
  // Layer 1 and its critic are bit-identical after phase 2.
  EXPECT_TRUE(phase1_only.params.blocks[0] == both.params.blocks[0]);
  EXPECT_TRUE(phase1_only.params.critics[0] == both.params.critics[0]);
  EXPECT_FALSE(both.params.blocks[0] == init.blocks[0]);
  // Layer 2 and the head train only in phase 2.
  EXPECT_TRUE(phase1_only.params.blocks[1] == init.blocks[1]);
  EXPECT_TRUE(phase1_only.params.final_head == init.final_head);
  EXPECT_FALSE(both.params.blocks[1] == init.blocks[1]);
  EXPECT_FALSE(both.params.final_head == init.final_head);
}

TEST(Training, A1NeverTouchesSecondLayer) {
  const Dataset data = tiny_synthetic();
  const ModelSpec spec = small_model(Variant::A1);
  const ModelParams init = init_model(spec, 2);
  const TrainResult r = train(spec, data, two_stage(2, 2), 2);
  EXPECT_TRUE(r.params.blocks[1] == init.blocks[1]);
  EXPECT_TRUE(r.params.final_head == init.final_head);
  EXPECT_FALSE(r.params.blocks[0] == init.blocks[0]);
  EXPECT_EQ(r.record.epochs_run, 4);
}

TEST(Training, RecordIsLabelledAndScored) {
  const Dataset data = tiny_synthetic();
  const TrainResult r = train(small_model(), data, joint(3), 0);
  EXPECT_EQ(r.record.model, "adverisf");
  EXPECT_EQ(r.record.variant, "A0");
  EXPECT_EQ(r.record.strategy, "joint");
  EXPECT_TRUE(std::isfinite(r.record.r2_train));
  EXPECT_TRUE(std::isfinite(r.record.r2_test));
  EXPECT_TRUE(std::isnan(r.record.r2_valid));
  EXPECT_GE(r.record.latent_abs_corr, 0.0);
  EXPECT_LE(r.record.latent_abs_corr, 1.0);
  EXPECT_EQ(r.record.trace.total.size(), 3u);
  EXPECT_EQ(predict(small_model(), r.params, data.rows_of(data.test)).size(),
            static_cast<Index>(data.test.size()));
}

TEST(Training, EarlyStoppingEndsOnPatience) {
  const Dataset data = data::normalize(
      data::split(data::generate_synthetic({.n_samples = 60}, 7), data::SplitSpec::by_ratio(0.7, 0.3), 1));
  ScheduleSpec s = joint(400);
  s.lr = {3e-2};
  s.patience = 3;
  const TrainResult r = train(small_model(), data, s, 0);
  EXPECT_LT(r.record.epochs_run, 400);
  EXPECT_TRUE(std::isfinite(r.record.r2_valid));
}

TEST(Baselines, MlpFitsALine) {
  Dataset ds;
  ds.X.resize(100, 1);
  ds.y.resize(100);
  for (Index i = 0; i < 100; ++i) {
    ds.X(i, 0) = -2.0 + 4.0 * static_cast<double>(i) / 99.0;
    ds.y(i) = 2.0 * ds.X(i, 0) + 1.0;
  }
  ds.feature_names = {"x"};
  ds = data::normalize(data::split(ds, data::SplitSpec::by_ratio(0.8), 0));
  ScheduleSpec s = joint(300);
  s.lr = {1e-3};
  const auto r = train_baseline_mlp({1, {16}, 1}, ds, s, 0);
  EXPECT_GT(r.record.r2_test, 0.999);
  EXPECT_EQ(r.record.model, "mlp");
}

TEST(Baselines, VibTrainsAndIsDeterministic) {
  const Dataset data = tiny_synthetic();
  VibSpec v;
  v.input_dim = 13;
  v.encoder_hidden = {8};
  v.predictor_hidden = {8};
  const auto a = train_baseline_vib(v, data, joint(3), 1);
  const auto b = train_baseline_vib(v, data, joint(3), 1);
  EXPECT_EQ(a.record.r2_test, b.record.r2_test);
  EXPECT_EQ(a.record.model, "vib");
  EXPECT_EQ(a.record.encoder_steps, b.record.encoder_steps);
  v.input_dim = 5;
  EXPECT_THROW(train_baseline_vib(v, data, joint(1), 1), std::invalid_argument);
}

TEST(Baselines, DivergenceSurfacesAsError) {
  Dataset ds = tiny_synthetic();
  ds.y(ds.train.front()) = std::nan("");
  EXPECT_ANY_THROW(train_baseline_mlp({13, {4}, 1}, ds, joint(1), 0));
}
