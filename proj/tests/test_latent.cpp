#include "infosep/latent.hpp"

#include "support/finite_diff.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace infosep;
using namespace infosep::latent;
using namespace infosep::testing;

TEST(GaussianHead, SplitsMeanThenLogVar) {
  Graph g;
  Matrix h(1, 4);
  h << 1, 2, 0, 0;
  const GaussianLatent z = gaussian_head(g.constant(h), 2);
  EXPECT_EQ(z.mean.value(), (Matrix(1, 2) << 1, 2).finished());
  EXPECT_TRUE(z.log_var.value().isZero(0.0));
}

TEST(GaussianHead, ShapesAndErrors) {
  Graph g;
  const GaussianLatent z = gaussian_head(g.constant(Matrix::Ones(20, 6)), 3);
  EXPECT_EQ(z.mean.rows(), 20);
  EXPECT_EQ(z.dim(), 3);
  EXPECT_EQ(z.log_var.cols(), 3);
  EXPECT_THROW(gaussian_head(g.constant(Matrix::Ones(2, 5)), 3), ad::ShapeError);
}

TEST(Reparameterize, NoiseFreeAndUnitVariance) {
  Graph g;
  Matrix mean(2, 2);
  mean << 1, -1, 0.5, 3;
  const GaussianLatent z{g.constant(mean), g.constant(Matrix::Zero(2, 2))};
  EXPECT_EQ(reparameterize(z, Matrix::Zero(2, 2)).value(), mean);
  EXPECT_EQ(reparameterize(z, std::nullopt).value(), mean);
  Matrix n(2, 2);
  n << 0.1, 0.2, -0.3, 0.4;
  EXPECT_TRUE(reparameterize(z, n).value().isApprox(mean + n, 1e-15));
  EXPECT_THROW(reparameterize(z, Matrix::Zero(3, 2)), ad::ShapeError);
}

TEST(Reparameterize, GradientWrtMeanIsIdentity) {
  Rng rng(1);
  Graph g;
  const Var mean = g.parameter(standard_normal(4, 3, rng));
  const Var log_var = g.parameter(standard_normal(4, 3, rng));
  g.backward(g.sum(reparameterize({mean, log_var}, standard_normal(4, 3, rng))));
  EXPECT_TRUE(g.grad(mean).isApprox(Matrix::Ones(4, 3), 0.0));
}

TEST(Reparameterize, EvaluationIsDeterministic) {
  Graph g;
  const GaussianLatent z{g.constant(Matrix::Ones(3, 2)), g.constant(Matrix::Ones(3, 2))};
  EXPECT_EQ(reparameterize(z, std::nullopt).value(), reparameterize(z, std::nullopt).value());
}

TEST(Kl, ClosedFormExamples) {
  Graph g;
  const auto kl = [&](double mu, double lv) {
    return kl_standard_normal({g.constant(mu), g.constant(lv)}).scalar();
  };
  EXPECT_EQ(kl(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(kl(1.0, 0.0), 0.5);
  const double expected = 0.5 * (4.0 - std::log(4.0) - 1.0);
  EXPECT_NEAR(kl(0.0, std::log(4.0)), expected, 1e-12);
  EXPECT_NEAR(expected, 0.8069, 1e-4);
}

TEST(Kl, BatchMeanOverRowsSumOverDims) {
  Graph g;
  Matrix mu(2, 2);
  mu << 1, 0, 0, 0;
  // Row 0 contributes 0.5, row 1 contributes 0.
  EXPECT_DOUBLE_EQ(kl_standard_normal({g.constant(mu), g.constant(Matrix::Zero(2, 2))}).scalar(), 0.25);
}

TEST(Kl, NonNegativeOnRandomInputs) {
  Rng rng(12);
  for (int k = 0; k < 200; ++k) {
    Graph g;
    const double v = kl_standard_normal({g.constant(standard_normal(5, 3, rng)),
                                         g.constant(2.0 * standard_normal(5, 3, rng))})
                         .scalar();
    EXPECT_GE(v, -1e-12);
    EXPECT_GT(v, 0.0);
  }
}

TEST(Kl, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  Graph g;
  const Var mean = g.parameter(standard_normal(6, 3, rng));
  const Var log_var = g.parameter(standard_normal(6, 3, rng));
  const Var kl = kl_standard_normal({mean, log_var});
  g.backward(kl);
  EXPECT_LT(rel_error(g.grad(mean), numeric_grad(g, mean, kl, 1e-5)), 1e-5);
  EXPECT_LT(rel_error(g.grad(log_var), numeric_grad(g, log_var, kl, 1e-5)), 1e-5);
}

TEST(Beta, FixedReturnsMu) {
  Rng rng(0);
  EXPECT_EQ(sample_beta(BetaSpec::fixed_at(8e-5), rng), 8e-5);
}

TEST(Beta, GaussianSampleMean) {
  Rng rng(2025);
  const BetaSpec spec = BetaSpec::normal(0.25, 0.01);
  double total = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) total += sample_beta(spec, rng);
  EXPECT_NEAR(total / n, 0.25, 0.001);
}

TEST(Beta, ClampedAtFloor) {
  Rng rng(4);
  const BetaSpec spec = BetaSpec::normal(0.0, 1.0, 0.0);
  for (int i = 0; i < 10000; ++i) EXPECT_GE(sample_beta(spec, rng), 0.0);
}

TEST(Beta, InvalidSpecsRejected) {
  EXPECT_THROW(BetaSpec::normal(-1.0, 0.1).validate(), std::invalid_argument);
  EXPECT_THROW((BetaSpec{BetaSpec::Kind::fixed, 1.0, 0.5, 0.0}.validate()), std::invalid_argument);
}
