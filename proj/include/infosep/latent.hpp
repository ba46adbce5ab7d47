#pragma once

// Diagonal-Gaussian posteriors against a standard-normal prior.

#include "infosep/autodiff.hpp"
#include "infosep/rng.hpp"

#include <optional>

namespace infosep::latent {

using ad::Index;
using ad::Matrix;
using ad::Var;

struct GaussianLatent {
  Var mean;
  Var log_var;

  Index dim() const { return mean.cols(); }
};

/// Splits an encoder output of width 2d into (mean, log_var) = (first d, last d).
GaussianLatent gaussian_head(Var h, Index d);

/// mean + exp(0.5 log_var) * noise; the posterior mean when noise is absent.
Var reparameterize(const GaussianLatent& g, const std::optional<Matrix>& noise);

/// Batch mean of 0.5 * sum_d (mu^2 + sigma^2 - log sigma^2 - 1).
Var kl_standard_normal(const GaussianLatent& g);

/// Per-batch KL weight: fixed, or N(mu, sigma^2) clamped below at `floor`.
struct BetaSpec {
  enum class Kind { fixed, gaussian };

  Kind kind = Kind::fixed;
  double mu = 0.0;
  double sigma = 0.0;
  double floor = 0.0;

  static BetaSpec fixed_at(double value) { return {Kind::fixed, value, 0.0, 0.0}; }
  static BetaSpec normal(double mu, double sigma, double floor = 0.0) {
    return {Kind::gaussian, mu, sigma, floor};
  }
  void validate() const;
};

double sample_beta(const BetaSpec& spec, Rng& rng);

}  // namespace infosep::latent
