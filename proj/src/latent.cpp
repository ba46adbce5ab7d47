#include "infosep/latent.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

namespace infosep::latent {

GaussianLatent gaussian_head(Var h, Index d) {
  if (d < 1 || h.cols() != 2 * d) {
    throw ad::ShapeError("gaussian_head: width " + std::to_string(h.cols()) +
                         " cannot hold a latent of dimension " + std::to_string(d));
  }
  ad::Graph& g = *h.graph;
  return {g.slice_cols(h, 0, d), g.slice_cols(h, d, d)};
}

Var reparameterize(const GaussianLatent& lat, const std::optional<Matrix>& noise) {
  if (!noise) return lat.mean;
  if (noise->rows() != lat.mean.rows() || noise->cols() != lat.mean.cols()) {
    throw ad::ShapeError("reparameterize: noise " + ad::shape_of(*noise).str() +
                         " does not match latent " + lat.mean.shape().str());
  }
  ad::Graph& g = *lat.mean.graph;
  const Var sigma = g.exp(g.scale(lat.log_var, 0.5));
  return g.add(lat.mean, g.mul(sigma, g.constant(*noise)));
}

Var kl_standard_normal(const GaussianLatent& lat) {
  ad::Graph& g = *lat.mean.graph;
  const Var terms = g.sub(g.add(g.square(lat.mean), g.exp(lat.log_var)), lat.log_var);
  const double rows = static_cast<double>(lat.mean.rows());
  // sum over dims and rows of (... - 1), halved and averaged over the batch
  return g.scale(g.sum(g.add_scalar(terms, -1.0)), 0.5 / rows);
}

void BetaSpec::validate() const {
  if (mu < 0.0 || sigma < 0.0 || floor < 0.0) {
    throw std::invalid_argument("BetaSpec: mu, sigma and floor must be non-negative");
  }
  if (kind == Kind::fixed && sigma != 0.0) {
    throw std::invalid_argument("BetaSpec: a fixed weight has sigma = 0");
  }
}

double sample_beta(const BetaSpec& spec, Rng& rng) {
  if (spec.kind == BetaSpec::Kind::fixed) return spec.mu;
  if (spec.sigma == 0.0) return std::max(spec.floor, spec.mu);
  std::normal_distribution<double> normal(spec.mu, spec.sigma);
  return std::max(spec.floor, normal(rng));
}

}  // namespace infosep::latent
