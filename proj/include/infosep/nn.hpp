#pragma once

#include "infosep/autodiff.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace infosep::nn {

using ad::Graph;
using ad::Index;
using ad::Matrix;
using ad::Var;

inline constexpr double kDefaultSlope = 0.01;

/// Dense LeakyReLU network: in_dim -> hidden... -> out_dim, linear output layer.
struct MlpSpec {
  Index in_dim = 1;
  std::vector<Index> hidden;
  Index out_dim = 1;
  double activation_slope = kDefaultSlope;

  void validate() const;
  std::size_t parameter_count() const;
  std::size_t layer_count() const { return hidden.size() + 1; }
};

/// Ordered collection of named tensors. Order is the binding order.
class ParamStore {
 public:
  void add(std::string name, Matrix value);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);
  std::size_t scalar_count() const;
  bool all_finite() const;

  /// Attaches every tensor to `graph` as a leaf. Trainable leaves receive
  /// gradients; frozen ones are constants.
  std::vector<Var> bind(Graph& graph, bool trainable) const;

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

/// He-style normal init (variance 2 / ((1 + slope^2) fan_in)), zero biases.
/// Tensors are named W0, b0, W1, b1, ... with W_k of shape fan_in x fan_out.
ParamStore init_params(const MlpSpec& spec, std::uint64_t seed);

/// `params` must be the bound tensors of a store created for `spec`.
Var mlp_forward(std::span<const Var> params, const MlpSpec& spec, Var x);

/// Raised when an optimizer step would consume a non-finite gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const ParamStore& params);

  std::int64_t step() const { return step_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  friend void adam_step(ParamStore&, std::span<const Matrix>, AdamState&, const AdamHyper&);
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t step_ = 0;
};

/// One bias-corrected Adam update. Throws DivergenceError on a non-finite
/// gradient before touching any parameter.
void adam_step(ParamStore& params, std::span<const Matrix> grads, AdamState& state,
               const AdamHyper& hyper);

/// Gradients of the bound leaves after Graph::backward().
std::vector<Matrix> collect_grads(const Graph& graph, std::span<const Var> bound);

// Checkpoints: a text container of named arrays.
//
//   infosep-params 1
//   <tensor count>
//   <name> <rows> <cols>
//   <row-major values, one row per line, %.17g>
//   ...
//
// Values are printed with 17 significant digits so a save/load round trip is
// bit-exact.
void save_params(std::ostream& out, const ParamStore& params);
ParamStore load_params(std::istream& in);
void save_params(const std::string& path, const ParamStore& params);
ParamStore load_params(const std::string& path);

}  // namespace infosep::nn
