#pragma once

#include "infosep/autodiff.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace infosep::data {

using ad::Index;
using ad::Matrix;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Normalization {
  RowVector x_mean;
  RowVector x_std;
  double y_mean = 0.0;
  double y_std = 1.0;

  Vector destandardize(const Vector& y_scaled) const;
};

struct Dataset {
  Matrix X;
  Vector y;
  std::vector<std::string> feature_names;
  std::string target_name = "y";

  std::vector<Index> train;
  std::vector<Index> valid;
  std::vector<Index> test;

  /// Set by normalize(); X and y are then in standardized units.
  std::optional<Normalization> norm;

  Index rows() const { return X.rows(); }
  Index features() const { return X.cols(); }
  Matrix rows_of(const std::vector<Index>& idx) const;
  Vector targets_of(const std::vector<Index>& idx) const;
  /// Targets on the original scale.
  Vector raw_targets_of(const std::vector<Index>& idx) const;
};

// ---------------------------------------------------------------------------
// Synthetic hierarchical-factor data
//
//   s ~ N(0, I_total)
//   z_base = Encoder(s); z_dominant = z_base[0:d1], z_subtle = z_base[d1:d1+d2]
//   y = f_dom(z_dominant) + subtle_scale * f_sub(z_subtle) + target_noise * eps
//   x = W_trans s + b_trans

struct SyntheticSpec {
  Index n_samples = 300;
  Index d_total = 13;
  Index d_dominant = 3;
  Index d_subtle = 5;
  /// Width of the single tanh hidden layer in Encoder, f_dom and f_sub.
  Index generator_hidden = 16;
  /// Scale of the generator weights relative to U(+-1/sqrt(fan_in)).
  double generator_gain = 1.0;
  double subtle_scale = 0.2;
  double target_noise = 0.15;
  double mixing_bias_std = 0.1;

  void validate() const;
};

/// Latent ground truth behind a synthetic dataset, one row per sample.
struct SyntheticTruth {
  Matrix source;
  Matrix z_dominant;
  Matrix z_subtle;
  Vector f_dom;
  Vector f_sub;
  Vector noise;
};

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                           SyntheticTruth* truth = nullptr);

// ---------------------------------------------------------------------------
// CSV

/// Header row required. Columns whose first data cell is not numeric are
/// dropped; any later non-numeric cell in a kept column is an error naming the
/// row. The target column must be numeric; an empty name selects the last
/// column.
Dataset load_csv(const std::string& path, const std::string& target_column, char delimiter = ',');
Dataset parse_csv(std::istream& in, const std::string& target_column, char delimiter = ',',
                  const std::string& source_name = "<stream>");

/// Writes x0..x{d-1},y (or the dataset's own names) with a header row.
void write_csv(std::ostream& out, const Dataset& ds);

// ---------------------------------------------------------------------------
// Splits and normalization

struct SplitSpec {
  enum class Mode { ratio, count };

  Mode mode = Mode::ratio;
  double ratio = 0.7;
  Index count = 0;
  double valid_fraction = 0.0;

  static SplitSpec by_ratio(double r, double valid_fraction = 0.0) {
    return {Mode::ratio, r, 0, valid_fraction};
  }
  static SplitSpec by_count(Index n, double valid_fraction = 0.0) {
    return {Mode::count, 0.0, n, valid_fraction};
  }
};

/// Uniform random split without replacement; test = everything not in train.
/// Validation rows are carved out of the train draw. Index sets are sorted.
Dataset split(Dataset ds, const SplitSpec& spec, std::uint64_t seed);

/// Standardizes X (per column) and y with train-split statistics; std is
/// floored at 1e-8.
Dataset normalize(Dataset ds);

inline constexpr double kStdFloor = 1e-8;

/// 1 - SS_res / SS_tot with the mean of `targets`.
double r_squared(const Vector& predictions, const Vector& targets);

}  // namespace infosep::data
