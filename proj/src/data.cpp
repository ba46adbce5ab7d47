#include "infosep/data.hpp"

#include "infosep/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace infosep::data {

Vector Normalization::destandardize(const Vector& y_scaled) const {
  return (y_scaled.array() * y_std + y_mean).matrix();
}

Matrix Dataset::rows_of(const std::vector<Index>& idx) const {
  Matrix out(static_cast<Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = X.row(idx[i]);
  return out;
}

Vector Dataset::targets_of(const std::vector<Index>& idx) const {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = y(idx[i]);
  return out;
}

Vector Dataset::raw_targets_of(const std::vector<Index>& idx) const {
  Vector t = targets_of(idx);
  return norm ? norm->destandardize(t) : t;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticSpec::validate() const {
  if (n_samples < 2 || d_total < 1 || d_dominant < 1 || d_subtle < 1 || generator_hidden < 1) {
    throw DataError("SyntheticSpec: sizes must be positive (n_samples >= 2)");
  }
  if (!(generator_gain > 0.0)) throw DataError("SyntheticSpec: generator_gain must be positive");
  if (subtle_scale < 0.0 || target_noise < 0.0 || mixing_bias_std < 0.0) {
    throw DataError("SyntheticSpec: scales must be non-negative");
  }
}

namespace {

// Fixed random tanh network: in -> hidden (tanh) -> out. Weights and biases
// are U(-g/sqrt(fan_in), g/sqrt(fan_in)); g = 1 is the usual dense-layer default.
Matrix fan_in_uniform(Index fan_in, Index rows, Index cols, double gain, Rng& rng) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  return ((uniform01(rows, cols, rng).array() * 2.0 - 1.0) * bound).matrix();
}

struct TanhNet {
  Matrix w1;
  RowVector b1;
  Matrix w2;
  RowVector b2;

  TanhNet(Index in, Index hidden, Index out, double gain, Rng& rng)
      : w1(fan_in_uniform(in, in, hidden, gain, rng)),
        b1(fan_in_uniform(in, 1, hidden, gain, rng)),
        w2(fan_in_uniform(hidden, hidden, out, gain, rng)),
        b2(fan_in_uniform(hidden, 1, out, gain, rng)) {}

  Matrix operator()(const Matrix& x) const {
    Matrix h = (x * w1).rowwise() + b1;
    h = h.array().tanh().matrix();
    return (h * w2).rowwise() + b2;
  }
};

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed, SyntheticTruth* truth) {
  spec.validate();
  Rng net_rng = make_stream(seed, "generator_networks");
  const TanhNet encoder(spec.d_total, spec.generator_hidden, spec.d_dominant + spec.d_subtle,
                        spec.generator_gain, net_rng);
  const TanhNet f_dom(spec.d_dominant, spec.generator_hidden, 1, spec.generator_gain, net_rng);
  const TanhNet f_sub(spec.d_subtle, spec.generator_hidden, 1, spec.generator_gain, net_rng);

  Rng mix_rng = make_stream(seed, "mixing");
  const Matrix w_trans = standard_normal(spec.d_total, spec.d_total, mix_rng);
  const Matrix b_trans = standard_normal(1, spec.d_total, mix_rng) * spec.mixing_bias_std;

  Rng source_rng = make_stream(seed, "source");
  const Matrix s = standard_normal(spec.n_samples, spec.d_total, source_rng);
  Rng noise_rng = make_stream(seed, "target_noise");
  const Vector eps = standard_normal(spec.n_samples, 1, noise_rng).col(0);

  const Matrix z_base = encoder(s);
  const Matrix z_dom = z_base.leftCols(spec.d_dominant);
  const Matrix z_sub = z_base.middleCols(spec.d_dominant, spec.d_subtle);
  const Vector dom = f_dom(z_dom).col(0);
  const Vector sub = f_sub(z_sub).col(0);

  Dataset ds;
  ds.y = dom + spec.subtle_scale * sub + spec.target_noise * eps;
  // x = W s + b, one sample per row
  ds.X = (s * w_trans.transpose()).rowwise() + b_trans.row(0);
  for (Index j = 0; j < spec.d_total; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.target_name = "y";

  if (truth) {
    truth->source = s;
    truth->z_dominant = z_dom;
    truth->z_subtle = z_sub;
    truth->f_dom = dom;
    truth->f_sub = sub;
    truth->noise = eps;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == delimiter && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  for (auto& s : cells) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return cells;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

Dataset parse_csv(std::istream& in, const std::string& target_column, char delimiter,
                  const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source_name + ": empty file (header row required)");
  const std::vector<std::string> header = split_line(line, delimiter);
  const auto target_it =
      target_column.empty() ? header.end() - 1 : std::find(header.begin(), header.end(), target_column);
  if (target_it == header.end()) {
    throw DataError(source_name + ": target column '" + target_column + "' not found in header");
  }
  const std::size_t target = static_cast<std::size_t>(target_it - header.begin());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_line(line, delimiter);
    if (cells.size() != header.size()) {
      throw DataError(source_name + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw DataError(source_name + ": no data rows");

  std::vector<std::size_t> features;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != target && parse_number(rows.front()[c])) features.push_back(c);
  }

  Dataset ds;
  ds.target_name = header[target];
  for (std::size_t c : features) ds.feature_names.push_back(header[c]);
  ds.X.resize(static_cast<Index>(rows.size()), static_cast<Index>(features.size()));
  ds.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto cell = [&](std::size_t c) {
      const auto v = parse_number(rows[r][c]);
      if (!v) {
        throw DataError(source_name + ":" + std::to_string(line_numbers[r]) + ": column '" + header[c] +
                        "' has non-numeric value '" + rows[r][c] + "'");
      }
      return *v;
    };
    ds.y(static_cast<Index>(r)) = cell(target);
    for (std::size_t k = 0; k < features.size(); ++k) {
      ds.X(static_cast<Index>(r), static_cast<Index>(k)) = cell(features[k]);
    }
  }
  return ds;
}

Dataset load_csv(const std::string& path, const std::string& target_column, char delimiter) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");
  return parse_csv(in, target_column, delimiter, path);
}

void write_csv(std::ostream& out, const Dataset& ds) {
  for (Index j = 0; j < ds.features(); ++j) {
    out << (j < static_cast<Index>(ds.feature_names.size()) ? ds.feature_names[static_cast<std::size_t>(j)]
                                                             : "x" + std::to_string(j))
        << ',';
  }
  out << ds.target_name << '\n';
  char buf[32];
  for (Index i = 0; i < ds.rows(); ++i) {
    for (Index j = 0; j < ds.features(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.X(i, j));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", ds.y(i));
    out << buf << '\n';
  }
}

// ---------------------------------------------------------------------------
// Split / normalize / metrics

Dataset split(Dataset ds, const SplitSpec& spec, std::uint64_t seed) {
  const Index n = ds.rows();
  Index n_train = 0;
  if (spec.mode == SplitSpec::Mode::ratio) {
    if (!(spec.ratio > 0.0 && spec.ratio < 1.0)) throw DataError("split: ratio must lie in (0, 1)");
    n_train = static_cast<Index>(std::llround(spec.ratio * static_cast<double>(n)));
  } else {
    n_train = spec.count;
  }
  if (n_train < 1 || n_train >= n) {
    throw DataError("split: cannot draw " + std::to_string(n_train) + " training rows from " +
                    std::to_string(n) + " (at least one test row required)");
  }
  if (spec.valid_fraction < 0.0 || spec.valid_fraction >= 1.0) {
    throw DataError("split: valid_fraction must lie in [0, 1)");
  }
  const Index n_valid = static_cast<Index>(std::llround(spec.valid_fraction * static_cast<double>(n_train)));
  if (n_train - n_valid < 1) throw DataError("split: validation carve leaves no training rows");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto at = [&](Index k) { return order.begin() + k; };
  ds.valid.assign(at(0), at(n_valid));
  ds.train.assign(at(n_valid), at(n_train));
  ds.test.assign(at(n_train), order.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.valid.begin(), ds.valid.end());
  std::sort(ds.test.begin(), ds.test.end());
  return ds;
}

Dataset normalize(Dataset ds) {
  if (ds.train.empty()) throw DataError("normalize: no training split assigned");
  if (ds.norm) throw DataError("normalize: dataset is already normalized");
  const Matrix xt = ds.rows_of(ds.train);
  const Vector yt = ds.targets_of(ds.train);
  const double n = static_cast<double>(xt.rows());

  Normalization norm;
  norm.x_mean = xt.colwise().mean();
  const Matrix centered = xt.rowwise() - norm.x_mean;
  norm.x_std = (centered.array().square().colwise().sum() / n).sqrt().max(kStdFloor).matrix();
  norm.y_mean = yt.mean();
  norm.y_std = std::max(kStdFloor, std::sqrt((yt.array() - norm.y_mean).square().sum() / n));

  ds.X = ((ds.X.rowwise() - norm.x_mean).array().rowwise() / norm.x_std.array()).matrix();
  ds.y = ((ds.y.array() - norm.y_mean) / norm.y_std).matrix();
  ds.norm = std::move(norm);
  return ds;
}

double r_squared(const Vector& predictions, const Vector& targets) {
  if (predictions.size() != targets.size()) {
    throw DataError("r_squared: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(targets.size()) + " targets");
  }
  if (targets.size() < 2) throw DataError("r_squared: need at least two targets");
  const double mean = targets.mean();
  const double ss_tot = (targets.array() - mean).square().sum();
  if (ss_tot == 0.0) throw DataError("r_squared: targets have zero variance");
  const double ss_res = (targets - predictions).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

}  // namespace infosep::data
