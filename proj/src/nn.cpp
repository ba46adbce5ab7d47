#include "infosep/nn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <utility>

namespace infosep::nn {

void MlpSpec::validate() const {
  if (in_dim < 1 || out_dim < 1) {
    throw std::invalid_argument("MlpSpec: in_dim and out_dim must be >= 1");
  }
  for (Index h : hidden) {
    if (h < 1) throw std::invalid_argument("MlpSpec: hidden widths must be >= 1");
  }
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t total = 0;
  Index fan_in = in_dim;
  for (Index h : hidden) {
    total += static_cast<std::size_t>((fan_in + 1) * h);
    fan_in = h;
  }
  return total + static_cast<std::size_t>((fan_in + 1) * out_dim);
}

void ParamStore::add(std::string name, Matrix value) {
  for (const auto& n : names_) {
    if (n == name) throw std::invalid_argument("ParamStore: duplicate tensor '" + name + "'");
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

const Matrix& ParamStore::at(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return values_[i];
  }
  throw std::out_of_range("ParamStore: no tensor named '" + name + "'");
}

Matrix& ParamStore::at(const std::string& name) {
  return const_cast<Matrix&>(std::as_const(*this).at(name));
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

std::vector<Var> ParamStore::bind(Graph& graph, bool trainable) const {
  std::vector<Var> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(trainable ? graph.parameter(v) : graph.constant(v));
  return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].rows() != other.values_[i].rows() || values_[i].cols() != other.values_[i].cols() ||
        values_[i] != other.values_[i]) {
      return false;
    }
  }
  return true;
}

ParamStore init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParamStore store;
  const double gain2 = 2.0 / (1.0 + spec.activation_slope * spec.activation_slope);
  Index fan_in = spec.in_dim;
  const auto layer = [&](std::size_t k, Index fan_out) {
    std::normal_distribution<double> normal(0.0, std::sqrt(gain2 / static_cast<double>(fan_in)));
    Matrix w(fan_in, fan_out);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
    store.add("W" + std::to_string(k), std::move(w));
    store.add("b" + std::to_string(k), Matrix::Zero(1, fan_out));
    fan_in = fan_out;
  };
  for (std::size_t k = 0; k < spec.hidden.size(); ++k) layer(k, spec.hidden[k]);
  layer(spec.hidden.size(), spec.out_dim);
  return store;
}

Var mlp_forward(std::span<const Var> params, const MlpSpec& spec, Var x) {
  if (params.size() != 2 * spec.layer_count()) {
    throw std::invalid_argument("mlp_forward: expected " + std::to_string(2 * spec.layer_count()) +
                                " bound tensors, got " + std::to_string(params.size()));
  }
  if (x.cols() != spec.in_dim) {
    throw ad::ShapeError("mlp_forward: input has " + std::to_string(x.cols()) +
                         " columns, network expects " + std::to_string(spec.in_dim));
  }
  Graph& g = *x.graph;
  Var h = x;
  for (std::size_t k = 0; k < spec.layer_count(); ++k) {
    h = g.add(g.matmul(h, params[2 * k]), params[2 * k + 1]);
    if (k + 1 < spec.layer_count()) h = g.leaky_relu(h, spec.activation_slope);
  }
  return h;
}

AdamState::AdamState(const ParamStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
    v_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
  }
}

void adam_step(ParamStore& params, std::span<const Matrix> grads, AdamState& state,
               const AdamHyper& hyper) {
  if (grads.size() != params.size() || state.m_.size() != params.size()) {
    throw std::invalid_argument("adam_step: gradient/state count does not match parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].rows() != params.value(i).rows() || grads[i].cols() != params.value(i).cols()) {
      throw ad::ShapeError("adam_step: gradient shape mismatch for '" + params.name(i) + "'");
    }
    if (!grads[i].allFinite()) {
      throw DivergenceError("adam_step: non-finite gradient for '" + params.name(i) + "' at step " +
                            std::to_string(state.step_ + 1));
    }
  }
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto m = state.m_[i].array();
    auto v = state.v_[i].array();
    const auto g = grads[i].array();
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.square();
    params.value(i).array() -= hyper.lr * (m / c1) / ((v / c2).sqrt() + hyper.eps);
  }
}

std::vector<Matrix> collect_grads(const Graph& graph, std::span<const Var> bound) {
  std::vector<Matrix> out;
  out.reserve(bound.size());
  for (Var v : bound) out.push_back(graph.grad(v));
  return out;
}

namespace {
constexpr const char* kMagic = "infosep-params";
constexpr int kFormatVersion = 1;
}  // namespace

void save_params(std::ostream& out, const ParamStore& params) {
  out << kMagic << ' ' << kFormatVersion << '\n' << params.size() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& m = params.value(i);
    out << params.name(i) << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        out << (c ? " " : "") << buf;
      }
      out << '\n';
    }
  }
}

ParamStore load_params(std::istream& in) {
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> magic >> version) || magic != kMagic) {
    throw std::runtime_error("load_params: not an infosep parameter file");
  }
  if (version != kFormatVersion) {
    throw std::runtime_error("load_params: unsupported format version " + std::to_string(version));
  }
  if (!(in >> count)) throw std::runtime_error("load_params: missing tensor count");
  ParamStore store;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw std::runtime_error("load_params: bad header for tensor " + std::to_string(i));
    }
    Matrix m(rows, cols);
    for (Index k = 0; k < m.size(); ++k) {
      std::string token;
      if (!(in >> token)) throw std::runtime_error("load_params: truncated tensor '" + name + "'");
      m.data()[k] = std::strtod(token.c_str(), nullptr);
    }
    store.add(std::move(name), std::move(m));
  }
  return store;
}

void save_params(const std::string& path, const ParamStore& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_params: cannot open " + path);
  save_params(out, params);
}

ParamStore load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_params: cannot open " + path);
  return load_params(in);
}

}  // namespace infosep::nn
