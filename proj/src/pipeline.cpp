#include "infosep/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace infosep::pipeline {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::A0: return "A0";
    case Variant::A1: return "A1";
    case Variant::A2: return "A2";
    case Variant::A3: return "A3";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  if (text == "A0") return Variant::A0;
  if (text == "A1") return Variant::A1;
  if (text == "A2") return Variant::A2;
  if (text == "A3") return Variant::A3;
  throw std::invalid_argument("unknown variant '" + text + "' (expected A0, A1, A2 or A3)");
}

std::string to_string(ScheduleSpec::Strategy s) {
  return s == ScheduleSpec::Strategy::joint ? "joint" : "two_stage";
}

// ---------------------------------------------------------------------------
// ModelSpec

std::size_t ModelSpec::active_depth() const { return variant == Variant::A1 ? 1 : layers.size(); }

FinalHead ModelSpec::effective_head() const {
  return variant == Variant::A1 ? FinalHead::first_task_predictor : head;
}

MlpSpec ModelSpec::final_predictor() const {
  Index in = 0;
  for (const auto& l : layers) in += l.d_task;
  return {in, final_hidden, 1, slope};
}

bool ModelSpec::uses_critic(std::size_t layer) const {
  return variant != Variant::A3 && layer < active_depth() && layers[layer].has_noise_branch();
}

void ModelSpec::validate() const {
  if (layers.empty()) throw std::invalid_argument("ModelSpec: at least one layer required");
  if (adv.size() != layers.size()) {
    throw std::invalid_argument("ModelSpec: " + std::to_string(adv.size()) + " adversarial specs for " +
                                std::to_string(layers.size()) + " layers");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& b = layers[l];
    b.validate();
    if (l + 1 < layers.size()) {
      if (!b.has_noise_branch()) {
        throw std::invalid_argument("ModelSpec: layer " + std::to_string(l + 1) +
                                    " feeds the next layer and needs d_noise >= 1");
      }
      if (layers[l + 1].input_dim != b.d_noise) {
        throw std::invalid_argument("ModelSpec: layer " + std::to_string(l + 2) + " input_dim " +
                                    std::to_string(layers[l + 1].input_dim) + " != d_noise " +
                                    std::to_string(b.d_noise) + " of layer " + std::to_string(l + 1));
      }
    }
    if (b.has_noise_branch()) adv[l].validate(b.d_task, b.d_noise);
  }
  if (!(noise_loss_weight >= 0.0)) throw std::invalid_argument("ModelSpec: noise_loss_weight must be >= 0");
  final_predictor().validate();
}

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  for (std::size_t l = 0; l < spec.depth(); ++l) {
    const std::string tag = std::to_string(l);
    p.blocks.push_back(separation::init_block(spec.layers[l], derive_seed(seed, "block" + tag)));
    p.critics.push_back(spec.layers[l].has_noise_branch()
                            ? nn::init_params(spec.adv[l].critic, derive_seed(seed, "critic" + tag))
                            : ParamStore{});
  }
  p.final_head = nn::init_params(spec.final_predictor(), derive_seed(seed, "final_head"));
  return p;
}

// ---------------------------------------------------------------------------
// Forward and loss

CascadeOutput forward_cascade(const BoundModel& model, const ModelSpec& spec, Var x, Mode mode, Rng& rng,
                              std::optional<std::size_t> depth) {
  const std::size_t n = depth.value_or(model.blocks.size());
  if (n == 0 || n > model.blocks.size() || n > spec.depth()) {
    throw std::invalid_argument("forward_cascade: depth " + std::to_string(n) + " with " +
                                std::to_string(model.blocks.size()) + " bound blocks");
  }
  Graph& g = *x.graph;
  CascadeOutput out;
  Var input = x;
  for (std::size_t l = 0; l < n; ++l) {
    out.layers.push_back(separation::block_forward(model.blocks[l], spec.layers[l], input, mode, rng));
    if (l + 1 < n) input = *out.layers.back().z_noise;
  }

  if (spec.effective_head() == FinalHead::first_task_predictor) {
    out.y_final = out.layers.front().y_task;
  } else if (n == spec.depth() && !model.final_head.empty()) {
    Var cat = out.layers.front().z_task;
    for (std::size_t l = 1; l < n; ++l) cat = g.concat(cat, out.layers[l].z_task);
    out.y_final = nn::mlp_forward(model.final_head, spec.final_predictor(), cat);
  }
  return out;
}

std::vector<LayerBetas> sample_betas(const ModelSpec& spec, Rng& rng) {
  std::vector<LayerBetas> betas;
  for (const auto& l : spec.layers) {
    LayerBetas b;
    b.task = latent::sample_beta(l.beta_task, rng);
    b.noise = latent::sample_beta(l.beta_noise, rng);
    betas.push_back(b);
  }
  return betas;
}

LossTerms total_loss(const ModelSpec& spec, const CascadeOutput& out, Var y, std::span<const LayerBetas> betas,
                     std::span<const std::optional<Var>> adv_terms, const std::vector<bool>& include_layer,
                     bool include_final) {
  Graph& g = *y.graph;
  if (betas.size() < out.layers.size()) throw std::invalid_argument("total_loss: missing betas");
  const bool with_kl = spec.variant != Variant::A2;

  LossTerms terms;
  std::optional<Var> acc;
  const auto add = [&](Var v) { acc = acc ? g.add(*acc, v) : v; };

  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    if (l >= include_layer.size() || !include_layer[l]) continue;
    const BlockOutput& o = out.layers[l];

    const separation::BranchLoss task = separation::task_loss(o, y, betas[l].task);
    const Var task_term = with_kl ? task.total : task.mse;
    add(task_term);
    terms.task += task_term.scalar();
    terms.kl += task.kl.scalar();

    if (o.y_joint) {
      const separation::BranchLoss noise = separation::noise_loss(o, y, betas[l].noise);
      const Var noise_term = with_kl ? noise.total : noise.mse;
      add(g.scale(noise_term, spec.noise_loss_weight));
      terms.noise += noise_term.scalar();
      terms.kl += noise.kl.scalar();
    }
    if (l < adv_terms.size() && adv_terms[l]) {
      add(g.scale(*adv_terms[l], spec.adv[l].lambda_adv));
      terms.adv += adv_terms[l]->scalar();
    }
  }

  if (out.y_final) {
    const Var final_mse = separation::mse(*out.y_final, y);
    terms.final_mse = final_mse.scalar();
    if (include_final && spec.effective_head() == FinalHead::aggregated) add(final_mse);
  }
  if (!acc) throw std::invalid_argument("total_loss: no layer or head included");
  terms.total = *acc;
  return terms;
}

// ---------------------------------------------------------------------------
// Schedules

int ScheduleSpec::total_epochs() const { return std::accumulate(epochs.begin(), epochs.end(), 0); }

void ScheduleSpec::validate(std::size_t phases) const {
  if (batch_size < 1) throw std::invalid_argument("ScheduleSpec: batch_size must be >= 1");
  if (epochs.size() != phases || lr.size() != phases) {
    throw std::invalid_argument("ScheduleSpec: " + to_string(strategy) + " needs " + std::to_string(phases) +
                                " epoch and lr entries, got " + std::to_string(epochs.size()) + " and " +
                                std::to_string(lr.size()));
  }
  for (int e : epochs) {
    if (e < 0) throw std::invalid_argument("ScheduleSpec: epochs must be >= 0");
  }
  for (double r : lr) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("ScheduleSpec: lr must be positive");
  }
  if (patience < 0) throw std::invalid_argument("ScheduleSpec: patience must be >= 0");
}

namespace {

using Clock = std::chrono::steady_clock;

// Running sums for one epoch; a field nobody reported averages to NaN.
struct EpochStats {
  struct Acc {
    double sum = 0.0;
    int n = 0;
    void add(double v) {
      sum += v;
      ++n;
    }
    double mean() const { return n ? sum / n : kNaN; }
  };
  Acc total, task, noise, adv, critic, kl, final_mse, independence;

  void push_to(EpochTrace& t) const {
    t.total.push_back(total.mean());
    t.task.push_back(task.mean());
    t.noise.push_back(noise.mean());
    t.adv.push_back(adv.mean());
    t.critic.push_back(critic.mean());
    t.kl.push_back(kl.mean());
    t.final_mse.push_back(final_mse.mean());
    t.independence.push_back(independence.mean());
  }
};

Matrix gather_rows(const Matrix& x, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

double finite_or_throw(double v, const std::string& what) {
  if (!std::isfinite(v)) throw nn::DivergenceError(what + " is not finite");
  return v;
}

// R^2 on the original target scale; NaN when the split is too small to score.
double split_r2(const Dataset& data, const std::vector<Index>& idx, const Vector& pred_scaled) {
  if (idx.size() < 2) return kNaN;
  const Vector pred = data.norm ? data.norm->destandardize(pred_scaled) : pred_scaled;
  try {
    return data::r_squared(pred, data.raw_targets_of(idx));
  } catch (const data::DataError&) {
    return kNaN;
  }
}

void check_dataset(const Dataset& data) {
  if (data.train.empty()) throw std::invalid_argument("training needs a non-empty train split");
  if (data.y.size() != data.X.rows()) throw std::invalid_argument("dataset X/y row mismatch");
}

// Mini-batch epochs over the train split with optional early stopping on
// validation R^2. The caller supplies the per-batch update and the snapshot
// hooks; returns the number of epochs run.
struct EpochLoop {
  const Dataset& data;
  Index batch_size;
  int patience;
  Rng& order_rng;
  std::function<void(const Matrix&, const Matrix&, EpochStats&, int epoch)> step;
  std::function<Vector(const Matrix&)> predict;
  std::function<void()> save_best;
  std::function<void()> restore_best;

  int run(int epochs, EpochTrace& trace) const {
    const Matrix x = data.rows_of(data.train);
    const Vector y = data.targets_of(data.train);
    const bool early = patience > 0;
    if (early && data.valid.size() < 2) {
      throw std::invalid_argument("early stopping needs at least two validation rows");
    }
    const Matrix x_valid = early ? data.rows_of(data.valid) : Matrix();
    const Vector y_valid = early ? data.targets_of(data.valid) : Vector();

    std::vector<Index> order(static_cast<std::size_t>(x.rows()));
    double best = -std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int ran = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::iota(order.begin(), order.end(), Index{0});
      std::shuffle(order.begin(), order.end(), order_rng);
      EpochStats stats;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - start);
        const std::span<const Index> rows(order.data() + start, len);
        Matrix yb(static_cast<Index>(len), 1);
        for (std::size_t i = 0; i < len; ++i) yb(static_cast<Index>(i), 0) = y(rows[i]);
        step(gather_rows(x, rows), yb, stats, epoch);
      }
      stats.push_to(trace);
      ++ran;

      if (early) {
        double r2 = kNaN;
        try {
          r2 = data::r_squared(predict(x_valid), y_valid);
        } catch (const data::DataError&) {
        }
        if (std::isfinite(r2) && r2 > best) {
          best = r2;
          best_epoch = epoch;
          save_best();
        } else if (best_epoch >= 0 && epoch - best_epoch >= patience) {
          break;
        }
      }
    }
    if (early && best_epoch >= 0) restore_best();
    return ran;
  }
};

struct Phase {
  std::size_t depth = 1;
  std::vector<bool> train;
  bool train_final = false;
  int epochs = 0;
  double lr = 3e-4;
  /// Layer whose task predictor is scored while the aggregated head is not yet trained.
  std::optional<std::size_t> monitor_layer;
};

Vector predict_impl(const ModelSpec& spec, const ModelParams& params, const Matrix& x,
                    std::optional<std::size_t> monitor_layer) {
  Graph g;
  BoundModel bound;
  const std::size_t depth = monitor_layer ? *monitor_layer + 1 : spec.active_depth();
  for (std::size_t l = 0; l < depth; ++l) bound.blocks.push_back(separation::bind_block(g, params.blocks[l], false));
  if (!monitor_layer && spec.effective_head() == FinalHead::aggregated) {
    bound.final_head = params.final_head.bind(g, false);
  }
  Rng unused(0);
  const CascadeOutput out = forward_cascade(bound, spec, g.constant(x), Mode::eval, unused, depth);
  const Var y = monitor_layer ? out.layers[*monitor_layer].y_task : *out.y_final;
  return y.value().col(0);
}

class Trainer {
 public:
  Trainer(const ModelSpec& spec, const Dataset& data, const ScheduleSpec& schedule, std::uint64_t seed)
      : spec_(spec),
        data_(data),
        schedule_(schedule),
        params_(init_model(spec, seed)),
        order_rng_(make_stream(seed, "batch_order")),
        reparam_rng_(make_stream(seed, "reparameterization")),
        perm_rng_(make_stream(seed, "permutation")),
        eps_rng_(make_stream(seed, "interpolation")),
        beta_rng_(make_stream(seed, "beta")) {
    for (const auto& b : params_.blocks) {
      block_adam_.push_back({nn::AdamState(b.feature_encoder), nn::AdamState(b.task_predictor),
                             nn::AdamState(b.noise_encoder), nn::AdamState(b.joint_predictor)});
    }
    for (const auto& c : params_.critics) critic_adam_.emplace_back(c);
    final_adam_ = nn::AdamState(params_.final_head);
    record_.seed = seed;
  }

  TrainResult run(const std::vector<Phase>& phases) {
    const auto t0 = Clock::now();
    for (std::size_t p = 0; p < phases.size(); ++p) {
      const Phase& phase = phases[p];
      hyper_.lr = phase.lr;
      phase_index_ = p;
      ModelParams best;
      const EpochLoop loop{
          data_,
          schedule_.batch_size,
          schedule_.patience,
          order_rng_,
          [&](const Matrix& xb, const Matrix& yb, EpochStats& stats, int epoch) {
            step(phase, xb, yb, stats, epoch);
          },
          [&](const Matrix& x) { return predict_impl(spec_, params_, x, phase.monitor_layer); },
          [&] { best = params_; },
          [&] { params_ = best; },
      };
      record_.epochs_run += loop.run(phase.epochs, record_.trace);
    }
    finish();
    record_.wall_clock_s = std::chrono::duration<double>(Clock::now() - t0).count();
    return {std::move(record_), std::move(params_)};
  }

 private:
  void step(const Phase& phase, const Matrix& xb, const Matrix& yb, EpochStats& stats, int epoch) {
    const std::string where =
        "phase " + std::to_string(phase_index_ + 1) + " epoch " + std::to_string(epoch + 1);
    const Index b = xb.rows();
    Graph g;
    BoundModel bound;
    for (std::size_t l = 0; l < phase.depth; ++l) {
      bound.blocks.push_back(separation::bind_block(g, params_.blocks[l], phase.train[l]));
    }
    if (phase.depth == spec_.depth() && spec_.effective_head() == FinalHead::aggregated) {
      bound.final_head = params_.final_head.bind(g, phase.train_final);
    }
    const std::vector<LayerBetas> betas = sample_betas(spec_, beta_rng_);
    const Mode mode = spec_.variant == Variant::A2 ? Mode::eval : Mode::train;
    const CascadeOutput out = forward_cascade(bound, spec_, g.constant(xb), mode, reparam_rng_, phase.depth);

    std::vector<std::optional<Var>> adv_terms(phase.depth);
    double critic_sum = 0.0;
    double independence_sum = 0.0;
    bool any_critic = false;
    for (std::size_t l = 0; l < phase.depth; ++l) {
      if (!phase.train[l] || !spec_.uses_critic(l)) continue;
      any_critic = true;
      const AdvSpec& adv = spec_.adv[l];
      const Matrix zt = out.layers[l].z_task.value();
      const Matrix zn = out.layers[l].z_noise->value();
      double last_loss = 0.0;
      double last_estimate = 0.0;
      adversarial::critic_schedule(
          adv.n_critic,
          [&](int) {
            Graph gc;
            const std::vector<Var> critic = params_.critics[l].bind(gc, true);
            ++record_.critic_graph_builds;
            const adversarial::PairBatch pair{gc.constant(zt), gc.constant(zn),
                                              adversarial::random_permutation(b, perm_rng_)};
            Var loss;
            if (adv.objective == adversarial::Objective::wasserstein_gp) {
              const auto cl = adversarial::critic_loss(critic, adv, pair, uniform01(b, 1, eps_rng_));
              loss = cl.loss;
              last_estimate = cl.estimate();
            } else {
              const auto jl = adversarial::jsd_losses(critic, adv, pair);
              loss = jl.critic_loss;
              last_estimate = jl.objective.scalar();
            }
            last_loss = finite_or_throw(loss.scalar(), "critic loss (" + where + ")");
            gc.backward(loss);
            nn::adam_step(params_.critics[l], nn::collect_grads(gc, critic), critic_adam_[l], hyper_);
            ++record_.critic_steps;
          },
          [&] {
            const std::vector<Var> critic = params_.critics[l].bind(g, false);
            const adversarial::PairBatch pair{out.layers[l].z_task, *out.layers[l].z_noise,
                                              adversarial::random_permutation(b, perm_rng_)};
            adv_terms[l] = adv.objective == adversarial::Objective::wasserstein_gp
                               ? adversarial::encoder_adv_loss(critic, adv.critic, pair)
                               : adversarial::jsd_losses(critic, adv, pair).encoder_loss;
          });
      critic_sum += last_loss;
      independence_sum += last_estimate;
    }

    const bool include_final = phase.train_final;
    const LossTerms terms = total_loss(spec_, out, g.constant(yb), betas, adv_terms, phase.train, include_final);
    if (!std::isfinite(terms.total.scalar())) {
      std::ostringstream msg;
      msg << "total loss (" << where << ") is not finite: task " << terms.task << ", kl " << terms.kl
          << ", noise " << terms.noise << ", adv " << terms.adv << ", final " << terms.final_mse;
      throw nn::DivergenceError(msg.str());
    }
    g.backward(terms.total);

    for (std::size_t l = 0; l < phase.depth; ++l) {
      if (!phase.train[l]) continue;
      update(params_.blocks[l].feature_encoder, bound.blocks[l].feature_encoder, block_adam_[l][0], g);
      update(params_.blocks[l].task_predictor, bound.blocks[l].task_predictor, block_adam_[l][1], g);
      update(params_.blocks[l].noise_encoder, bound.blocks[l].noise_encoder, block_adam_[l][2], g);
      update(params_.blocks[l].joint_predictor, bound.blocks[l].joint_predictor, block_adam_[l][3], g);
    }
    if (phase.train_final && !bound.final_head.empty()) {
      update(params_.final_head, bound.final_head, final_adam_, g);
    }
    ++record_.encoder_steps;

    stats.total.add(terms.total.scalar());
    stats.task.add(terms.task);
    stats.kl.add(terms.kl);
    if (out.y_final) stats.final_mse.add(terms.final_mse);
    if (std::any_of(out.layers.begin(), out.layers.end(), [](const BlockOutput& o) { return o.y_joint; })) {
      stats.noise.add(terms.noise);
    }
    // Without a trained critic the adversarial and critic losses are zero; the
    // independence estimate stays undefined.
    stats.adv.add(terms.adv);
    stats.critic.add(critic_sum);
    if (any_critic) stats.independence.add(independence_sum);
  }

  void update(ParamStore& store, const std::vector<Var>& bound, nn::AdamState& state, const Graph& g) {
    if (store.empty()) return;
    nn::adam_step(store, nn::collect_grads(g, bound), state, hyper_);
  }

  void finish() {
    const auto score = [&](const std::vector<Index>& idx) {
      if (idx.size() < 2) return kNaN;
      return split_r2(data_, idx, predict(spec_, params_, data_.rows_of(idx)));
    };
    record_.r2_train = score(data_.train);
    record_.r2_valid = score(data_.valid);
    record_.r2_test = score(data_.test);
    if (spec_.layers.front().has_noise_branch() && data_.test.size() >= 2) {
      record_.latent_abs_corr = latent_abs_correlation(spec_, params_, data_.rows_of(data_.test));
    }
  }

  const ModelSpec& spec_;
  const Dataset& data_;
  const ScheduleSpec& schedule_;
  ModelParams params_;
  std::vector<std::array<nn::AdamState, 4>> block_adam_;
  std::vector<nn::AdamState> critic_adam_;
  nn::AdamState final_adam_;
  nn::AdamHyper hyper_;
  Rng order_rng_;
  Rng reparam_rng_;
  Rng perm_rng_;
  Rng eps_rng_;
  Rng beta_rng_;
  std::size_t phase_index_ = 0;
  RunRecord record_;
};

void stamp(RunRecord& r, const ModelSpec& spec, const ScheduleSpec& schedule) {
  r.model = "adverisf";
  r.variant = to_string(spec.variant);
  r.strategy = to_string(schedule.strategy);
}

}  // namespace

TrainResult train_joint(const ModelSpec& spec, const Dataset& data, const ScheduleSpec& schedule,
                        std::uint64_t seed) {
  spec.validate();
  schedule.validate(1);
  check_dataset(data);
  Phase phase;
  phase.depth = spec.active_depth();
  phase.train.assign(phase.depth, true);
  phase.train_final = spec.effective_head() == FinalHead::aggregated;
  phase.epochs = schedule.epochs[0];
  phase.lr = schedule.lr[0];

  Trainer trainer(spec, data, schedule, seed);
  TrainResult result = trainer.run({phase});
  stamp(result.record, spec, schedule);
  return result;
}

TrainResult train_two_stage(const ModelSpec& spec, const Dataset& data, const ScheduleSpec& schedule,
                            std::uint64_t seed) {
  spec.validate();
  schedule.validate(spec.depth());
  check_dataset(data);
  std::vector<Phase> phases;
  for (std::size_t p = 0; p < spec.depth(); ++p) {
    Phase phase;
    phase.epochs = schedule.epochs[p];
    phase.lr = schedule.lr[p];
    if (spec.variant == Variant::A1) {
      // Only the first layer exists; it keeps training through every phase.
      phase.depth = 1;
      phase.train = {true};
    } else {
      phase.depth = p + 1;
      phase.train.assign(phase.depth, false);
      phase.train[p] = true;
      const bool last = p + 1 == spec.depth();
      phase.train_final = last && spec.effective_head() == FinalHead::aggregated;
      if (!last && spec.effective_head() == FinalHead::aggregated) phase.monitor_layer = p;
    }
    phases.push_back(std::move(phase));
  }

  Trainer trainer(spec, data, schedule, seed);
  TrainResult result = trainer.run(phases);
  stamp(result.record, spec, schedule);
  return result;
}

TrainResult train(const ModelSpec& spec, const Dataset& data, const ScheduleSpec& schedule, std::uint64_t seed) {
  return schedule.strategy == ScheduleSpec::Strategy::joint ? train_joint(spec, data, schedule, seed)
                                                            : train_two_stage(spec, data, schedule, seed);
}

Vector predict(const ModelSpec& spec, const ModelParams& params, const Matrix& x) {
  return predict_impl(spec, params, x, std::nullopt);
}

double latent_abs_correlation(const ModelSpec& spec, const ModelParams& params, const Matrix& x) {
  if (!spec.layers.front().has_noise_branch()) {
    throw std::invalid_argument("latent_abs_correlation: layer 1 has no noise branch");
  }
  Graph g;
  const auto bound = separation::bind_block(g, params.blocks.front(), false);
  Rng unused(0);
  const BlockOutput o = separation::block_forward(bound, spec.layers.front(), g.constant(x), Mode::eval, unused);
  const Matrix& zt = o.z_task.value();
  const Matrix& zn = o.z_noise->value();

  const auto centered = [](const Matrix& m, Index j) {
    const Vector c = m.col(j);
    return Vector(c.array() - c.mean());
  };
  double sum = 0.0;
  int count = 0;
  for (Index i = 0; i < zt.cols(); ++i) {
    const Vector a = centered(zt, i);
    for (Index j = 0; j < zn.cols(); ++j) {
      const Vector b = centered(zn, j);
      const double denom = a.norm() * b.norm();
      if (!(denom > 0.0)) continue;
      sum += std::abs(a.dot(b) / denom);
      ++count;
    }
  }
  return count ? sum / count : kNaN;
}

// ---------------------------------------------------------------------------
// Baselines

MlpBaselineResult train_baseline_mlp(const MlpSpec& spec, const Dataset& data, const ScheduleSpec& schedule,
                                     std::uint64_t seed) {
  spec.validate();
  schedule.validate(1);
  check_dataset(data);
  if (spec.in_dim != data.features() || spec.out_dim != 1) {
    throw std::invalid_argument("train_baseline_mlp: network must map " + std::to_string(data.features()) +
                                " features to 1 output");
  }
  const auto t0 = Clock::now();
  MlpBaselineResult result;
  result.record.model = "mlp";
  result.record.strategy = "joint";
  result.record.seed = seed;
  result.params = nn::init_params(spec, derive_seed(seed, "mlp"));
  nn::AdamState adam(result.params);
  const nn::AdamHyper hyper{schedule.lr[0]};
  Rng order_rng = make_stream(seed, "batch_order");

  const auto predict_mlp = [&](const Matrix& x) {
    Graph g;
    const auto p = result.params.bind(g, false);
    return Vector(nn::mlp_forward(p, spec, g.constant(x)).value().col(0));
  };
  ParamStore best;
  const EpochLoop loop{
      data,
      schedule.batch_size,
      schedule.patience,
      order_rng,
      [&](const Matrix& xb, const Matrix& yb, EpochStats& stats, int epoch) {
        Graph g;
        const auto p = result.params.bind(g, true);
        const Var loss = separation::mse(nn::mlp_forward(p, spec, g.constant(xb)), g.constant(yb));
        finite_or_throw(loss.scalar(), "mlp loss (epoch " + std::to_string(epoch + 1) + ")");
        g.backward(loss);
        nn::adam_step(result.params, nn::collect_grads(g, p), adam, hyper);
        ++result.record.encoder_steps;
        stats.total.add(loss.scalar());
        stats.task.add(loss.scalar());
      },
      predict_mlp,
      [&] { best = result.params; },
      [&] { result.params = best; },
  };
  result.record.epochs_run = loop.run(schedule.epochs[0], result.record.trace);

  const auto score = [&](const std::vector<Index>& idx) {
    return idx.size() < 2 ? kNaN : split_r2(data, idx, predict_mlp(data.rows_of(idx)));
  };
  result.record.r2_train = score(data.train);
  result.record.r2_valid = score(data.valid);
  result.record.r2_test = score(data.test);
  result.record.wall_clock_s = std::chrono::duration<double>(Clock::now() - t0).count();
  return result;
}

VibParams init_vib(const VibSpec& spec, std::uint64_t seed) {
  return {nn::init_params(spec.encoder(), derive_seed(seed, "vib_encoder")),
          nn::init_params(spec.predictor(), derive_seed(seed, "vib_predictor"))};
}

separation::BranchLoss vib_loss(std::span<const Var> encoder, std::span<const Var> predictor, const VibSpec& spec,
                                Var x, Var y, Mode mode, Rng& rng) {
  Graph& g = *x.graph;
  const latent::GaussianLatent dist = latent::gaussian_head(nn::mlp_forward(encoder, spec.encoder(), x), spec.d_z);
  std::optional<Matrix> noise;
  if (mode == Mode::train) noise = standard_normal(x.rows(), spec.d_z, rng);
  const Var z = latent::reparameterize(dist, noise);
  separation::BranchLoss loss;
  loss.mse = separation::mse(nn::mlp_forward(predictor, spec.predictor(), z), y);
  loss.kl = latent::kl_standard_normal(dist);
  loss.total = g.add(loss.mse, g.scale(loss.kl, spec.beta));
  return loss;
}

VibBaselineResult train_baseline_vib(const VibSpec& spec, const Dataset& data, const ScheduleSpec& schedule,
                                     std::uint64_t seed) {
  spec.encoder().validate();
  spec.predictor().validate();
  if (!(spec.beta >= 0.0)) throw std::invalid_argument("VibSpec: beta must be >= 0");
  schedule.validate(1);
  check_dataset(data);
  if (spec.input_dim != data.features()) {
    throw std::invalid_argument("train_baseline_vib: input_dim " + std::to_string(spec.input_dim) + " but data has " +
                                std::to_string(data.features()) + " features");
  }
  const auto t0 = Clock::now();
  VibBaselineResult result;
  result.record.model = "vib";
  result.record.strategy = "joint";
  result.record.seed = seed;
  result.params = init_vib(spec, seed);
  nn::AdamState enc_adam(result.params.encoder);
  nn::AdamState pred_adam(result.params.predictor);
  const nn::AdamHyper hyper{schedule.lr[0]};
  Rng order_rng = make_stream(seed, "batch_order");
  Rng reparam_rng = make_stream(seed, "reparameterization");

  const auto predict_vib = [&](const Matrix& x) {
    Graph g;
    const auto enc = result.params.encoder.bind(g, false);
    const auto pred = result.params.predictor.bind(g, false);
    const auto dist = latent::gaussian_head(nn::mlp_forward(enc, spec.encoder(), g.constant(x)), spec.d_z);
    return Vector(nn::mlp_forward(pred, spec.predictor(), dist.mean).value().col(0));
  };
  VibParams best;
  const EpochLoop loop{
      data,
      schedule.batch_size,
      schedule.patience,
      order_rng,
      [&](const Matrix& xb, const Matrix& yb, EpochStats& stats, int epoch) {
        Graph g;
        const auto enc = result.params.encoder.bind(g, true);
        const auto pred = result.params.predictor.bind(g, true);
        const auto loss = vib_loss(enc, pred, spec, g.constant(xb), g.constant(yb), Mode::train, reparam_rng);
        finite_or_throw(loss.total.scalar(), "vib loss (epoch " + std::to_string(epoch + 1) + ")");
        g.backward(loss.total);
        nn::adam_step(result.params.encoder, nn::collect_grads(g, enc), enc_adam, hyper);
        nn::adam_step(result.params.predictor, nn::collect_grads(g, pred), pred_adam, hyper);
        ++result.record.encoder_steps;
        stats.total.add(loss.total.scalar());
        stats.task.add(loss.mse.scalar());
        stats.kl.add(loss.kl.scalar());
      },
      predict_vib,
      [&] { best = result.params; },
      [&] { result.params = best; },
  };
  result.record.epochs_run = loop.run(schedule.epochs[0], result.record.trace);

  const auto score = [&](const std::vector<Index>& idx) {
    return idx.size() < 2 ? kNaN : split_r2(data, idx, predict_vib(data.rows_of(idx)));
  };
  result.record.r2_train = score(data.train);
  result.record.r2_valid = score(data.valid);
  result.record.r2_test = score(data.test);
  result.record.wall_clock_s = std::chrono::duration<double>(Clock::now() - t0).count();
  return result;
}

}  // namespace infosep::pipeline
