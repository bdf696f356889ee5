#pragma once

// Supervised training over classified interaction logs.
//
// Every interaction becomes a positive example labeled with its three
// feedback flags; each positive also draws `neg_ratio` uniformly sampled
// never-interacted items as all-zero-label negatives. The joint objective is
// the lambda-weighted sum of per-task binary cross-entropies, averaged over
// the batch. Optimizers are plain SGD and Adam with bias correction.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "feedrank/checkpoint.hpp"
#include "feedrank/config.hpp"
#include "feedrank/errors.hpp"
#include "feedrank/feedback.hpp"
#include "feedrank/model.hpp"
#include "feedrank/rng.hpp"
#include "feedrank/tensor.hpp"

namespace feedrank {

struct TrainingExample {
  std::int64_t user = 0;
  std::int64_t target_item = 0;
  std::int64_t platform = 0;
  std::int64_t timestamp = 0;
  std::vector<HistoryItem> history;       // most recent last, already truncated
  std::array<double, 3> labels{0, 0, 0};  // evv, fvv, gvv
  bool sampled_negative = false;
};

struct ExampleSet {
  std::vector<TrainingExample> examples;
  std::int64_t users_without_negatives = 0;  // users whose negative pool was empty
};

// Builds examples from every interaction with timestamp in [t_lo, t_hi).
// Histories contain all of the user's interactions strictly before the
// target, truncated to the most recent `max_history`.
inline ExampleSet build_examples(const Dataset& ds, std::int64_t t_lo, std::int64_t t_hi,
                                 std::size_t max_history, std::int64_t neg_ratio,
                                 std::uint64_t seed) {
  if (neg_ratio < 0) throw usage_error("build_examples: neg_ratio must be >= 0");
  ExampleSet out;
  Rng rng(mix_seed(seed, 0x6578616dULL));
  for (const auto& [user, recs] : ds.user_records) {
    std::unordered_set<std::int64_t> seen;
    seen.reserve(recs.size() * 2);
    for (const auto& r : recs) seen.insert(r.item_id);
    const bool pool_empty = static_cast<std::int64_t>(seen.size()) >= ds.num_items;
    if (pool_empty && neg_ratio > 0) ++out.users_without_negatives;

    std::vector<HistoryItem> history;
    history.reserve(recs.size());
    for (const auto& r : recs) {
      const FeedbackFlags flags = classify_feedback(r, ds.stats.for_item(r.item_id));
      if (r.timestamp_ms >= t_lo && r.timestamp_ms < t_hi) {
        TrainingExample ex;
        ex.user = user;
        ex.target_item = r.item_id;
        ex.platform = r.platform_id;
        ex.timestamp = r.timestamp_ms;
        const std::size_t keep = std::min(history.size(), max_history);
        ex.history.assign(history.end() - keep, history.end());
        ex.labels = {flags.evv ? 1.0 : 0.0, flags.fvv ? 1.0 : 0.0, flags.gvv ? 1.0 : 0.0};
        out.examples.push_back(ex);
        if (!pool_empty) {
          for (std::int64_t k = 0; k < neg_ratio; ++k) {
            std::int64_t cand;
            do {
              cand = static_cast<std::int64_t>(
                  uniform_below(rng, static_cast<std::uint64_t>(ds.num_items)));
            } while (seen.count(cand) > 0);
            TrainingExample neg = ex;
            neg.target_item = cand;
            neg.labels = {0.0, 0.0, 0.0};
            neg.sampled_negative = true;
            out.examples.push_back(std::move(neg));
          }
        }
      }
      history.push_back(HistoryItem{r.item_id, flags});
    }
  }
  return out;
}

// Largest timestamp at the given time quantile (nearest-rank over all
// records); used as the inclusive upper bound of the training window.
inline std::int64_t split_timestamp(const Dataset& ds, double frac) {
  if (!(frac > 0.0 && frac <= 1.0)) throw usage_error("split_timestamp: frac out of (0, 1]");
  if (frac == 1.0) return std::numeric_limits<std::int64_t>::max();
  std::vector<double> ts;
  ts.reserve(ds.record_count);
  for (const auto& [u, recs] : ds.user_records)
    for (const auto& r : recs) ts.push_back(static_cast<double>(r.timestamp_ms));
  if (ts.empty()) throw data_error("split_timestamp: empty dataset");
  std::sort(ts.begin(), ts.end());
  return static_cast<std::int64_t>(nearest_rank_percentile(ts, frac));
}

// ---- losses --------------------------------------------------------------

// Binary cross-entropy on a 1x1 probability; prediction is clamped away from
// {0, 1} so the loss is finite for any model output, with gradient zeroed
// only in the clamped region.
inline Tensor task_loss(Tape& tape, const Tensor& y, double label) {
  if (label != 0.0 && label != 1.0)
    throw usage_error("task_loss: label must be 0 or 1, got " + std::to_string(label));
  constexpr double kFloor = 1e-12;
  Tensor yc = tape.clamp(y, kFloor, 1.0 - kFloor);
  if (label == 1.0) return tape.scale(tape.log(yc), -1.0);
  return tape.scale(tape.log(tape.sub(Tensor::scalar(1.0), yc)), -1.0);
}

// lambda-weighted sum of the K task losses for one example.
inline Tensor joint_loss(Tape& tape, const TaskPredictions& pred,
                         const std::array<double, 3>& labels,
                         const std::array<double, 3>& lambda) {
  Tensor total;
  for (std::size_t k = 0; k < kNumTasks; ++k) {
    Tensor term = tape.scale(task_loss(tape, pred.y[k], labels[k]), lambda[k]);
    total = total.defined() ? tape.add(total, term) : term;
  }
  return total;
}

// ---- optimizers ------------------------------------------------------------

inline void sgd_step(const ParamList& params, double lr) {
  for (const auto& [name, t] : params) {
    Tensor p = t;
    const auto& g = p.grad();
    auto& v = p.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

struct AdamState {
  std::vector<std::vector<double>> m, v;  // one slot per registry entry
  std::int64_t step = 0;

  static AdamState init(const ParamList& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& [name, t] : params) {
      s.m.emplace_back(t.size(), 0.0);
      s.v.emplace_back(t.size(), 0.0);
    }
    return s;
  }
};

inline void adam_step(const ParamList& params, AdamState& state, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  if (state.m.size() != params.size())
    throw usage_error("adam_step: state does not match parameter registry");
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    const auto& g = p.grad();
    auto& val = p.values();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ---- training loop ---------------------------------------------------------

// Runs one batch: zeroes gradients, averages the joint loss over the batch,
// backpropagates, and leaves gradients in the parameters for the optimizer.
// Returns the batch mean loss. Throws numeric_error naming the offending
// example if any per-example loss is non-finite.
inline double train_batch(Model& model, std::span<const TrainingExample> batch,
                          const std::array<double, 3>& lambda) {
  if (batch.empty()) throw usage_error("train_batch: empty batch");
  model.zero_grads();
  Tape tape;
  Tensor sum;
  for (const auto& ex : batch) {
    TaskPredictions pred =
        model.forward(tape, ex.history, ContextIds{ex.user, ex.target_item, ex.platform});
    Tensor loss = joint_loss(tape, pred, ex.labels, lambda);
    if (!std::isfinite(loss.item()))
      throw numeric_error("train_batch: non-finite loss at example (user " +
                          std::to_string(ex.user) + ", item " + std::to_string(ex.target_item) +
                          ", t " + std::to_string(ex.timestamp) + ")");
    sum = sum.defined() ? tape.add(sum, loss) : loss;
  }
  Tensor mean = tape.scale(sum, 1.0 / static_cast<double>(batch.size()));
  tape.backward(mean);
  return mean.item();
}

struct EpochMetrics {
  std::int64_t epoch = 0;
  double mean_loss = 0.0;
  std::int64_t examples = 0;
  std::int64_t duration_ms = 0;
};

struct TrainOutput {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> metrics;
  std::int64_t example_count = 0;
  std::int64_t users_without_negatives = 0;
  std::int64_t t_split = 0;
};

inline constexpr std::string_view kOptStatePrefix = "opt.";

// Assembles a checkpoint: resolved config text + hash, every model parameter,
// optimizer state under "opt.", and the training RNG state.
inline Checkpoint make_checkpoint(const Model& model, const Config& config,
                                  const AdamState* adam, const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.config_text = config.canonical_text();
  ckpt.config_hash = fnv1a64(ckpt.config_text);
  for (const auto& [name, t] : model.named_params())
    ckpt.tensors.emplace_back(name, Tensor::from_data(t.rows(), t.cols(), t.values()));
  if (adam) {
    const auto& params = model.named_params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      ckpt.tensors.emplace_back("opt.m." + params[i].first,
                                Tensor::from_data(1, adam->m[i].size(), adam->m[i]));
      ckpt.tensors.emplace_back("opt.v." + params[i].first,
                                Tensor::from_data(1, adam->v[i].size(), adam->v[i]));
    }
    ckpt.tensors.emplace_back("opt.step",
                              Tensor::scalar(static_cast<double>(adam->step)));
  }
  ckpt.rng_state = rng_state;
  return ckpt;
}

// Copies parameter tensors from a checkpoint into a freshly built model.
// Every model parameter must be present with a matching shape, and the
// checkpoint may not carry unknown non-optimizer tensors.
inline void load_model_state(const Checkpoint& ckpt, Model& model) {
  std::unordered_set<std::string> expected;
  for (const auto& [name, t] : model.named_params()) expected.insert(name);
  for (const auto& [name, src] : ckpt.tensors) {
    if (name.rfind(kOptStatePrefix, 0) == 0) continue;
    if (!expected.count(name))
      throw data_error("checkpoint: unexpected tensor '" + name + "'");
  }
  for (const auto& [name, dst] : model.named_params()) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw data_error("checkpoint: missing tensor '" + name + "'");
    if (!(src->shape() == dst.shape()))
      throw data_error("checkpoint: tensor '" + name + "' has shape " + src->shape().str() +
                       ", model expects " + dst.shape().str());
    Tensor d = dst;
    d.values() = src->values();
  }
}

// Restores Adam state saved by make_checkpoint. All-or-nothing: a checkpoint
// with no "opt." tensors yields a fresh state, a partial set is an error.
inline AdamState load_adam_state(const Checkpoint& ckpt, const ParamList& params) {
  AdamState state = AdamState::init(params);
  std::size_t found = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* m = ckpt.find("opt.m." + params[i].first);
    const Tensor* v = ckpt.find("opt.v." + params[i].first);
    if (!m != !v)
      throw data_error("checkpoint: optimizer state for '" + params[i].first + "' is partial");
    if (!m) continue;
    if (m->size() != state.m[i].size() || v->size() != state.v[i].size())
      throw data_error("checkpoint: optimizer state size mismatch for '" + params[i].first + "'");
    state.m[i] = m->values();
    state.v[i] = v->values();
    ++found;
  }
  if (found == 0) return state;
  if (found != params.size())
    throw data_error("checkpoint: optimizer state covers only " + std::to_string(found) + " of " +
                     std::to_string(params.size()) + " parameters");
  const Tensor* step = ckpt.find("opt.step");
  if (!step) throw data_error("checkpoint: optimizer state missing step counter");
  state.step = static_cast<std::int64_t>(step->item());
  return state;
}

// Full training run over a dataset. The model is updated in place; the
// returned checkpoint snapshots parameters, optimizer state, config, and the
// post-training RNG state.
inline TrainOutput train_model(Model& model, const Dataset& ds, const Config& config) {
  const TrainSettings ts = config.train();
  const ModelSettings ms = config.model();

  TrainOutput out;
  out.t_split = split_timestamp(ds, ts.split_frac);
  const std::int64_t t_hi = out.t_split == std::numeric_limits<std::int64_t>::max()
                                ? out.t_split
                                : out.t_split + 1;  // training window is inclusive of the split
  ExampleSet es = build_examples(ds, std::numeric_limits<std::int64_t>::min(), t_hi,
                                 static_cast<std::size_t>(ms.seq_len), ts.neg_ratio, ts.seed);
  if (es.examples.empty()) throw data_error("train: no training examples before the time split");
  out.example_count = static_cast<std::int64_t>(es.examples.size());
  out.users_without_negatives = es.users_without_negatives;

  AdamState adam = AdamState::init(model.named_params());
  Rng rng(mix_seed(ts.seed, 0x74726169ULL));
  std::vector<std::size_t> order(es.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t bs = static_cast<std::size_t>(ts.batch_size);
  std::vector<TrainingExample> batch;
  batch.reserve(bs);
  for (std::int64_t epoch = 0; epoch < ts.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    std::int64_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      batch.clear();
      for (std::size_t i = 0; i < n; ++i) batch.push_back(es.examples[order[start + i]]);
      const double loss = train_batch(model, batch, ts.lambda);
      if (ts.optimizer == "adam")
        adam_step(model.named_params(), adam, ts.lr);
      else
        sgd_step(model.named_params(), ts.lr);
      loss_sum += loss * static_cast<double>(n);
      seen += static_cast<std::int64_t>(n);
    }
    const auto t1 = std::chrono::steady_clock::now();
    EpochMetrics em;
    em.epoch = epoch;
    em.mean_loss = loss_sum / static_cast<double>(seen);
    em.examples = seen;
    em.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    out.metrics.push_back(em);
  }

  Config resolved = config;
  resolved.set_cardinality(model.cardinality().users, model.cardinality().items,
                           model.cardinality().platforms);
  out.checkpoint = make_checkpoint(model, resolved,
                                   ts.optimizer == "adam" ? &adam : nullptr,
                                   serialize_rng(rng));
  return out;
}

// Rebuilds a model from a checkpoint's embedded config (the checkpoint is
// authoritative for architecture and cardinalities).
inline Model model_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.config_hash != fnv1a64(ckpt.config_text))
    throw data_error("checkpoint: config text does not match its recorded hash");
  Config cfg = Config::defaults();
  cfg.merge(Config::parse(ckpt.config_text, "<checkpoint>"));
  const CardinalitySettings card = cfg.cardinality();
  if (card.users < 1 || card.items < 1 || card.platforms < 1)
    throw data_error("checkpoint: missing cardinalities in embedded config");
  Model model(cfg.model(), ModelCardinality{card.users, card.items, card.platforms},
              cfg.train().seed);
  load_model_state(ckpt, model);
  return model;
}

}  // namespace feedrank
