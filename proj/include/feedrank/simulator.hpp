#pragma once

// Synthetic interaction world, offline evaluation, and an A/B harness.
//
// The world draws user and item latents (items clustered by the same
// category id the model's feature side derives), gives every item a
// log-normal duration, and turns affinity into watch time through a
// logistic curve:
//
//   logit = scale * ((u + drift) . v_i) / sqrt(z) + bias + mood
//           + platform_term + noise * eps
//   watch_ms = duration_i * sigmoid(logit)
//
// Drift (a per-session latent offset) and mood (a per-session scalar) are
// what make recent in-session feedback informative beyond the user id: a
// ranker that reads the history's feedback channels can react to a bad
// session, a user-id-only ranker cannot.
//
// The A/B harness serves sessions in chunks — rank a fresh candidate pool,
// expose the top few, observe watches, re-rank with the updated history —
// and aggregates engagement metrics, windowed diversity entropy, and a
// per-user skip-rate quartile breakdown.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "feedrank/config.hpp"
#include "feedrank/errors.hpp"
#include "feedrank/feedback.hpp"
#include "feedrank/model.hpp"
#include "feedrank/rng.hpp"
#include "feedrank/serving.hpp"
#include "feedrank/training.hpp"

namespace feedrank {

inline constexpr std::int64_t kMinDurationMs = 4000;
inline constexpr std::int64_t kMaxDurationMs = 120000;
inline constexpr std::int64_t kBaseTimestampMs = 1600000000000;
inline constexpr std::int64_t kStepGapMs = 15000;

struct LatentWorld {
  WorldSettings cfg;
  std::int64_t categories = 1;                 // item clustering modulus
  std::vector<std::vector<double>> user_latent;
  std::vector<std::vector<double>> item_latent;
  std::vector<std::int64_t> item_duration_ms;
  std::vector<std::int64_t> preferred_platform;

  std::int64_t category_of(std::int64_t item) const { return item % categories; }
};

// All latent draws come from a single seeded stream in a fixed order, so a
// (seed, settings) pair pins the world exactly.
inline LatentWorld generate_world(const WorldSettings& cfg, std::int64_t categories) {
  if (categories < 1) throw usage_error("generate_world: categories must be positive");
  LatentWorld w;
  w.cfg = cfg;
  w.categories = categories;
  Rng rng(mix_seed(cfg.seed, 0x776f726cULL));
  const std::size_t z = static_cast<std::size_t>(cfg.latent_dim);

  std::vector<std::vector<double>> centroids(static_cast<std::size_t>(categories));
  for (auto& c : centroids) {
    c.resize(z);
    for (double& x : c) x = gaussian(rng);
  }
  w.user_latent.resize(static_cast<std::size_t>(cfg.users));
  for (auto& u : w.user_latent) {
    u.resize(z);
    for (double& x : u) x = gaussian(rng);
  }
  w.item_latent.resize(static_cast<std::size_t>(cfg.items));
  w.item_duration_ms.resize(static_cast<std::size_t>(cfg.items));
  const double log_median = std::log(cfg.median_duration_ms);
  for (std::size_t i = 0; i < w.item_latent.size(); ++i) {
    auto& v = w.item_latent[i];
    v.resize(z);
    const auto& c = centroids[static_cast<std::size_t>(
        w.category_of(static_cast<std::int64_t>(i)))];
    for (std::size_t k = 0; k < z; ++k) v[k] = c[k] + cfg.item_sigma * gaussian(rng);
    const double dur = std::exp(log_median + cfg.duration_sigma * gaussian(rng));
    w.item_duration_ms[i] = std::clamp(static_cast<std::int64_t>(dur), kMinDurationMs,
                                       kMaxDurationMs);
  }
  w.preferred_platform.resize(static_cast<std::size_t>(cfg.users));
  for (auto& p : w.preferred_platform)
    p = static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(cfg.platforms)));
  return w;
}

inline double base_affinity(const LatentWorld& w, std::int64_t user, std::int64_t item) {
  const auto& u = w.user_latent[static_cast<std::size_t>(user)];
  const auto& v = w.item_latent[static_cast<std::size_t>(item)];
  double dot = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * v[k];
  return dot / std::sqrt(static_cast<double>(u.size()));
}

// Per-session behavioral state: a latent preference offset plus a scalar
// mood shift, both resampled at session start.
struct SessionState {
  std::vector<double> drift;
  double mood = 0.0;
  std::int64_t platform = 0;
};

inline SessionState begin_session(const LatentWorld& w, std::int64_t user, Rng& rng) {
  SessionState s;
  s.drift.resize(static_cast<std::size_t>(w.cfg.latent_dim));
  for (double& d : s.drift) d = w.cfg.drift_scale * gaussian(rng);
  s.mood = w.cfg.mood_scale * gaussian(rng);
  // mostly the user's preferred surface, occasionally another one
  if (uniform01(rng) < 0.75)
    s.platform = w.preferred_platform[static_cast<std::size_t>(user)];
  else
    s.platform = static_cast<std::int64_t>(
        uniform_below(rng, static_cast<std::uint64_t>(w.cfg.platforms)));
  return s;
}

inline double session_logit(const LatentWorld& w, std::int64_t user, std::int64_t item,
                            const SessionState& s) {
  const auto& u = w.user_latent[static_cast<std::size_t>(user)];
  const auto& v = w.item_latent[static_cast<std::size_t>(item)];
  double dot = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) dot += (u[k] + s.drift[k]) * v[k];
  const double affinity = dot / std::sqrt(static_cast<double>(u.size()));
  const double platform_term =
      w.cfg.platform_effect *
      ((s.platform == w.preferred_platform[static_cast<std::size_t>(user)]) ? 0.5 : -0.5);
  return w.cfg.affinity_scale * affinity + w.cfg.affinity_bias + s.mood + platform_term;
}

// Simulated watch time for one exposure; always in [0, duration].
inline std::int64_t simulate_watch_ms(const LatentWorld& w, std::int64_t user, std::int64_t item,
                                      const SessionState& s, Rng& rng) {
  const double logit = session_logit(w, user, item, s) + w.cfg.noise * gaussian(rng);
  const double p = 1.0 / (1.0 + std::exp(-logit));
  const double dur = static_cast<double>(w.item_duration_ms[static_cast<std::size_t>(item)]);
  return static_cast<std::int64_t>(dur * p);
}

// Expected (noise-free, drift-free, neutral-mood) watch on the user's
// preferred platform; the yardstick offline evaluation uses for "would the
// user glance away".
inline std::int64_t expected_watch_ms(const LatentWorld& w, std::int64_t user, std::int64_t item) {
  const double logit = w.cfg.affinity_scale * base_affinity(w, user, item) +
                       w.cfg.affinity_bias + 0.5 * w.cfg.platform_effect;
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return static_cast<std::int64_t>(
      static_cast<double>(w.item_duration_ms[static_cast<std::size_t>(item)]) * p);
}

// ---- organic log generation ------------------------------------------------

// Uniform-exposure browsing log: every user watches `session_len` uniformly
// chosen items per session. This is the "organic" traffic a model trains on.
inline std::vector<InteractionRecord> generate_log(const LatentWorld& w,
                                                   std::int64_t sessions_per_user,
                                                   std::int64_t session_len,
                                                   std::uint64_t seed) {
  std::vector<InteractionRecord> records;
  records.reserve(static_cast<std::size_t>(w.cfg.users * sessions_per_user * session_len));
  for (std::int64_t user = 0; user < w.cfg.users; ++user) {
    for (std::int64_t si = 0; si < sessions_per_user; ++si) {
      Rng rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(user)),
                       0x73657373ULL + static_cast<std::uint64_t>(si)));
      const SessionState state = begin_session(w, user, rng);
      std::int64_t ts = kBaseTimestampMs + si * w.cfg.session_gap_ms;
      for (std::int64_t step = 0; step < session_len; ++step) {
        const std::int64_t item = static_cast<std::int64_t>(
            uniform_below(rng, static_cast<std::uint64_t>(w.cfg.items)));
        InteractionRecord r;
        r.user_id = user;
        r.item_id = item;
        r.timestamp_ms = ts;
        r.watch_time_ms = simulate_watch_ms(w, user, item, state, rng);
        r.platform_id = state.platform;
        records.push_back(r);
        ts += kStepGapMs;
      }
    }
  }
  return records;
}

// ---- ranking metrics ---------------------------------------------------------

// Rank-sum AUC with average ranks on score ties; exactly the probability a
// random positive outscores a random negative (ties count half). Undefined
// when either class is absent.
inline std::optional<double> auc_score(std::span<const double> scores,
                                       std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw usage_error("auc_score: size mismatch");
  const std::size_t n = scores.size();
  std::size_t npos = 0;
  for (std::uint8_t l : labels) npos += l ? 1 : 0;
  const std::size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) return std::nullopt;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

// ---- diversity ---------------------------------------------------------------

// Shannon entropy (nats) of the empirical id distribution in one window.
inline double entropy_nats(std::span<const std::int64_t> window) {
  if (window.empty()) throw usage_error("entropy_nats: empty window");
  std::map<std::int64_t, std::int64_t> counts;
  for (std::int64_t v : window) ++counts[v];
  const double n = static_cast<double>(window.size());
  double h = 0.0;
  for (const auto& [v, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

struct WindowedEntropy {
  double mean = 0.0;
  std::int64_t windows = 0;
};

// Mean entropy over consecutive full windows; a trailing short window is
// skipped, and an empty stream yields zero windows.
inline WindowedEntropy windowed_entropy(std::span<const std::int64_t> stream,
                                        std::size_t window = 100) {
  if (window == 0) throw usage_error("windowed_entropy: window must be positive");
  WindowedEntropy out;
  double sum = 0.0;
  for (std::size_t start = 0; start + window <= stream.size(); start += window) {
    sum += entropy_nats(stream.subspan(start, window));
    ++out.windows;
  }
  if (out.windows > 0) out.mean = sum / static_cast<double>(out.windows);
  return out;
}

// ---- offline evaluation -------------------------------------------------------

struct EvalReport {
  std::array<std::optional<double>, kNumTasks> auc;  // evv, fvv, gvv
  std::int64_t examples = 0;
  std::int64_t positives = 0;
  std::optional<double> skip_rate_at_k;   // simulated glance fraction in top-k
  std::int64_t skip_users = 0;
  std::optional<double> recall_at_k;      // finished-style views recovered in top-k
  std::int64_t recall_users = 0;
  std::int64_t topk = 0;
};

// Scores a model against the held-out tail of a log: per-task ranking AUC
// over positives plus sampled negatives, and (when a world is supplied)
// simulated top-k skip rate and finished-view recall per user.
inline EvalReport evaluate_model(const Model& model, const Dataset& ds, std::int64_t t_split,
                                 const EvalSettings& es, const FusionSettings& fusion,
                                 const LatentWorld* world) {
  EvalReport rep;
  rep.topk = es.topk;
  const std::int64_t t_lo = t_split == std::numeric_limits<std::int64_t>::max()
                                ? t_split
                                : t_split + 1;
  ExampleSet eval = build_examples(ds, t_lo, std::numeric_limits<std::int64_t>::max(),
                                   static_cast<std::size_t>(model.settings().seq_len),
                                   es.neg_ratio, es.seed);
  rep.examples = static_cast<std::int64_t>(eval.examples.size());

  std::array<std::vector<double>, kNumTasks> scores;
  std::array<std::vector<std::uint8_t>, kNumTasks> labels;
  for (const auto& ex : eval.examples) {
    Tape tape(Tape::Mode::no_grad);
    TaskPredictions pred =
        model.forward(tape, ex.history, ContextIds{ex.user, ex.target_item, ex.platform});
    const auto y = pred.probabilities();
    for (std::size_t k = 0; k < kNumTasks; ++k) {
      scores[k].push_back(y[k]);
      labels[k].push_back(ex.labels[k] > 0.5 ? 1 : 0);
    }
    if (!ex.sampled_negative) ++rep.positives;
  }
  for (std::size_t k = 0; k < kNumTasks; ++k) rep.auc[k] = auc_score(scores[k], labels[k]);

  if (world == nullptr) return rep;
  const LatentWorld& w = *world;

  // per-user ranked-list probes over the eval window
  double skip_sum = 0.0;
  std::int64_t skip_users = 0;
  double recall_sum = 0.0;
  std::int64_t recall_users = 0;
  std::int64_t probed = 0;
  FusionSettings topk_fusion = fusion;
  topk_fusion.topk = es.topk;
  for (const auto& [user, recs] : ds.user_records) {
    if (probed >= es.max_users) break;
    // history: everything in the training window; targets: the rest
    std::vector<InteractionRecord> past;
    std::vector<InteractionRecord> future;
    for (const auto& r : recs)
      (r.timestamp_ms <= t_split ? past : future).push_back(r);
    if (future.empty()) continue;
    ++probed;
    std::vector<HistoryItem> history = to_history(past, ds.stats);
    if (history.size() > static_cast<std::size_t>(model.settings().seq_len))
      history.erase(history.begin(),
                    history.end() - static_cast<std::ptrdiff_t>(model.settings().seq_len));
    const ContextIds who{user, 0,
                         w.preferred_platform[static_cast<std::size_t>(user)]};
    Rng rng(mix_seed(es.seed, 0x6576616cULL + static_cast<std::uint64_t>(user)));

    // skip rate: rank a fresh uniform pool, ask the world how the user
    // would have watched each of the top-k
    {
      std::vector<std::int64_t> pool;
      pool.reserve(static_cast<std::size_t>(es.pool));
      while (static_cast<std::int64_t>(pool.size()) < es.pool)
        pool.push_back(static_cast<std::int64_t>(
            uniform_below(rng, static_cast<std::uint64_t>(w.cfg.items))));
      RankedList ranked = rank_candidates(model, who, history, pool, topk_fusion);
      if (!ranked.items.empty()) {
        std::int64_t glances = 0;
        for (const auto& item : ranked.items)
          if (expected_watch_ms(w, user, item.item_id) < kGlanceThresholdMs) ++glances;
        skip_sum += static_cast<double>(glances) / static_cast<double>(ranked.items.size());
        ++skip_users;
      }
    }

    // recall: can the ranker pull the user's future finished-style views out
    // of a pool of distractors?
    {
      std::unordered_set<std::int64_t> seen;
      for (const auto& r : recs) seen.insert(r.item_id);
      std::vector<std::int64_t> targets;
      std::unordered_set<std::int64_t> target_set;
      for (const auto& r : future) {
        const FeedbackFlags f = classify_feedback(r, ds.stats.for_item(r.item_id));
        if (f.fvv && target_set.insert(r.item_id).second) targets.push_back(r.item_id);
      }
      if (!targets.empty()) {
        std::vector<std::int64_t> pool = targets;
        while (static_cast<std::int64_t>(pool.size()) < es.pool) {
          const std::int64_t cand = static_cast<std::int64_t>(
              uniform_below(rng, static_cast<std::uint64_t>(w.cfg.items)));
          if (seen.count(cand) == 0 && target_set.count(cand) == 0) pool.push_back(cand);
        }
        RankedList ranked = rank_candidates(model, who, history, pool, topk_fusion);
        std::int64_t hits = 0;
        for (const auto& item : ranked.items)
          if (target_set.count(item.item_id)) ++hits;
        recall_sum += static_cast<double>(hits) / static_cast<double>(targets.size());
        ++recall_users;
      }
    }
  }
  if (skip_users > 0) {
    rep.skip_rate_at_k = skip_sum / static_cast<double>(skip_users);
    rep.skip_users = skip_users;
  }
  if (recall_users > 0) {
    rep.recall_at_k = recall_sum / static_cast<double>(recall_users);
    rep.recall_users = recall_users;
  }
  return rep;
}

// ---- A/B harness ---------------------------------------------------------------

struct ArmStats {
  std::string name;
  std::int64_t users = 0;
  std::int64_t exposures = 0;
  std::int64_t play_ms = 0;
  std::int64_t non_glance_views = 0;  // watch >= glance threshold
  std::int64_t evv_views = 0;
  std::int64_t fvv_views = 0;
  std::int64_t gvv_views = 0;
  std::int64_t active_users = 0;
  std::int64_t like_users = 0;        // users with >= 1 fvv view
  std::int64_t reduction_sessions = 0;  // first 5 exposures all glances
  std::int64_t reduction_users = 0;
  std::vector<std::int64_t> item_stream;      // all exposures, user-major order
  std::vector<std::int64_t> category_stream;
  std::vector<std::pair<std::int64_t, double>> user_gvv_rate;  // (user, rate)
  // per-user category exposure streams, for quartile-stratified diversity
  std::vector<std::pair<std::int64_t, std::vector<std::int64_t>>> user_cat_streams;

  double gvv_rate() const {
    return exposures > 0 ? static_cast<double>(gvv_views) / static_cast<double>(exposures) : 0.0;
  }
};

struct MetricRow {
  std::string name;
  double a = 0.0;
  double b = 0.0;
  bool lower_better = false;
  std::optional<double> improvement_pct;  // (a - b) / b * 100, when b != 0
};

struct QuartileEntropy {
  std::int64_t quartile = 0;  // 1 = lowest personal skip rate
  double a_cat_entropy = 0.0;
  double b_cat_entropy = 0.0;
  std::int64_t a_windows = 0;
  std::int64_t b_windows = 0;
};

struct ABReport {
  ArmStats arm_a, arm_b;
  std::vector<MetricRow> rows;
  WindowedEntropy id_entropy_a, id_entropy_b;
  WindowedEntropy cat_entropy_a, cat_entropy_b;
  std::vector<QuartileEntropy> quartiles;
};

// Serves one session in ranked chunks, appending simulated records to the
// user's running log. In-chunk feedback lands in the history used by the
// next chunk, which is the loop that lets feedback-aware rankers adapt.
inline void serve_session(const LatentWorld& w, const Model& model,
                          const WatchStatsIndex& stats, std::int64_t user,
                          std::int64_t session_index, const AbtestSettings& ab,
                          const FusionSettings& fusion, std::uint64_t arm_seed,
                          std::vector<InteractionRecord>& user_log,
                          std::vector<InteractionRecord>& out_session) {
  Rng rng(mix_seed(mix_seed(arm_seed, static_cast<std::uint64_t>(user)),
                   0xab7e57ULL + static_cast<std::uint64_t>(session_index)));
  const SessionState state = begin_session(w, user, rng);
  std::int64_t ts = kBaseTimestampMs +
                    (w.cfg.sessions_per_user + session_index + 1) * w.cfg.session_gap_ms;
  std::unordered_set<std::int64_t> exposed;
  FusionSettings chunk_fusion = fusion;
  chunk_fusion.topk = ab.serve_chunk;
  const std::size_t L = static_cast<std::size_t>(model.settings().seq_len);

  std::int64_t served = 0;
  while (served < ab.session_len) {
    std::vector<std::int64_t> pool;
    pool.reserve(static_cast<std::size_t>(ab.candidate_pool));
    for (std::int64_t i = 0; i < ab.candidate_pool; ++i)
      pool.push_back(static_cast<std::int64_t>(
          uniform_below(rng, static_cast<std::uint64_t>(w.cfg.items))));

    std::vector<InteractionRecord> recent(user_log.end() -
                                              static_cast<std::ptrdiff_t>(
                                                  std::min(user_log.size(), L)),
                                          user_log.end());
    std::vector<HistoryItem> history = to_history(recent, stats);
    RankedList ranked = rank_candidates(model, ContextIds{user, 0, state.platform}, history,
                                        pool, chunk_fusion);
    std::int64_t taken = 0;
    for (const auto& item : ranked.items) {
      if (served >= ab.session_len || taken >= ab.serve_chunk) break;
      if (!exposed.insert(item.item_id).second) continue;  // no repeats in-session
      InteractionRecord r;
      r.user_id = user;
      r.item_id = item.item_id;
      r.timestamp_ms = ts;
      r.watch_time_ms = simulate_watch_ms(w, user, item.item_id, state, rng);
      r.platform_id = state.platform;
      user_log.push_back(r);
      out_session.push_back(r);
      ts += kStepGapMs;
      ++served;
      ++taken;
    }
    if (taken == 0) {
      // every ranked candidate was already shown: fall back to a fresh draw
      std::int64_t item;
      do {
        item = static_cast<std::int64_t>(
            uniform_below(rng, static_cast<std::uint64_t>(w.cfg.items)));
      } while (exposed.count(item) > 0 &&
               static_cast<std::int64_t>(exposed.size()) < w.cfg.items);
      exposed.insert(item);
      InteractionRecord r;
      r.user_id = user;
      r.item_id = item;
      r.timestamp_ms = ts;
      r.watch_time_ms = simulate_watch_ms(w, user, item, state, rng);
      r.platform_id = state.platform;
      user_log.push_back(r);
      out_session.push_back(r);
      ts += kStepGapMs;
      ++served;
    }
  }
}

namespace detail {

inline void run_arm(const LatentWorld& w, const Model& model, const WatchStatsIndex& stats,
                    const Dataset* warm_start, const AbtestSettings& ab,
                    const FusionSettings& fusion, std::uint64_t arm_seed, bool even_users,
                    bool all_users, ArmStats& arm) {
  for (std::int64_t user = 0; user < w.cfg.users; ++user) {
    if (!all_users && (user % 2 == 0) != even_users) continue;
    ++arm.users;
    std::vector<InteractionRecord> user_log;
    if (warm_start) {
      auto it = warm_start->user_records.find(user);
      if (it != warm_start->user_records.end()) user_log = it->second;
    }
    std::int64_t user_exposures = 0, user_gvv = 0, user_fvv = 0;
    bool any_reduction = false;
    std::vector<std::int64_t> user_cats;
    for (std::int64_t si = 0; si < ab.sessions_per_user; ++si) {
      std::vector<InteractionRecord> session;
      serve_session(w, model, stats, user, si, ab, fusion, arm_seed, user_log, session);
      std::int64_t head_glances = 0;
      const std::int64_t head = std::min<std::int64_t>(5, ab.session_len);
      for (std::size_t i = 0; i < session.size(); ++i) {
        const auto& r = session[i];
        const FeedbackFlags f = classify_feedback(r, stats.for_item(r.item_id));
        ++arm.exposures;
        ++user_exposures;
        arm.play_ms += r.watch_time_ms;
        if (!f.gvv) ++arm.non_glance_views;
        if (f.evv) ++arm.evv_views;
        if (f.fvv) {
          ++arm.fvv_views;
          ++user_fvv;
        }
        if (f.gvv) {
          ++user_gvv;
          ++arm.gvv_views;
        }
        if (static_cast<std::int64_t>(i) < head && f.gvv) ++head_glances;
        arm.item_stream.push_back(r.item_id);
        arm.category_stream.push_back(w.category_of(r.item_id));
        user_cats.push_back(w.category_of(r.item_id));
      }
      if (head_glances == head) {
        ++arm.reduction_sessions;
        any_reduction = true;
      }
    }
    if (user_exposures > 0) ++arm.active_users;
    if (user_fvv > 0) ++arm.like_users;
    if (any_reduction) ++arm.reduction_users;
    arm.user_gvv_rate.emplace_back(
        user, user_exposures > 0
                  ? static_cast<double>(user_gvv) / static_cast<double>(user_exposures)
                  : 0.0);
    arm.user_cat_streams.emplace_back(user, std::move(user_cats));
  }
}

inline MetricRow make_row(const std::string& name, double a, double b, bool lower_better) {
  MetricRow r;
  r.name = name;
  r.a = a;
  r.b = b;
  r.lower_better = lower_better;
  if (b != 0.0) r.improvement_pct = (a - b) / b * 100.0;
  return r;
}

}  // namespace detail

// Runs both arms over the same world. Arm A serves with `model_a`, arm B
// with `model_b`. In paired mode both arms serve every user with identical
// per-user seeds (identical models then produce bitwise-identical traffic);
// in split mode arm A takes even user ids and arm B odd ones.
inline ABReport run_abtest(const LatentWorld& w, const Model& model_a, const Model& model_b,
                           const Dataset* warm_start, const WatchStatsIndex& stats,
                           const AbtestSettings& ab, const FusionSettings& fusion) {
  ABReport rep;
  rep.arm_a.name = "A";
  rep.arm_b.name = "B";
  const std::uint64_t seed_a = ab.paired ? ab.seed : mix_seed(ab.seed, 0xA);
  const std::uint64_t seed_b = ab.paired ? ab.seed : mix_seed(ab.seed, 0xB);
  detail::run_arm(w, model_a, stats, warm_start, ab, fusion, seed_a, /*even=*/true,
                  /*all=*/ab.paired, rep.arm_a);
  detail::run_arm(w, model_b, stats, warm_start, ab, fusion, seed_b, /*even=*/false,
                  /*all=*/ab.paired, rep.arm_b);

  const auto& A = rep.arm_a;
  const auto& B = rep.arm_b;
  rep.rows.push_back(detail::make_row("Active Users", static_cast<double>(A.active_users),
                                      static_cast<double>(B.active_users), false));
  rep.rows.push_back(detail::make_row("Play Duration", static_cast<double>(A.play_ms),
                                      static_cast<double>(B.play_ms), false));
  rep.rows.push_back(detail::make_row("Players Number", static_cast<double>(A.non_glance_views),
                                      static_cast<double>(B.non_glance_views), false));
  rep.rows.push_back(detail::make_row("Like Users", static_cast<double>(A.like_users),
                                      static_cast<double>(B.like_users), false));
  rep.rows.push_back(detail::make_row("Like Times", static_cast<double>(A.fvv_views),
                                      static_cast<double>(B.fvv_views), false));
  rep.rows.push_back(detail::make_row("Comment Times", static_cast<double>(A.evv_views),
                                      static_cast<double>(B.evv_views), false));
  rep.rows.push_back(detail::make_row("Reduction Users", static_cast<double>(A.reduction_users),
                                      static_cast<double>(B.reduction_users), true));
  rep.rows.push_back(detail::make_row("Reduction Times",
                                      static_cast<double>(A.reduction_sessions),
                                      static_cast<double>(B.reduction_sessions), true));
  rep.rows.push_back(detail::make_row("Skip Rate", A.gvv_rate(), B.gvv_rate(), true));

  rep.id_entropy_a = windowed_entropy(rep.arm_a.item_stream);
  rep.id_entropy_b = windowed_entropy(rep.arm_b.item_stream);
  rep.cat_entropy_a = windowed_entropy(rep.arm_a.category_stream);
  rep.cat_entropy_b = windowed_entropy(rep.arm_b.category_stream);

  // personal skip-rate quartiles: users sorted by their own glance rate,
  // quartile streams pooled (users in rate order) and windowed
  auto quartile_entropy = [](const ArmStats& arm, int q) -> WindowedEntropy {
    std::vector<std::size_t> order(arm.user_gvv_rate.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (arm.user_gvv_rate[x].second != arm.user_gvv_rate[y].second)
        return arm.user_gvv_rate[x].second < arm.user_gvv_rate[y].second;
      return arm.user_gvv_rate[x].first < arm.user_gvv_rate[y].first;
    });
    const std::size_t n = order.size();
    const std::size_t lo = n * static_cast<std::size_t>(q - 1) / 4;
    const std::size_t hi = n * static_cast<std::size_t>(q) / 4;
    std::vector<std::int64_t> stream;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& cats = arm.user_cat_streams[order[i]].second;
      stream.insert(stream.end(), cats.begin(), cats.end());
    }
    return windowed_entropy(stream);
  };
  for (int q = 1; q <= 4; ++q) {
    QuartileEntropy row;
    row.quartile = q;
    const WindowedEntropy a = quartile_entropy(rep.arm_a, q);
    const WindowedEntropy b = quartile_entropy(rep.arm_b, q);
    row.a_cat_entropy = a.mean;
    row.a_windows = a.windows;
    row.b_cat_entropy = b.mean;
    row.b_windows = b.windows;
    rep.quartiles.push_back(row);
  }

  return rep;
}

}  // namespace feedrank
