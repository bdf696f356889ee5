#pragma once

// Serving-side fusion and candidate ranking.
//
// Each candidate's K task probabilities collapse into one scalar,
// score = sum_k gamma_k y_k, with the glance-and-skip head weighted
// non-positively so predicted skips push an item down the list. Scaling
// every gamma by the same positive constant rescales all scores equally and
// leaves the ranking unchanged.

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "feedrank/config.hpp"
#include "feedrank/errors.hpp"
#include "feedrank/feedback.hpp"
#include "feedrank/model.hpp"
#include "feedrank/tensor.hpp"

namespace feedrank {

inline double fusion_score(const std::array<double, 3>& y, const std::array<double, 3>& gamma) {
  return gamma[0] * y[0] + gamma[1] * y[1] + gamma[2] * y[2];
}

struct RankedItem {
  std::int64_t item_id = 0;
  std::array<double, 3> y{0, 0, 0};  // evv, fvv, gvv probabilities
  double score = 0.0;
};

struct RankedList {
  std::vector<RankedItem> items;            // descending score, ties by ascending id
  std::int64_t skipped_unknown = 0;         // candidate ids outside the model's item table
  std::int64_t deduplicated = 0;            // repeated candidate ids dropped
};

// Scores candidates against one user's history and returns the top-k fused
// ranking. The history is encoded once and reused across candidates.
// Duplicate candidate ids are scored once; ids the model has never seen are
// skipped and counted rather than failing the whole request.
inline RankedList rank_candidates(const Model& model, const ContextIds& who,
                                  std::span<const HistoryItem> history,
                                  std::span<const std::int64_t> candidates,
                                  const FusionSettings& fusion) {
  if (fusion.gamma[2] > 0.0)
    throw usage_error("rank_candidates: glance-and-skip weight must be <= 0");
  RankedList out;
  if (candidates.empty()) return out;

  Tape tape(Tape::Mode::no_grad);
  Tensor e_h = model.encode(tape, history);

  std::unordered_set<std::int64_t> seen;
  seen.reserve(candidates.size() * 2);
  out.items.reserve(candidates.size());
  for (std::int64_t id : candidates) {
    if (!seen.insert(id).second) {
      ++out.deduplicated;
      continue;
    }
    if (id < 0 || id >= model.cardinality().items) {
      ++out.skipped_unknown;
      continue;
    }
    ContextIds ids = who;
    ids.item = id;
    TaskPredictions pred = model.forward_encoded(tape, e_h, ids);
    RankedItem r;
    r.item_id = id;
    r.y = pred.probabilities();
    r.score = fusion_score(r.y, fusion.gamma);
    out.items.push_back(r);
  }
  std::sort(out.items.begin(), out.items.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;  // deterministic tie order
  });
  if (out.items.size() > static_cast<std::size_t>(fusion.topk))
    out.items.resize(static_cast<std::size_t>(fusion.topk));
  return out;
}

}  // namespace feedrank
