#pragma once

// Context-conditioned feature transformation.
//
// The concatenated feature row E_in (one span of width d per feature) is
// re-weighted two ways:
//   1. an unbounded per-dimension gate computed from the (user, item,
//      platform) context: E_trans = (W1 . ctx) elementwise-times E_in
//   2. a bounded per-slot importance alpha in (0,1)^S applied to S
//      contiguous equal-width column slots of E_trans.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "feedrank/errors.hpp"
#include "feedrank/tensor.hpp"

namespace feedrank {

struct ContextIds {
  std::int64_t user = 0;
  std::int64_t item = 0;
  std::int64_t platform = 0;
};

struct ContextParams {
  Tensor user_embeddings;      // |U| x d
  Tensor item_embeddings;      // |I| x d (distinct from the encoder's table)
  Tensor platform_embeddings;  // |P| x d
  Tensor age_embeddings;       // age_buckets x d
  Tensor category_embeddings;  // categories x d
  Tensor location_embeddings;  // locations x d; undefined when location span is off
  Tensor w_gate;               // D x 3d, gate = E_in-width row from the context
  Tensor w_slot;               // S x (D + 3d)
  std::int64_t age_buckets = 8;
  std::int64_t locations = 16;
  std::int64_t categories = 32;
  bool include_location = true;

  std::int64_t d() const { return static_cast<std::int64_t>(user_embeddings.cols()); }
  std::int64_t width() const { return static_cast<std::int64_t>(w_gate.rows()); }  // D
  std::int64_t slot_count() const { return static_cast<std::int64_t>(w_slot.rows()); }
};

// Side features are derived deterministically from ids; the interaction log
// carries no demographic columns, so these stand in for profile lookups.
inline std::int64_t derive_age_bucket(const ContextParams& p, std::int64_t user_id) {
  return user_id % p.age_buckets;
}
inline std::int64_t derive_location(const ContextParams& p, std::int64_t user_id) {
  return (user_id / p.age_buckets) % p.locations;
}
inline std::int64_t derive_category(const ContextParams& p, std::int64_t item_id) {
  return item_id % p.categories;
}

struct ContextOutput {
  Tensor e_tilde;   // 1 x D, slot-weighted transformed features
  Tensor e_trans;   // 1 x D, gate-transformed features
  Tensor alpha;     // 1 x S, slot importances in (0,1)
  Tensor ctx;       // 1 x 3d, [e_u; e_i; e_p]
};

// Applies a row of slot weights to contiguous equal-width slots.
// Exposed standalone so the slot semantics can be oracle-tested directly.
inline Tensor apply_slots(Tape& tape, const Tensor& e, const Tensor& alpha) {
  return tape.slot_scale(e, alpha);
}

inline ContextOutput transform_context(Tape& tape, const ContextParams& p, const ContextIds& ids) {
  auto embed = [&](const Tensor& table, std::int64_t id, const char* what) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
      throw index_error(std::string("context: ") + what + " id " + std::to_string(id) +
                        " out of range [0, " + std::to_string(table.rows()) + ")");
    return tape.select_row(table, static_cast<std::size_t>(id));
  };
  Tensor e_u = embed(p.user_embeddings, ids.user, "user");
  Tensor e_i = embed(p.item_embeddings, ids.item, "item");
  Tensor e_p = embed(p.platform_embeddings, ids.platform, "platform");
  Tensor e_age = embed(p.age_embeddings, derive_age_bucket(p, ids.user), "age bucket");
  Tensor e_cat = embed(p.category_embeddings, derive_category(p, ids.item), "category");

  std::vector<Tensor> spans{e_u, e_i, e_p, e_age, e_cat};
  if (p.include_location)
    spans.push_back(embed(p.location_embeddings, derive_location(p, ids.user), "location"));
  ContextOutput out;
  Tensor e_in = tape.concat_cols(std::span<const Tensor>(spans));
  if (e_in.cols() != static_cast<std::size_t>(p.width()))
    throw dimension_error("context: span concat width " + std::to_string(e_in.cols()) +
                          " != gate width " + std::to_string(p.width()));
  out.ctx = tape.concat_cols({e_u, e_i, e_p});
  // unbounded gate: sign flips and amplification are intentional
  Tensor gate = tape.matmul_nt(out.ctx, p.w_gate);  // 1 x D
  out.e_trans = tape.mul(e_in, gate);
  Tensor slot_in = tape.concat_cols({out.e_trans, e_u, e_i, e_p});
  out.alpha = tape.sigmoid(tape.matmul_nt(slot_in, p.w_slot));  // 1 x S, in (0,1)
  out.e_tilde = apply_slots(tape, out.e_trans, out.alpha);
  return out;
}

}  // namespace feedrank
