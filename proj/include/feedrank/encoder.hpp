#pragma once

// Feedback-aware self-attention encoder over a user's recent watch history.
//
// Each history step contributes its item embedding concatenated with three
// 0/1 feedback channels (evv, fvv, gvv), so every sequence row has width
// w = d + 3. Rows are left-padded to the working capacity; padded positions
// are hidden from attention as keys, and position rows are indexed by
// distance from the sequence end, which makes the encoding of a history
// independent of how much padding precedes it.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "feedrank/errors.hpp"
#include "feedrank/feedback.hpp"
#include "feedrank/tensor.hpp"

namespace feedrank {

struct EncoderBlockParams {
  Tensor wq, wk, wv;          // w x w each
  Tensor ffn_w1, ffn_b1;      // w x w, 1 x w
  Tensor ffn_w2, ffn_b2;      // w x w, 1 x w
  Tensor ln1_gain, ln1_bias;  // 1 x w
  Tensor ln2_gain, ln2_bias;  // 1 x w
};

struct EncoderParams {
  Tensor item_embeddings;      // |I| x d; row 0 doubles as the padding row
  Tensor position_embeddings;  // L x w; row L-1 is the most recent position
  std::vector<EncoderBlockParams> blocks;
  double ln_eps = 1e-5;
  bool use_feedback_channels = true;
  bool mean_pool = false;  // false: e_h is the last row; true: mean over real rows

  std::int64_t d() const { return static_cast<std::int64_t>(item_embeddings.cols()); }
  std::int64_t width() const { return d() + 3; }
  std::int64_t capacity() const { return static_cast<std::int64_t>(position_embeddings.rows()); }
  std::int64_t num_items() const { return static_cast<std::int64_t>(item_embeddings.rows()); }
};

struct EncoderInput {
  Tensor x;                        // C x w
  std::vector<std::uint8_t> mask;  // 1 = real history row, 0 = padding
  std::size_t real_len = 0;
};

struct EncodedHistory {
  Tensor e_h;                      // 1 x w summary
  Tensor rows;                     // C x w per-position encodings
  std::vector<std::uint8_t> mask;
  std::size_t real_len = 0;
};

// Builds the padded input block at working capacity `cap`:
// gathered item embeddings, feedback flag channels, and position rows.
// Histories longer than the table capacity keep only the most recent rows.
inline EncoderInput build_encoder_input(Tape& tape, const EncoderParams& params,
                                        std::span<const HistoryItem> history,
                                        std::size_t cap) {
  const std::size_t L = static_cast<std::size_t>(params.capacity());
  if (cap < 1 || cap > L)
    throw usage_error("build_encoder_input: capacity " + std::to_string(cap) +
                      " outside [1, " + std::to_string(L) + "]");
  const std::size_t keep = std::min(history.size(), cap);
  std::span<const HistoryItem> recent = history.subspan(history.size() - keep, keep);
  const std::size_t pad = cap - keep;

  std::vector<std::int64_t> ids(cap, 0);
  std::vector<std::uint8_t> mask(cap, 0);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& h = recent[i];
    if (h.item_id < 0 || h.item_id >= params.num_items())
      throw index_error("encoder: history item id " + std::to_string(h.item_id) +
                        " out of range [0, " + std::to_string(params.num_items()) + ")");
    ids[pad + i] = h.item_id;
    mask[pad + i] = 1;
  }

  Tensor flags = Tensor::zeros(cap, 3);
  if (params.use_feedback_channels) {
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& f = recent[i].flags;
      flags.at(pad + i, 0) = f.evv ? 1.0 : 0.0;
      flags.at(pad + i, 1) = f.fvv ? 1.0 : 0.0;
      flags.at(pad + i, 2) = f.gvv ? 1.0 : 0.0;
    }
  }

  Tensor items = tape.gather_rows(params.item_embeddings, ids);
  Tensor base = tape.concat_cols({items, flags});
  // Row i sits at distance cap-1-i from the end, so it takes position row
  // L-1-(cap-1-i) = L-cap+i: the most recent row always uses row L-1
  // regardless of padding, which is what makes capacity choice invisible.
  Tensor pos = tape.slice_rows(params.position_embeddings, L - cap, cap);
  EncoderInput in;
  in.x = tape.add(base, pos);
  in.mask = std::move(mask);
  in.real_len = keep;
  return in;
}

// Scaled dot-product self-attention with padded keys hidden. Rows whose key
// set is empty (all-padding inputs) come out identically zero.
inline Tensor self_attention(Tape& tape, const EncoderBlockParams& p, const Tensor& x,
                             const std::vector<std::uint8_t>& mask) {
  Tensor q = tape.matmul(x, p.wq);
  Tensor k = tape.matmul(x, p.wk);
  Tensor v = tape.matmul(x, p.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  Tensor scores = tape.scale(tape.matmul_nt(q, k), inv_sqrt);
  Tensor attn = tape.masked_softmax_rows(scores, mask);
  return tape.matmul(attn, v);
}

// Post-norm residual block: LN(SA(x) + x), then LN(FFN(.) + .).
inline Tensor encoder_block(Tape& tape, const EncoderBlockParams& p, const Tensor& x,
                            const std::vector<std::uint8_t>& mask, double eps) {
  Tensor h1 = tape.layer_norm(tape.add(self_attention(tape, p, x, mask), x), p.ln1_gain,
                              p.ln1_bias, eps);
  Tensor f = tape.relu(tape.add(tape.matmul(h1, p.ffn_w1), p.ffn_b1));
  f = tape.add(tape.matmul(f, p.ffn_w2), p.ffn_b2);
  return tape.layer_norm(tape.add(f, h1), p.ln2_gain, p.ln2_bias, eps);
}

// Encodes a history into per-position rows plus a single summary row e_h.
// The working capacity is the smallest that fits the (truncated) history;
// because masked positions never leak into real rows, the result is exactly
// what full-capacity encoding would produce.
inline EncodedHistory encode_history(Tape& tape, const EncoderParams& params,
                                     std::span<const HistoryItem> history) {
  const std::size_t L = static_cast<std::size_t>(params.capacity());
  const std::size_t cap = std::max<std::size_t>(1, std::min(history.size(), L));
  EncoderInput in = build_encoder_input(tape, params, history, cap);
  Tensor h = in.x;
  for (const auto& block : params.blocks) h = encoder_block(tape, block, h, in.mask, params.ln_eps);

  EncodedHistory out;
  out.rows = h;
  out.mask = in.mask;
  out.real_len = in.real_len;
  if (!params.mean_pool || in.real_len == 0) {
    // the last row: the most recent real interaction, or the learned
    // padding encoding when the user has no history at all
    out.e_h = tape.select_row(h, cap - 1);
  } else {
    std::vector<double> w(cap, 0.0);
    for (std::size_t i = 0; i < cap; ++i)
      if (in.mask[i]) w[i] = 1.0 / static_cast<double>(in.real_len);
    out.e_h = tape.matmul(Tensor::row(std::move(w)), h);
  }
  return out;
}

}  // namespace feedrank
