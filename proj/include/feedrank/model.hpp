#pragma once

// End-to-end ranking model: history encoder -> context transformation ->
// shared-expert task heads. Owns every learnable tensor and exposes them as
// a stable, named registry (the order never changes across runs, which the
// optimizer state and checkpoint format both rely on).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "feedrank/config.hpp"
#include "feedrank/context.hpp"
#include "feedrank/encoder.hpp"
#include "feedrank/errors.hpp"
#include "feedrank/gradcheck.hpp"
#include "feedrank/multitask.hpp"
#include "feedrank/rng.hpp"
#include "feedrank/tensor.hpp"

namespace feedrank {

struct ModelCardinality {
  std::int64_t users = 0;
  std::int64_t items = 0;
  std::int64_t platforms = 0;
};

class Model {
 public:
  Model(const ModelSettings& settings, const ModelCardinality& card, std::uint64_t seed)
      : settings_(settings), card_(card) {
    if (card.users < 1 || card.items < 1 || card.platforms < 1)
      throw config_error("model: user/item/platform cardinalities must be positive");
    if (settings.context_width() % settings.slots != 0)
      throw config_error("model: slot count must divide the transformed width");
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    build(rng);
  }

  const ModelSettings& settings() const { return settings_; }
  const ModelCardinality& cardinality() const { return card_; }
  const EncoderParams& encoder() const { return encoder_; }
  EncoderParams& encoder() { return encoder_; }
  const ContextParams& context() const { return context_; }
  const MultiTaskParams& multitask() const { return multitask_; }

  // Stable name -> tensor registry; construction order defines the order.
  const ParamList& named_params() const { return params_; }

  void zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  // Full forward pass for one (user, item, platform) triple given the user's
  // (already classified) watch history.
  TaskPredictions forward(Tape& tape, std::span<const HistoryItem> history,
                          const ContextIds& ids) const {
    EncodedHistory enc = encode_history(tape, encoder_, history);
    return forward_encoded(tape, enc.e_h, ids);
  }

  // Forward pass reusing a precomputed history summary; serving encodes a
  // user's history once and scores many candidates against it.
  TaskPredictions forward_encoded(Tape& tape, const Tensor& e_h, const ContextIds& ids) const {
    ContextOutput ctx = transform_context(tape, context_, ids);
    Tensor x = tape.concat_cols({ctx.e_tilde, e_h});
    return predict_tasks(tape, multitask_, x);
  }

  Tensor encode(Tape& tape, std::span<const HistoryItem> history) const {
    return encode_history(tape, encoder_, history).e_h;
  }

 private:
  void build(Rng& rng) {
    const std::int64_t d = settings_.embedding_dim;
    const std::int64_t w = settings_.width();
    const std::int64_t L = settings_.seq_len;
    const std::int64_t D = settings_.context_width();
    const std::int64_t xw = settings_.task_input_width();

    encoder_.ln_eps = 1e-5;
    encoder_.use_feedback_channels = settings_.use_feedback_channels;
    encoder_.mean_pool = settings_.history_pool == "mean";
    encoder_.item_embeddings = embedding(rng, "encoder.items", card_.items, d);
    encoder_.position_embeddings = embedding(rng, "encoder.pos", L, w);
    encoder_.blocks.resize(static_cast<std::size_t>(settings_.blocks));
    for (std::size_t b = 0; b < encoder_.blocks.size(); ++b) {
      auto& blk = encoder_.blocks[b];
      const std::string pre = "encoder.block" + std::to_string(b) + ".";
      blk.wq = linear(rng, pre + "wq", w, w);
      blk.wk = linear(rng, pre + "wk", w, w);
      blk.wv = linear(rng, pre + "wv", w, w);
      blk.ffn_w1 = linear(rng, pre + "ffn_w1", w, w);
      blk.ffn_b1 = bias(pre + "ffn_b1", w);
      blk.ffn_w2 = linear(rng, pre + "ffn_w2", w, w);
      blk.ffn_b2 = bias(pre + "ffn_b2", w);
      blk.ln1_gain = gain(pre + "ln1_gain", w);
      blk.ln1_bias = bias(pre + "ln1_bias", w);
      blk.ln2_gain = gain(pre + "ln2_gain", w);
      blk.ln2_bias = bias(pre + "ln2_bias", w);
    }

    context_.age_buckets = settings_.age_buckets;
    context_.locations = settings_.locations;
    context_.categories = settings_.categories;
    context_.include_location = settings_.include_location;
    context_.user_embeddings = embedding(rng, "context.users", card_.users, d);
    context_.item_embeddings = embedding(rng, "context.items", card_.items, d);
    context_.platform_embeddings = embedding(rng, "context.platforms", card_.platforms, d);
    context_.age_embeddings = embedding(rng, "context.ages", settings_.age_buckets, d);
    context_.category_embeddings = embedding(rng, "context.categories", settings_.categories, d);
    if (settings_.include_location)
      context_.location_embeddings = embedding(rng, "context.locations", settings_.locations, d);
    context_.w_gate = linear(rng, "context.w_gate", D, 3 * d, /*fan_in=*/3 * d);
    context_.w_slot = linear(rng, "context.w_slot", settings_.slots, D + 3 * d,
                             /*fan_in=*/D + 3 * d);

    multitask_.experts.resize(static_cast<std::size_t>(settings_.experts));
    for (std::size_t i = 0; i < multitask_.experts.size(); ++i) {
      auto& e = multitask_.experts[i];
      const std::string pre = "expert" + std::to_string(i) + ".";
      e.w1 = linear(rng, pre + "w1", xw, settings_.expert_hidden);
      e.b1 = bias(pre + "b1", settings_.expert_hidden);
      e.w2 = linear(rng, pre + "w2", settings_.expert_hidden, settings_.expert_out);
      e.b2 = bias(pre + "b2", settings_.expert_out);
    }
    for (std::size_t k = 0; k < kNumTasks; ++k) {
      auto& head = multitask_.heads[k];
      const std::string pre = std::string("head_") + kTaskNames[k] + ".";
      head.w_gate = linear(rng, pre + "w_gate", settings_.experts, xw, /*fan_in=*/xw);
      head.w_pred = linear(rng, pre + "w_pred", 1, settings_.expert_out,
                           /*fan_in=*/settings_.expert_out);
      head.b_pred = bias(pre + "b_pred", 1);
    }
  }

  Tensor track(const std::string& name, Tensor t) {
    params_.emplace_back(name, t);
    return t;
  }

  Tensor embedding(Rng& rng, const std::string& name, std::int64_t rows, std::int64_t cols) {
    Tensor t = Tensor::zeros(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), true);
    for (double& v : t.values()) v = 0.1 * gaussian(rng);
    return track(name, t);
  }

  // Weight matrix scaled by 1/sqrt(fan_in); `rows x cols`, row-major. For
  // plain matmul weights fan_in is the row count; matmul_nt weights pass it.
  Tensor linear(Rng& rng, const std::string& name, std::int64_t rows, std::int64_t cols,
                std::int64_t fan_in = 0) {
    if (fan_in == 0) fan_in = rows;
    const double sigma = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), true);
    for (double& v : t.values()) v = sigma * gaussian(rng);
    return track(name, t);
  }

  Tensor bias(const std::string& name, std::int64_t n) {
    return track(name, Tensor::zeros(1, static_cast<std::size_t>(n), true));
  }

  Tensor gain(const std::string& name, std::int64_t n) {
    Tensor t = Tensor::zeros(1, static_cast<std::size_t>(n), true);
    std::fill(t.values().begin(), t.values().end(), 1.0);
    return track(name, t);
  }

  ModelSettings settings_;
  ModelCardinality card_;
  EncoderParams encoder_;
  ContextParams context_;
  MultiTaskParams multitask_;
  ParamList params_;
};

}  // namespace feedrank
