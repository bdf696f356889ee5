#pragma once

// Shared-expert multi-task prediction heads.
//
// N experts transform the shared input x once; each of the K = 3 tasks
// (evv, fvv, gvv) mixes the expert outputs with its own softmax gate and maps
// the mixture to a probability through its own sigmoid tower:
//   f_i = expert_i(x)                      (1 x h each)
//   g^k = softmax(W_gate_k . x)            (1 x N)
//   o_k = sum_i g^k_i f_i                  (1 x h)
//   y_k = sigmoid(w_pred_k . o_k + b_k)    (1 x 1)

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "feedrank/errors.hpp"
#include "feedrank/tensor.hpp"

namespace feedrank {

inline constexpr std::size_t kNumTasks = 3;  // evv, fvv, gvv
inline constexpr std::array<const char*, kNumTasks> kTaskNames{"evv", "fvv", "gvv"};

struct ExpertParams {
  Tensor w1, b1;  // x_width x hidden, 1 x hidden
  Tensor w2, b2;  // hidden x h, 1 x h
};

struct TaskHeadParams {
  Tensor w_gate;  // N x x_width
  Tensor w_pred;  // 1 x h
  Tensor b_pred;  // 1 x 1
};

struct MultiTaskParams {
  std::vector<ExpertParams> experts;             // N shared experts
  std::array<TaskHeadParams, kNumTasks> heads;

  std::int64_t num_experts() const { return static_cast<std::int64_t>(experts.size()); }
  std::int64_t expert_out() const { return static_cast<std::int64_t>(experts[0].w2.cols()); }
};

struct TaskPredictions {
  std::array<Tensor, kNumTasks> y;  // 1 x 1 probabilities, each in (0,1)
  std::array<Tensor, kNumTasks> o;  // 1 x h mixed expert outputs
  std::array<Tensor, kNumTasks> g;  // 1 x N gate rows, each summing to 1

  std::array<double, kNumTasks> probabilities() const {
    return {y[0].item(), y[1].item(), y[2].item()};
  }
};

inline Tensor run_expert(Tape& tape, const ExpertParams& e, const Tensor& x) {
  Tensor h = tape.relu(tape.add(tape.matmul(x, e.w1), e.b1));
  return tape.add(tape.matmul(h, e.w2), e.b2);
}

inline TaskPredictions predict_tasks(Tape& tape, const MultiTaskParams& p, const Tensor& x) {
  if (p.experts.empty()) throw usage_error("predict_tasks: no experts configured");
  if (x.rows() != 1)
    throw dimension_error("predict_tasks: input must be a single row, got " + x.shape().str());
  std::vector<Tensor> outs;
  outs.reserve(p.experts.size());
  for (const auto& e : p.experts) outs.push_back(run_expert(tape, e, x));
  // N x h; every task mixes the same expert rows
  Tensor fmat = tape.concat_rows(std::span<const Tensor>(outs));
  TaskPredictions pred;
  for (std::size_t k = 0; k < kNumTasks; ++k) {
    const auto& head = p.heads[k];
    Tensor gate = tape.softmax_rows(tape.matmul_nt(x, head.w_gate));  // 1 x N
    Tensor o = tape.matmul(gate, fmat);                               // 1 x h
    Tensor y = tape.sigmoid(tape.add(tape.matmul_nt(o, head.w_pred), head.b_pred));
    pred.g[k] = gate;
    pred.o[k] = o;
    pred.y[k] = y;
  }
  return pred;
}

}  // namespace feedrank
