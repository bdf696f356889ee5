#pragma once

// Dense row-major rank-2 tensors of doubles plus a reverse-mode tape.
//
// Conventions:
//   * vectors are 1xN rows, scalars are 1x1
//   * a tensor is a shared handle; copying shares storage and gradient
//   * gradients are allocated iff requires_grad, and *accumulate* across
//     backward calls — callers zero them between optimizer steps
//   * ops record backward closures in creation order; backward replays the
//     tape exactly once, in reverse
//
// All kernels are plain sequential loops so that results are bitwise
// reproducible and independent of padding tricks upstream (adding exact-zero
// contributions at the front of an accumulation never changes the sum).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "feedrank/errors.hpp"

namespace feedrank {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t count() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
};

// C (+)= A * B, A: m*k, B: k*n, row-major. `acc` keeps existing C contents.
inline void gemm_nn(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                    std::size_t n, bool acc) {
  if (!acc) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (+)= A * B^T, A: m*k, B: n*k.
inline void gemm_nt(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                    std::size_t n, bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = acc ? crow[j] + s : s;
    }
  }
}

// C += A^T * B, A: m*k, B: m*n, C: k*n. Accumulating only (gradient use).
inline void gemm_tn_acc(double* c, const double* a, const double* b, std::size_t m, std::size_t k,
                        std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
    return make(rows, cols, requires_grad);
  }

  static Tensor constant(std::size_t rows, std::size_t cols, double v) {
    Tensor t = make(rows, cols, false);
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    Tensor t = make(1, 1, requires_grad);
    t.node_->value[0] = v;
    return t;
  }

  static Tensor row(std::vector<double> data, bool requires_grad = false) {
    const std::size_t n = data.size();
    return from_data(1, n, std::move(data), requires_grad);
  }

  static Tensor from_data(std::size_t rows, std::size_t cols, std::vector<double> data,
                          bool requires_grad = false) {
    if (data.size() != rows * cols)
      throw dimension_error("tensor: data size " + std::to_string(data.size()) +
                            " does not fill shape " + Shape{rows, cols}.str());
    Tensor t = make(rows, cols, requires_grad);
    t.node_->value = std::move(data);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->shape.count(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  std::vector<double>& grad() {
    check_grad();
    return node_->grad;
  }
  const std::vector<double>& grad() const {
    check_grad();
    return node_->grad;
  }

  void zero_grad() {
    if (requires_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double& at(std::size_t r, std::size_t c) {
    check_index(r, c);
    return node_->value[r * cols() + c];
  }
  double at(std::size_t r, std::size_t c) const {
    check_index(r, c);
    return node_->value[r * cols() + c];
  }

  // Scalar extraction; shape must be 1x1.
  double item() const {
    if (size() != 1) throw dimension_error("item(): tensor is " + shape().str() + ", not 1x1");
    return node_->value[0];
  }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;

  static Tensor make(std::size_t rows, std::size_t cols, bool requires_grad) {
    if (rows == 0 || cols == 0)
      throw dimension_error("tensor: dimensions must be positive, got " +
                            Shape{rows, cols}.str());
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->shape = {rows, cols};
    t.node_->value.assign(rows * cols, 0.0);
    t.node_->requires_grad = requires_grad;
    if (requires_grad) t.node_->grad.assign(rows * cols, 0.0);
    return t;
  }

  void check_grad() const {
    if (!node_ || !node_->requires_grad)
      throw usage_error("grad(): tensor does not require gradients");
  }
  void check_index(std::size_t r, std::size_t c) const {
    if (r >= rows() || c >= cols())
      throw index_error("tensor index (" + std::to_string(r) + "," + std::to_string(c) +
                        ") out of range for " + shape().str());
  }

  std::shared_ptr<detail::TensorNode> node_;
};

// Records forward ops and replays their backward closures in reverse order.
class Tape {
 public:
  enum class Mode { record, no_grad };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}

  bool recording() const { return mode_ == Mode::record; }
  std::size_t node_count() const { return nodes_.size(); }

  // ---- binary matrix products ------------------------------------------

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
      throw dimension_error("matmul: inner dimensions disagree: " + a.shape().str() + " * " +
                            b.shape().str());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = result(m, n, any_grad({a, b}));
    detail::gemm_nn(out.values().data(), a.values().data(), b.values().data(), m, k, n, false);
    if (out.requires_grad()) {
      auto an = a.node_, bn = b.node_, on = out.node_;
      push("matmul", on, [an, bn, on, m, k, n] {
        const double* dout = on->grad.data();
        if (an->requires_grad)  // dA += dC * B^T
          detail::gemm_nt(an->grad.data(), dout, bn->value.data(), m, n, k, true);
        if (bn->requires_grad)  // dB += A^T * dC
          detail::gemm_tn_acc(bn->grad.data(), an->value.data(), dout, m, k, n);
      });
    }
    return out;
  }

  // a * b^T; the natural product against weight tables stored [out x in].
  Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
      throw dimension_error("matmul_nt: inner dimensions disagree: " + a.shape().str() +
                            " * (" + b.shape().str() + ")^T");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out = result(m, n, any_grad({a, b}));
    detail::gemm_nt(out.values().data(), a.values().data(), b.values().data(), m, k, n, false);
    if (out.requires_grad()) {
      auto an = a.node_, bn = b.node_, on = out.node_;
      push("matmul_nt", on, [an, bn, on, m, k, n] {
        const double* dout = on->grad.data();
        if (an->requires_grad)  // dA += dC * B
          detail::gemm_nn(an->grad.data(), dout, bn->value.data(), m, n, k, true);
        if (bn->requires_grad)  // dB += dC^T * A
          detail::gemm_tn_acc(bn->grad.data(), dout, an->value.data(), m, n, k);
      });
    }
    return out;
  }

  // ---- elementwise ------------------------------------------------------

  // b must match a's shape exactly, or be a 1 x a.cols() row broadcast over rows.
  Tensor add(const Tensor& a, const Tensor& b) { return add_like(a, b, +1.0); }
  Tensor sub(const Tensor& a, const Tensor& b) { return add_like(a, b, -1.0); }

  Tensor mul(const Tensor& a, const Tensor& b) {
    const bool bcast = broadcast_row(a, b, "mul");
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out = result(r, c, any_grad({a, b}));
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        ov[i * c + j] = av[i * c + j] * bv[bcast ? j : i * c + j];
    if (out.requires_grad()) {
      auto an = a.node_, bn = b.node_, on = out.node_;
      push("mul", on, [an, bn, on, r, c, bcast] {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const double d = on->grad[i * c + j];
            const std::size_t bi = bcast ? j : i * c + j;
            if (an->requires_grad) an->grad[i * c + j] += d * bn->value[bi];
            if (bn->requires_grad) bn->grad[bi] += d * an->value[i * c + j];
          }
      });
    }
    return out;
  }

  Tensor scale(const Tensor& x, double factor) {
    Tensor out = result(x.rows(), x.cols(), any_grad({x}));
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = factor * xv[i];
    if (out.requires_grad()) {
      auto xn = x.node_, on = out.node_;
      push("scale", on, [xn, on, factor] {
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += factor * on->grad[i];
      });
    }
    return out;
  }

  Tensor sigmoid(const Tensor& x) {
    Tensor out = result(x.rows(), x.cols(), any_grad({x}));
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      // stable in both tails
      ov[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    if (out.requires_grad()) {
      auto xn = x.node_, on = out.node_;
      push("sigmoid", on, [xn, on] {
        for (std::size_t i = 0; i < xn->grad.size(); ++i) {
          const double y = on->value[i];
          xn->grad[i] += on->grad[i] * y * (1.0 - y);
        }
      });
    }
    return out;
  }

  Tensor relu(const Tensor& x) {
    Tensor out = result(x.rows(), x.cols(), any_grad({x}));
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (out.requires_grad()) {
      auto xn = x.node_, on = out.node_;
      push("relu", on, [xn, on] {
        for (std::size_t i = 0; i < xn->grad.size(); ++i)
          if (xn->value[i] > 0.0) xn->grad[i] += on->grad[i];
      });
    }
    return out;
  }

  Tensor log(const Tensor& x) {
    Tensor out = result(x.rows(), x.cols(), any_grad({x}));
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (!(xv[i] > 0.0))
        throw numeric_error("log: non-positive input " + std::to_string(xv[i]));
      ov[i] = std::log(xv[i]);
    }
    if (out.requires_grad()) {
      auto xn = x.node_, on = out.node_;
      push("log", on, [xn, on] {
        for (std::size_t i = 0; i < xn->grad.size(); ++i)
          xn->grad[i] += on->grad[i] / xn->value[i];
      });
    }
    return out;
  }

  // Gradient passes through strictly inside (lo, hi) and is zero where clipped.
  Tensor clamp(const Tensor& x, double lo, double hi) {
    if (!(lo < hi)) throw usage_error("clamp: lo must be < hi");
    Tensor out = result(x.rows(), x.cols(), any_grad({x}));
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = std::min(hi, std::max(lo, xv[i]));
    if (out.requires_grad()) {
      auto xn = x.node_, on = out.node_;
      push("clamp", on, [xn, on, lo, hi] {
        for (std::size_t i = 0; i < xn->grad.size(); ++i)
          if (xn->value[i] > lo && xn->value[i] < hi) xn->grad[i] += on->grad[i];
      });
    }
    return out;
  }

  // ---- row softmax ------------------------------------------------------

  Tensor softmax_rows(const Tensor& x) {
    return softmax_impl(x, nullptr);
  }

  // key_mask[j] == 0 hides column j of every row; rows with no visible key
  // come out identically zero (and stay zero under backpropagation).
  Tensor masked_softmax_rows(const Tensor& x, const std::vector<std::uint8_t>& key_mask) {
    if (key_mask.size() != x.cols())
      throw dimension_error("masked_softmax_rows: mask size " +
                            std::to_string(key_mask.size()) + " vs " + x.shape().str());
    return softmax_impl(x, &key_mask);
  }

  // ---- layer normalization ---------------------------------------------

  // Per-row normalization with learned gain/bias (1 x cols each); population
  // variance, denominator sqrt(var + eps).
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    const std::size_t r = x.rows(), c = x.cols();
    if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c)
      throw dimension_error("layer_norm: gain/bias must be 1x" + std::to_string(c) + ", got " +
                            gain.shape().str() + " and " + bias.shape().str());
    if (!(eps > 0.0)) throw usage_error("layer_norm: eps must be positive");
    Tensor out = result(r, c, any_grad({x, gain, bias}));
    auto xhat = std::make_shared<std::vector<double>>(r * c);
    auto inv_std = std::make_shared<std::vector<double>>(r);
    const auto& xv = x.values();
    const auto& gv = gain.values();
    const auto& bv = bias.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < r; ++i) {
      const double* xr = xv.data() + i * c;
      double mean = 0.0;
      for (std::size_t j = 0; j < c; ++j) mean += xr[j];
      mean /= static_cast<double>(c);
      double var = 0.0;
      for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<double>(c);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[i] = is;
      for (std::size_t j = 0; j < c; ++j) {
        const double xh = (xr[j] - mean) * is;
        (*xhat)[i * c + j] = xh;
        ov[i * c + j] = gv[j] * xh + bv[j];
      }
    }
    if (out.requires_grad()) {
      auto xn = x.node_, gn = gain.node_, bn = bias.node_, on = out.node_;
      push("layer_norm", on, [xn, gn, bn, on, xhat, inv_std, r, c] {
        for (std::size_t i = 0; i < r; ++i) {
          const double* dy = on->grad.data() + i * c;
          const double* xh = xhat->data() + i * c;
          if (gn->requires_grad)
            for (std::size_t j = 0; j < c; ++j) gn->grad[j] += dy[j] * xh[j];
          if (bn->requires_grad)
            for (std::size_t j = 0; j < c; ++j) bn->grad[j] += dy[j];
          if (xn->requires_grad) {
            // dx = inv_std * (dyh - mean(dyh) - xhat * mean(dyh .* xhat))
            double mean_dyh = 0.0, mean_dyh_xh = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double dyh = dy[j] * gn->value[j];
              mean_dyh += dyh;
              mean_dyh_xh += dyh * xh[j];
            }
            mean_dyh /= static_cast<double>(c);
            mean_dyh_xh /= static_cast<double>(c);
            for (std::size_t j = 0; j < c; ++j) {
              const double dyh = dy[j] * gn->value[j];
              xn->grad[i * c + j] += (*inv_std)[i] * (dyh - mean_dyh - xh[j] * mean_dyh_xh);
            }
          }
        }
      });
    }
    return out;
  }

  // ---- structure ops ----------------------------------------------------

  Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw usage_error("concat_cols: no inputs");
    const std::size_t r = parts[0].rows();
    std::size_t c = 0;
    bool needs = false;
    for (const Tensor& p : parts) {
      if (p.rows() != r)
        throw dimension_error("concat_cols: row mismatch: " + p.shape().str() + " vs " +
                              parts[0].shape().str());
      c += p.cols();
      needs = needs || p.requires_grad();
    }
    Tensor out = result(r, c, needs && recording());
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      const std::size_t pc = p.cols();
      for (std::size_t i = 0; i < r; ++i)
        std::copy_n(p.values().data() + i * pc, pc, out.values().data() + i * c + off);
      off += pc;
    }
    if (out.requires_grad()) {
      std::vector<std::shared_ptr<detail::TensorNode>> ins;
      ins.reserve(parts.size());
      for (const Tensor& p : parts) ins.push_back(p.node_);
      auto on = out.node_;
      push("concat_cols", on, [ins, on, r, c] {
        std::size_t off = 0;
        for (const auto& pn : ins) {
          const std::size_t pc = pn->shape.cols;
          if (pn->requires_grad)
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < pc; ++j)
                pn->grad[i * pc + j] += on->grad[i * c + off + j];
          off += pc;
        }
      });
    }
    return out;
  }
  Tensor concat_cols(std::initializer_list<Tensor> parts) {
    std::vector<Tensor> v(parts);
    return concat_cols(std::span<const Tensor>(v));
  }

  Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw usage_error("concat_rows: no inputs");
    const std::size_t c = parts[0].cols();
    std::size_t r = 0;
    bool needs = false;
    for (const Tensor& p : parts) {
      if (p.cols() != c)
        throw dimension_error("concat_rows: column mismatch: " + p.shape().str() + " vs " +
                              parts[0].shape().str());
      r += p.rows();
      needs = needs || p.requires_grad();
    }
    Tensor out = result(r, c, needs && recording());
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      std::copy_n(p.values().data(), p.size(), out.values().data() + off * c);
      off += p.rows();
    }
    if (out.requires_grad()) {
      std::vector<std::shared_ptr<detail::TensorNode>> ins;
      ins.reserve(parts.size());
      for (const Tensor& p : parts) ins.push_back(p.node_);
      auto on = out.node_;
      push("concat_rows", on, [ins, on, c] {
        std::size_t off = 0;
        for (const auto& pn : ins) {
          if (pn->requires_grad)
            for (std::size_t i = 0; i < pn->shape.count(); ++i)
              pn->grad[i] += on->grad[off * c + i];
          off += pn->shape.rows;
        }
      });
    }
    return out;
  }
  Tensor concat_rows(std::initializer_list<Tensor> parts) {
    std::vector<Tensor> v(parts);
    return concat_rows(std::span<const Tensor>(v));
  }

  // Row lookup by id; gradient scatter-adds, so repeated ids accumulate.
  Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids) {
    if (ids.empty()) throw usage_error("gather_rows: no ids");
    const std::size_t c = table.cols();
    for (std::int64_t id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
        throw index_error("gather_rows: id " + std::to_string(id) + " out of range [0, " +
                          std::to_string(table.rows()) + ")");
    Tensor out = result(ids.size(), c, any_grad({table}));
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy_n(table.values().data() + static_cast<std::size_t>(ids[i]) * c, c,
                  out.values().data() + i * c);
    if (out.requires_grad()) {
      auto tn = table.node_, on = out.node_;
      std::vector<std::int64_t> idv(ids.begin(), ids.end());
      push("gather_rows", on, [tn, on, idv, c] {
        for (std::size_t i = 0; i < idv.size(); ++i) {
          double* dst = tn->grad.data() + static_cast<std::size_t>(idv[i]) * c;
          const double* src = on->grad.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
      });
    }
    return out;
  }

  Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
    if (count == 0 || start + count > x.rows())
      throw index_error("slice_rows: [" + std::to_string(start) + ", " +
                        std::to_string(start + count) + ") out of range for " + x.shape().str());
    const std::size_t c = x.cols();
    Tensor out = result(count, c, any_grad({x}));
    std::copy_n(x.values().data() + start * c, count * c, out.values().data());
    if (out.requires_grad()) {
      auto xn = x.node_, on = out.node_;
      push("slice_rows", on, [xn, on, start, count, c] {
        for (std::size_t i = 0; i < count * c; ++i) xn->grad[start * c + i] += on->grad[i];
      });
    }
    return out;
  }

  Tensor select_row(const Tensor& x, std::size_t row) { return slice_rows(x, row, 1); }

  // ---- reductions -------------------------------------------------------

  Tensor sum_all(const Tensor& x) {
    Tensor out = result(1, 1, any_grad({x}));
    double s = 0.0;
    for (double v : x.values()) s += v;
    out.values()[0] = s;
    if (out.requires_grad()) {
      auto xn = x.node_, on = out.node_;
      push("sum_all", on, [xn, on] {
        const double d = on->grad[0];
        for (double& g : xn->grad) g += d;
      });
    }
    return out;
  }

  Tensor mean_all(const Tensor& x) {
    Tensor s = sum_all(x);
    return scale(s, 1.0 / static_cast<double>(x.size()));
  }

  // ---- slot-wise scaling --------------------------------------------------
  //
  // alpha is 1 x S; S must divide e.cols(). Column j of every row is scaled
  // by alpha[j / (cols/S)] — contiguous equal-width slots.
  Tensor slot_scale(const Tensor& e, const Tensor& alpha) {
    const std::size_t c = e.cols(), s = alpha.cols();
    if (alpha.rows() != 1)
      throw dimension_error("slot_scale: alpha must be a row vector, got " + alpha.shape().str());
    if (s == 0 || c % s != 0)
      throw dimension_error("slot_scale: slot count " + std::to_string(s) +
                            " does not divide width " + std::to_string(c));
    const std::size_t w = c / s;
    const std::size_t r = e.rows();
    Tensor out = result(r, c, any_grad({e, alpha}));
    const auto& ev = e.values();
    const auto& av = alpha.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = av[j / w] * ev[i * c + j];
    if (out.requires_grad()) {
      auto en = e.node_, an = alpha.node_, on = out.node_;
      push("slot_scale", on, [en, an, on, r, c, w] {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const double d = on->grad[i * c + j];
            if (en->requires_grad) en->grad[i * c + j] += d * an->value[j / w];
            if (an->requires_grad) an->grad[j / w] += d * en->value[i * c + j];
          }
      });
    }
    return out;
  }

  // ---- backward ----------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and replays every recorded closure once, in
  // reverse creation order. Gradients accumulate into leaf tensors; the
  // tape's own intermediate buffers are reset first, so calling backward k
  // times adds exactly k copies of the gradient to every leaf.
  void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
      throw usage_error("backward: loss must be a defined 1x1 tensor");
    if (!loss.requires_grad())
      throw usage_error("backward: loss does not depend on any tracked parameter");
    for (auto& n : nodes_) std::fill(n.out->grad.begin(), n.out->grad.end(), 0.0);
    loss.node_->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->pull();
  }

 private:
  struct Node {
    const char* op;
    std::shared_ptr<detail::TensorNode> out;
    std::function<void()> pull;
  };

  bool any_grad(std::initializer_list<Tensor> ts) const {
    if (!recording()) return false;
    for (const Tensor& t : ts)
      if (t.requires_grad()) return true;
    return false;
  }

  Tensor result(std::size_t r, std::size_t c, bool requires_grad) {
    return Tensor::make(r, c, requires_grad);
  }

  template <class F>
  void push(const char* op, std::shared_ptr<detail::TensorNode> out, F&& fn) {
    nodes_.push_back(Node{op, std::move(out), std::function<void()>(std::forward<F>(fn))});
  }

  // Shared add/sub with optional row broadcast on b (add only broadcasts).
  Tensor add_like(const Tensor& a, const Tensor& b, double sign) {
    const bool bcast = broadcast_row(a, b, sign > 0 ? "add" : "sub");
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out = result(r, c, any_grad({a, b}));
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        ov[i * c + j] = av[i * c + j] + sign * bv[bcast ? j : i * c + j];
    if (out.requires_grad()) {
      auto an = a.node_, bn = b.node_, on = out.node_;
      push("add", on, [an, bn, on, r, c, bcast, sign] {
        if (an->requires_grad)
          for (std::size_t i = 0; i < r * c; ++i) an->grad[i] += on->grad[i];
        if (bn->requires_grad)
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              bn->grad[bcast ? j : i * c + j] += sign * on->grad[i * c + j];
      });
    }
    return out;
  }

  // True if b broadcasts as a row over a; throws when shapes are incompatible.
  static bool broadcast_row(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return false;
    if (b.rows() == 1 && b.cols() == a.cols()) return true;
    throw dimension_error(std::string(op) + ": shapes " + a.shape().str() + " and " +
                          b.shape().str() + " are incompatible");
  }

  Tensor softmax_impl(const Tensor& x, const std::vector<std::uint8_t>* key_mask) {
    const std::size_t r = x.rows(), c = x.cols();
    const auto& xv = x.values();
    for (double v : xv)
      if (!std::isfinite(v)) throw numeric_error("softmax: non-finite input");
    Tensor out = result(r, c, any_grad({x}));
    auto& ov = out.values();
    for (std::size_t i = 0; i < r; ++i) {
      const double* xr = xv.data() + i * c;
      double* orow = ov.data() + i * c;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < c; ++j)
        if ((!key_mask || (*key_mask)[j]) && xr[j] > mx) mx = xr[j];
      if (mx == -std::numeric_limits<double>::infinity()) {
        // row with every key hidden: defined as all-zero
        std::fill(orow, orow + c, 0.0);
        continue;
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        if (!key_mask || (*key_mask)[j]) {
          orow[j] = std::exp(xr[j] - mx);
          denom += orow[j];
        } else {
          orow[j] = 0.0;
        }
      }
      for (std::size_t j = 0; j < c; ++j) orow[j] /= denom;
    }
    if (out.requires_grad()) {
      auto xn = x.node_, on = out.node_;
      push("softmax_rows", on, [xn, on, r, c] {
        // dx_j = y_j * (dy_j - sum_k y_k dy_k); masked columns have y = 0
        for (std::size_t i = 0; i < r; ++i) {
          const double* y = on->value.data() + i * c;
          const double* dy = on->grad.data() + i * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += y[j] * dy[j];
          for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += y[j] * (dy[j] - dot);
        }
      });
    }
    return out;
  }

  std::vector<Node> nodes_;
  Mode mode_;
};

}  // namespace feedrank
