#pragma once

// Central-difference verification of reverse-mode gradients.
//
// The forward functor is re-evaluated from scratch on a fresh tape for every
// probe, so it must be a pure function of the parameter values it closes over.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "feedrank/errors.hpp"
#include "feedrank/tensor.hpp"

namespace feedrank {

using ParamList = std::vector<std::pair<std::string, Tensor>>;

struct GradCheckResult {
  bool pass = true;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Relative error with an absolute floor: |a - b| / max(1, |a|, |b|).
inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central differences of f around the current parameter values.
template <class Forward>
std::vector<std::vector<double>> finite_difference_grads(const ParamList& params, Forward&& f,
                                                         double step = 1e-5) {
  if (!(step > 0.0)) throw usage_error("finite_difference_grads: step must be positive");
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& [name, p] : params) {
    Tensor param = p;  // shared handle; perturb in place, restore after
    std::vector<double> g(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param.values()[i];
      param.values()[i] = saved + step;
      Tape tp(Tape::Mode::no_grad);
      const double fp = f(tp).item();
      param.values()[i] = saved - step;
      Tape tm(Tape::Mode::no_grad);
      const double fm = f(tm).item();
      param.values()[i] = saved;
      g[i] = (fp - fm) / (2.0 * step);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Compare a set of claimed gradients against numeric ones.
inline GradCheckResult compare_grads(const ParamList& params,
                                     const std::vector<std::vector<double>>& analytic,
                                     const std::vector<std::vector<double>>& numeric,
                                     double tol = 1e-4) {
  if (analytic.size() != params.size() || numeric.size() != params.size())
    throw usage_error("compare_grads: gradient list size mismatch");
  GradCheckResult r;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    if (analytic[pi].size() != numeric[pi].size())
      throw usage_error("compare_grads: gradient width mismatch for " + params[pi].first);
    for (std::size_t i = 0; i < analytic[pi].size(); ++i) {
      const double e = rel_error(analytic[pi][i], numeric[pi][i]);
      ++r.coords_checked;
      if (e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst_param = params[pi].first;
        r.worst_index = i;
        r.analytic = analytic[pi][i];
        r.numeric = numeric[pi][i];
      }
    }
  }
  r.pass = r.max_rel_error < tol;
  return r;
}

// Runs backward once to collect analytic gradients, then probes every
// coordinate of every listed parameter with central differences.
template <class Forward>
GradCheckResult grad_check(const ParamList& params, Forward&& f, double step = 1e-5,
                           double tol = 1e-4) {
  for (const auto& [name, p] : params) {
    if (!p.requires_grad())
      throw usage_error("grad_check: parameter '" + name + "' does not require gradients");
    Tensor(p).zero_grad();
  }
  Tape tape;
  Tensor loss = f(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) analytic.push_back(p.grad());
  const auto numeric = finite_difference_grads(params, f, step);
  return compare_grads(params, analytic, numeric, tol);
}

// Single-point convenience form.
template <class Forward>
GradCheckResult grad_check(Forward&& f, const Tensor& point, double step = 1e-5,
                           double tol = 1e-4) {
  ParamList params{{"point", point}};
  return grad_check(params, std::forward<Forward>(f), step, tol);
}

}  // namespace feedrank
