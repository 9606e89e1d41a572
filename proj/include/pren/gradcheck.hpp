#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "pren/tape.hpp"
#include "pren/tensor.hpp"

namespace pren {

struct FdReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// Central finite differences against an analytic gradient. For each selected
// input element: numeric = (f(x+eps) - f(x-eps)) / (2 eps), relative error
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
//
// `max_elems_per_tensor` < 0 checks every element; otherwise a seeded random
// subset per tensor (large parameter tensors would need one forward pair per
// element).
inline FdReport finite_difference_gradient(
    const std::function<double(const std::vector<Tensor<double>>&)>& eval,
    const std::function<std::vector<std::vector<double>>(
        const std::vector<Tensor<double>>&)>& analytic,
    std::vector<Tensor<double>> inputs, double eps,
    int max_elems_per_tensor = -1, std::uint64_t sample_seed = 12345) {
  FdReport report;
  std::vector<std::vector<double>> grads = analytic(inputs);
  std::mt19937_64 rng(sample_seed);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    std::vector<std::size_t> elems;
    std::size_t n = inputs[ti].data.size();
    if (max_elems_per_tensor < 0 ||
        n <= static_cast<std::size_t>(max_elems_per_tensor)) {
      elems.resize(n);
      for (std::size_t i = 0; i < n; ++i) elems[i] = i;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (int i = 0; i < max_elems_per_tensor; ++i) elems.push_back(pick(rng));
    }
    for (std::size_t i : elems) {
      double saved = inputs[ti].data[i];
      inputs[ti].data[i] = saved + eps;
      double fp = eval(inputs);
      inputs[ti].data[i] = saved - eps;
      double fm = eval(inputs);
      inputs[ti].data[i] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = grads[ti][i];
      double rel =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checked;
    }
  }
  return report;
}

// Builds a scalar-loss graph from leaf ids for the given inputs; used both as
// the forward evaluator and, with backward(), as the analytic gradient.
using GraphBuilder =
    std::function<int(Tape<double>&, const std::vector<int>&)>;

inline FdReport fd_check_graph(const GraphBuilder& build,
                               const std::vector<Tensor<double>>& inputs,
                               double eps, int max_elems_per_tensor = -1,
                               std::uint64_t sample_seed = 12345) {
  auto eval = [&build](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape;
    std::vector<int> ids;
    ids.reserve(xs.size());
    for (const Tensor<double>& x : xs) ids.push_back(tape.leaf(x));
    int loss = build(tape, ids);
    return tape.value(loss).data[0];
  };
  auto analytic = [&build](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape;
    std::vector<Tensor<double>> copies = xs;
    std::vector<int> ids;
    ids.reserve(copies.size());
    for (Tensor<double>& x : copies) ids.push_back(tape.param(&x));
    int loss = build(tape, ids);
    tape.backward(loss);
    std::vector<std::vector<double>> grads;
    for (Tensor<double>& x : copies) {
      x.ensure_grad();
      grads.push_back(x.grad);
    }
    return grads;
  };
  return finite_difference_gradient(eval, analytic, inputs, eps,
                                    max_elems_per_tensor, sample_seed);
}

}  // namespace pren
