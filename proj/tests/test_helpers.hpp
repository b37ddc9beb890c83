// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "avsm/autodiff.hpp"
#include "avsm/common.hpp"

namespace avsm_test {

using avsm::Rng;
using avsm::ad::Tape;
using avsm::ad::Tensor;

inline Tensor random_tensor(std::vector<int> shape, Rng& rng,
                            double scale = 1.0, bool grad = true) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.ptr()[i] = scale * rng.normal();
  t.requires_grad = grad;
  return t;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst;  // "input i, flat index j"
};

// Central-difference check of d(f)/d(inputs) against tape gradients.
// f builds the graph on the given tape and returns a scalar tensor.
// Relative error uses a denominator floor so that finite-difference noise on
// near-zero gradients (abs ~1e-9) does not register as relative error;
// max_abs_err still reports those exactly.
inline GradCheckResult gradcheck(
    const std::function<Tensor(Tape*, const std::vector<Tensor>&)>& f,
    std::vector<Tensor> inputs, double h = 1e-5, int max_per_input = -1,
    double denom_floor = 1e-4) {
  Tape tape;
  for (auto& t : inputs)
    if (t.requires_grad) tape.watch(t);
  Tensor out = f(&tape, inputs);
  tape.backward(out);

  auto value_fn = [&](const std::vector<Tensor>& xs) {
    return f(nullptr, xs).value();
  };

  GradCheckResult res;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    if (!inputs[which].requires_grad) continue;
    Tensor analytic = tape.grad(inputs[which]);
    const std::int64_t n = inputs[which].numel();
    const std::int64_t stride =
        (max_per_input > 0 && n > max_per_input) ? n / max_per_input : 1;
    for (std::int64_t j = 0; j < n; j += stride) {
      const double num = avsm::ad::finite_diff(value_fn, inputs, which, j, h);
      const double ana = analytic.ptr()[j];
      const double abs_err = std::abs(num - ana);
      const double denom = std::max({std::abs(num), std::abs(ana), denom_floor});
      const double rel = abs_err / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = "input " + std::to_string(which) + ", index " +
                    std::to_string(j);
      }
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
    }
  }
  return res;
}

}  // namespace avsm_test
