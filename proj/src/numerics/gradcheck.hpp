// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "numerics/tape.hpp"

namespace cl4ac::nn {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  // Largest |analytic| seen. Near zero means the check proved nothing.
  double max_abs_gradient = 0.0;
};

// Compares reverse-mode gradients of `f` against central differences
// (f(x+eps) - f(x-eps)) / 2eps over every coordinate of `params`. The error
// of one coordinate is |analytic - numeric| / max(|analytic|, |numeric|, floor).
// The floor keeps coordinates whose true gradient is zero (for example
// attention key biases) from reporting rounding noise as error.
// `f` must be deterministic: it is re-evaluated twice per coordinate.
template <typename T>
GradcheckResult finite_diff_check(const std::function<Var(Tape<T>&)>& f,
                                  const std::vector<Parameter<T>*>& params, double eps = 1e-5,
                                  double floor = 1e-6) {
  auto eval = [&f]() {
    Tape<T> tape;
    const double v = static_cast<double>(tape.value(f(tape)).item());
    if (!std::isfinite(v)) throw DomainError("gradient check: objective is not finite");
    return v;
  };

  for (auto* p : params) p->zero_grad();
  {
    Tape<T> tape;
    Var loss = f(tape);
    if (!std::isfinite(static_cast<double>(tape.value(loss).item()))) {
      throw DomainError("gradient check: objective is not finite");
    }
    tape.backward(loss);
  }

  GradcheckResult result;
  for (auto* p : params) {
    auto values = p->value().data();
    const Tensor<T> analytic = p->grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = saved + static_cast<T>(eps);
      const double up = eval();
      values[i] = saved - static_cast<T>(eps);
      const double down = eval();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double err = std::abs(a - numeric) / denom;
      ++result.coordinates;
      result.max_abs_gradient = std::max(result.max_abs_gradient, std::abs(a));
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_parameter = p->name();
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace cl4ac::nn
