#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "combnet/error.hpp"
#include "combnet/tensor.hpp"

namespace combnet {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Central-difference check of `analytic` = d objective / d inputs.
///
/// `objective` is re-evaluated after each coordinate of `inputs` is nudged by
/// +-step in place; inputs are restored afterwards.
template <class Objective>
GradCheckResult grad_check(Objective&& objective, std::span<double> inputs,
                           std::span<const double> analytic, double step = 1e-4) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be > 0");
  if (inputs.size() != analytic.size()) {
    throw ShapeError("grad_check: " + std::to_string(inputs.size()) + " inputs vs " +
                     std::to_string(analytic.size()) + " analytic derivatives");
  }
  GradCheckResult r;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double saved = inputs[i];
    inputs[i] = saved + step;
    const double up = objective();
    inputs[i] = saved - step;
    const double down = objective();
    inputs[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      throw NumericalError("non-finite derivative at coordinate " + std::to_string(i));
    }
    const double err = relative_error(analytic[i], numeric);
    if (err > r.max_rel_error || i == 0) {
      r = {err, i, analytic[i], numeric};
    }
  }
  return r;
}

/// Sum of elementwise products; used to turn a tensor-valued op into a scalar
/// objective against a fixed upstream gradient.
inline double dot(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("dot shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace combnet
