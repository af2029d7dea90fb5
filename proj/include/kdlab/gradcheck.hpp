#pragma once

#include <functional>

#include "kdlab/tensor.hpp"

namespace kdlab::num {

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Compares the tape gradient of f at x against central differences
// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) and returns
// max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps = 1e-6);

}  // namespace kdlab::num
