#pragma once

#include <cstddef>
#include <functional>

#include "lcn4/tensor.hpp"

namespace lcn4 {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  // Coordinates skipped because the one-sided slopes disagree (a kink lies
  // within one step of the point).
  std::size_t skipped = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  bool skip_kinks = true;
  // Relative disagreement between forward and backward one-sided slopes
  // above which a coordinate counts as sitting on a kink.
  double kink_tolerance = 1e-2;
};

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Compares reverse-mode gradients of a scalar function against central
// differences. Error per coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& x,
                                  const GradCheckOptions& options = {});

inline double finite_diff_check(const ScalarFn& f, const Tensor& x, double step) {
  GradCheckOptions options;
  options.step = step;
  return finite_diff_check(f, x, options).max_rel_error;
}

}  // namespace lcn4
