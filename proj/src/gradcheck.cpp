#include "lcn4/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lcn4/errors.hpp"

namespace lcn4 {

GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& x,
                                  const GradCheckOptions& options) {
  const auto base = x.data();
  const std::vector<double> origin(base.begin(), base.end());

  Tensor probe(x.shape(), origin, true);
  Tensor loss = f(probe);
  if (loss.numel() != 1) throw PreconditionError("finite_diff_check: f must return a scalar");
  loss.backward();
  const std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  NoGradGuard no_grad;
  auto eval_at = [&](std::size_t i, double delta) {
    std::vector<double> moved = origin;
    moved[i] += delta;
    return f(Tensor(x.shape(), std::move(moved))).item();
  };
  const double center = f(Tensor(x.shape(), origin)).item();

  GradCheckResult result;
  const double h = options.step;
  for (std::size_t i = 0; i < origin.size(); ++i) {
    const double up = eval_at(i, h);
    const double down = eval_at(i, -h);
    if (options.skip_kinks) {
      const double fwd = (up - center) / h;
      const double bwd = (center - down) / h;
      if (std::abs(fwd - bwd) > options.kink_tolerance * std::max(1.0, std::abs(fwd + bwd) / 2)) {
        ++result.skipped;
        continue;
      }
    }
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    ++result.checked;
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace lcn4
