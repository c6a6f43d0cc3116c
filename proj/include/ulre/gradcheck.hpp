#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ulre/autodiff.hpp"

namespace ulre::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Entries where the one-sided slopes disagree (a kink within one step);
  /// reported but excluded from max_rel_error.
  std::size_t flagged = 0;
};

/// Builds the scalar loss on a fresh tape from the given parameter leaves.
template <typename T>
using LossBuilder = std::function<Var<T>(Tape<T>&, std::span<const Var<T>>)>;

/// Compares reverse-mode gradients of `f` against central differences.
///
/// Error per entry is |analytic - central| / max(1, |analytic|, |central|).
/// An entry is treated as nondifferentiable when the second difference
/// |f(x+h) - 2 f(x) + f(x-h)| exceeds kink_tol * h * max(1, |analytic|):
/// smooth functions give O(h^2) there, a slope jump gives O(h).
template <typename T>
GradCheckReport check_gradient(const LossBuilder<T>& f, const std::vector<Tensor<T>>& params, T step,
                               double kink_tol = 1e-2) {
  auto evaluate = [&](const std::vector<Tensor<T>>& ps) {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    vars.reserve(ps.size());
    for (const auto& p : ps) vars.push_back(tape.parameter(p));
    return static_cast<double>(f(tape, vars).value().item());
  };

  std::vector<Tensor<T>> analytic;
  {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    const Var<T> loss = f(tape, vars);
    analytic = tape.grad(loss, vars);
  }

  GradCheckReport report;
  std::vector<Tensor<T>> work = params;
  const double f0 = evaluate(work);
  const double h = static_cast<double>(step);
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const T orig = work[p][i];
      work[p][i] = orig + step;
      const double fp = evaluate(work);
      work[p][i] = orig - step;
      const double fm = evaluate(work);
      work[p][i] = orig;
      // Use the actually representable step.
      const double hp = static_cast<double>(static_cast<T>(orig + step) - orig);
      const double hm = static_cast<double>(orig - static_cast<T>(orig - step));
      const double central = (fp - fm) / (hp + hm);
      const double a = static_cast<double>(analytic[p][i]);
      const double second = std::abs(fp - 2.0 * f0 + fm);
      if (second > kink_tol * h * std::max(1.0, std::abs(a))) {
        ++report.flagged;
        continue;
      }
      const double err = std::abs(a - central) / std::max({1.0, std::abs(a), std::abs(central)});
      report.max_rel_error = std::max(report.max_rel_error, err);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace ulre::ad
