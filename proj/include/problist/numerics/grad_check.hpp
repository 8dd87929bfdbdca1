#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "problist/numerics/tensor.hpp"

namespace problist::numerics {

/// Evaluates the loss at `params`; when `grad` is non-null also writes the
/// analytic gradient into it (same layout as params, overwritten).
using LossClosure = std::function<double(const ParamSet& params, ParamSet* grad)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_group;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  bool all_finite = true;
};

/// Central finite differences against the analytic gradient for every scalar
/// of every group. Relative error is |a - n| / max(|a|, |n|, floor); the
/// floor keeps near-zero entries from dominating through roundoff alone.
inline GradCheckResult grad_check(const LossClosure& loss, const ParamSet& params, double h = 1e-5,
                                  double floor = 1e-6) {
  GradCheckResult res;
  ParamSet analytic = params.zeros_like();
  loss(params, &analytic);
  res.all_finite = analytic.all_finite();
  ParamSet probe = params;
  for (std::size_t g = 0; g < probe.entries().size(); ++g) {
    auto& entry = probe.entries()[g];
    auto vals = entry.value.values();
    const auto ana = analytic.entries()[g].value.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = loss(probe, nullptr);
      vals[i] = orig - h;
      const double down = loss(probe, nullptr);
      vals[i] = orig;
      const double num = (up - down) / (2.0 * h);
      if (!std::isfinite(num)) res.all_finite = false;
      const double err =
          std::abs(ana[i] - num) / std::max({std::abs(ana[i]), std::abs(num), floor});
      ++res.checked;
      if (err > res.max_relative_error || !std::isfinite(err)) {
        res.max_relative_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
        res.worst_group = entry.name;
        res.worst_index = i;
        res.analytic = ana[i];
        res.numeric = num;
      }
    }
  }
  return res;
}

}  // namespace problist::numerics
