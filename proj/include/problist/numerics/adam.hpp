#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "problist/numerics/tensor.hpp"

namespace problist::numerics {

struct AdamConfig {
  double rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for every parameter group. Step counts are kept per
/// group so that groups skipped on some steps (a frozen or gated head) see
/// the same bias correction they would if optimized on their own.
struct AdamState {
  AdamConfig config;
  ParamSet first_moment;
  ParamSet second_moment;
  std::vector<std::int64_t> steps;

  AdamState() = default;
  AdamState(const ParamSet& params, AdamConfig cfg)
      : config(cfg),
        first_moment(params.zeros_like()),
        second_moment(params.zeros_like()),
        steps(params.group_count(), 0) {}
};

/// One bias-corrected Adam update. Groups for which `update_group(name)`
/// returns false are left untouched, moments included.
inline void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
                      const std::function<bool(const std::string&)>& update_group = {}) {
  params.check_layout(grads);
  params.check_layout(state.first_moment);
  auto& pe = params.entries();
  const auto& ge = grads.entries();
  auto& me = state.first_moment.entries();
  auto& ve = state.second_moment.entries();
  const auto& c = state.config;
  for (std::size_t g = 0; g < pe.size(); ++g) {
    if (update_group && !update_group(pe[g].name)) continue;
    const auto grad = ge[g].value.values();
    for (double v : grad)
      if (!std::isfinite(v))
        throw std::runtime_error("adam_step: non-finite gradient in parameter group '" +
                                 pe[g].name + "'");
    const auto t = ++state.steps[g];
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    auto p = pe[g].value.values();
    auto m = me[g].value.values();
    auto v = ve[g].value.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= c.rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

}  // namespace problist::numerics
