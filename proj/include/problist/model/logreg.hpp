#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "problist/common.hpp"
#include "problist/numerics/ops.hpp"

namespace problist::model {

struct LogRegConfig {
  double l2 = 1e-4;
  double rate = 0.5;
  int max_iters = 5000;
  double tolerance = 1e-9;  // stop when the largest gradient entry falls below this
};

/// L2-regularized logistic regression on dense binary features. The
/// intercept is not penalized.
struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  int iterations = 0;

  [[nodiscard]] double logit(std::span<const double> x) const {
    if (x.size() != weights.size()) throw std::invalid_argument("logreg: feature length mismatch");
    double z = bias;
    for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
    return z;
  }
  [[nodiscard]] double predict(std::span<const double> x) const { return numerics::sigmoid(logit(x)); }
};

/// Full-batch gradient descent on mean BCE + (l2/2)|w|^2. Throws DataError
/// when the outcome column has a single class.
inline LogisticModel fit_logreg(const std::vector<std::vector<double>>& x,
                                std::span<const std::uint8_t> y, const LogRegConfig& cfg = {}) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("logreg: need one label per row");
  std::size_t pos = 0;
  for (auto v : y) pos += v != 0;
  if (pos == 0 || pos == y.size())
    throw DataError("logreg: training outcomes contain a single class");
  const std::size_t d = x.front().size();
  for (const auto& row : x)
    if (row.size() != d) throw std::invalid_argument("logreg: ragged feature rows");

  LogisticModel m;
  m.weights.assign(d, 0.0);
  const double base = static_cast<double>(pos) / static_cast<double>(y.size());
  m.bias = std::log(base / (1.0 - base));
  const double inv_n = 1.0 / static_cast<double>(x.size());
  std::vector<double> gw(d);
  for (int it = 0; it < cfg.max_iters; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = (m.predict(x[i]) - y[i]) * inv_n;
      gb += r;
      for (std::size_t j = 0; j < d; ++j) gw[j] += r * x[i][j];
    }
    double largest = std::abs(gb);
    for (std::size_t j = 0; j < d; ++j) {
      gw[j] += cfg.l2 * m.weights[j];
      largest = std::max(largest, std::abs(gw[j]));
      m.weights[j] -= cfg.rate * gw[j];
    }
    m.bias -= cfg.rate * gb;
    m.iterations = it + 1;
    if (largest < cfg.tolerance) break;
  }
  return m;
}

}  // namespace problist::model
