#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "problist/common.hpp"
#include "problist/numerics/tensor.hpp"

namespace problist::numerics {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline constexpr double kBceEpsilon = 1e-7;

/// Binary cross-entropy on a probability, clamped to [eps, 1 - eps].
inline double bce(double prob, double label) {
  const double p = std::clamp(prob, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

/// Binary cross-entropy of sigmoid(logit), evaluated without forming the
/// probability. Its derivative with respect to the logit is sigmoid(logit) - label.
inline double bce_with_logits(double logit, double label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

/// Masked softmax. `mask[i] == true` marks position i as excluded; excluded
/// positions come out exactly 0. An empty mask means nothing is excluded.
inline std::vector<double> softmax(std::span<const double> v, std::span<const bool> mask = {}) {
  if (!mask.empty() && mask.size() != v.size())
    throw std::invalid_argument("softmax: mask length mismatch");
  auto masked = [&](std::size_t i) { return !mask.empty() && mask[i]; };
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!masked(i)) {
      mx = std::max(mx, v[i]);
      any = true;
    }
  if (!any) throw std::invalid_argument("softmax: every position is masked");
  std::vector<double> out(v.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!masked(i)) {
      out[i] = std::exp(v[i] - mx);
      z += out[i];
    }
  for (double& o : out) o /= z;
  return out;
}

/// Inverted dropout. Each entry is 0 with probability p, otherwise 1/(1-p);
/// multiply activations by the mask in training mode, skip it in evaluation.
inline std::vector<double> dropout_mask(std::size_t n, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  std::vector<double> mask(n, 1.0);
  if (p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

inline void apply_mask(std::span<double> values, std::span<const double> mask) {
  if (mask.empty()) return;
  assert(values.size() == mask.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] *= mask[i];
}

enum class Activation { tanh, linear };

/// Width-k convolution over a sequence of N positions (rows of `x`, each of
/// dimension d_e) with stride 1. Output row t applies the filter to the k-gram
/// starting at t; positions past the end read zeros, so the output has exactly
/// N rows.
///
/// `weights` is d_f x (k * d_e): column j * d_e + c multiplies x(t + j, c).
inline Tensor2 conv1d_same(const Tensor2& x, const Tensor2& weights, std::span<const double> bias,
                           int width, Activation act = Activation::tanh) {
  if (width <= 0) throw std::invalid_argument("conv1d_same: filter width must be positive");
  const std::size_t n = x.rows(), de = x.cols(), df = weights.rows();
  if (n == 0) throw std::invalid_argument("conv1d_same: empty input");
  if (weights.cols() != static_cast<std::size_t>(width) * de || bias.size() != df)
    throw std::invalid_argument("conv1d_same: weight/bias shape mismatch");
  Tensor2 out(n, df);
  for (std::size_t t = 0; t < n; ++t) {
    auto o = out.row(t);
    for (std::size_t f = 0; f < df; ++f) {
      const auto w = weights.row(f);
      double z = bias[f];
      for (int j = 0; j < width && t + j < n; ++j)
        z += dot(w.subspan(static_cast<std::size_t>(j) * de, de), x.row(t + j));
      o[f] = act == Activation::tanh ? std::tanh(z) : z;
    }
  }
  return out;
}

/// Backward pass of conv1d_same. `out` is the forward output and `grad_out`
/// the gradient with respect to it; gradients are accumulated (+=) into
/// grad_weights, grad_bias and, when non-null, grad_x.
inline void conv1d_same_backward(const Tensor2& x, const Tensor2& weights, int width,
                                 const Tensor2& out, const Tensor2& grad_out,
                                 Tensor2& grad_weights, std::span<double> grad_bias,
                                 Tensor2* grad_x, Activation act = Activation::tanh) {
  const std::size_t n = x.rows(), de = x.cols(), df = weights.rows();
  std::vector<double> gz(df);
  for (std::size_t t = 0; t < n; ++t) {
    const auto h = out.row(t);
    const auto gh = grad_out.row(t);
    for (std::size_t f = 0; f < df; ++f)
      gz[f] = act == Activation::tanh ? gh[f] * (1.0 - h[f] * h[f]) : gh[f];
    for (std::size_t f = 0; f < df; ++f) {
      if (gz[f] == 0.0) continue;
      grad_bias[f] += gz[f];
      auto gw = grad_weights.row(f);
      const auto w = weights.row(f);
      for (int j = 0; j < width && t + j < n; ++j) {
        const std::size_t off = static_cast<std::size_t>(j) * de;
        axpy(gz[f], x.row(t + j), gw.subspan(off, de));
        if (grad_x) axpy(gz[f], w.subspan(off, de), grad_x->row(t + j));
      }
    }
  }
}

}  // namespace problist::numerics
