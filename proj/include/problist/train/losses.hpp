#pragma once

#include <span>
#include <stdexcept>

#include "problist/numerics/ops.hpp"

namespace problist::train {

/// L_p for one instance: sum over labels of the clamped BCE.
inline double loss_problem(std::span<const double> probabilities, std::span<const std::uint8_t> labels) {
  if (probabilities.size() != labels.size())
    throw std::invalid_argument("loss_problem: prediction and label lengths differ");
  double total = 0.0;
  for (std::size_t l = 0; l < labels.size(); ++l)
    total += numerics::bce(probabilities[l], labels[l] ? 1.0 : 0.0);
  return total;
}

/// Batch L_p: mean over instances of the per-instance sum.
inline double loss_problem_batch(std::span<const std::vector<double>> probabilities,
                                 std::span<const std::vector<std::uint8_t>> labels) {
  if (probabilities.size() != labels.size() || probabilities.empty())
    throw std::invalid_argument("loss_problem_batch: need one label vector per instance");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += loss_problem(probabilities[i], labels[i]);
  return total / static_cast<double>(labels.size());
}

inline double loss_outcome(double probability, bool label) {
  return numerics::bce(probability, label ? 1.0 : 0.0);
}

/// The outcome gate: open once validation extraction micro AU-ROC reaches the
/// threshold (inclusive).
inline bool gate_open(double val_p, double threshold_p) { return val_p >= threshold_p; }

/// L = L_p + L_o while the gate is open, L_p alone otherwise.
inline double gated_loss(double loss_p, double loss_o, double val_p, double threshold_p) {
  return gate_open(val_p, threshold_p) ? loss_p + loss_o : loss_p;
}

}  // namespace problist::train
