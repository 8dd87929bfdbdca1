#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "problist/common.hpp"

namespace problist::train {

/// Indices into a patient-keyed dataset for one cross-validation fold.
struct FoldSplit {
  int fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded assignment of each distinct patient to one of k folds (round robin
/// over a shuffled patient list, so fold sizes differ by at most one).
inline std::map<PatientId, int> assign_patient_folds(std::span<const PatientId> patients, int k,
                                                     std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross-validation needs at least 2 folds");
  std::set<PatientId> distinct(patients.begin(), patients.end());
  if (distinct.size() < static_cast<std::size_t>(k))
    throw DataError("cross-validation: " + std::to_string(distinct.size()) +
                    " patients cannot fill " + std::to_string(k) + " folds");
  std::vector<PatientId> order(distinct.begin(), distinct.end());
  Rng rng(mix_seed(seed, 0xf01d));
  rng.shuffle(order);
  std::map<PatientId, int> out;
  for (std::size_t i = 0; i < order.size(); ++i) out[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return out;
}

/// Fold `fold` is the test set; the remaining patients are split into
/// training and validation at `val_parts`:1 by patient (8:1 with five folds
/// gives 80/10/10). `patient_of[i]` is the patient of dataset row i.
inline FoldSplit make_split(std::span<const PatientId> patient_of, int k, int fold, std::uint64_t seed,
                            int val_parts = 8) {
  if (fold < 0 || fold >= k) throw ConfigError("fold index " + std::to_string(fold) + " outside [0, k)");
  const auto folds = assign_patient_folds(patient_of, k, seed);
  std::vector<PatientId> rest;
  for (const auto& [p, f] : folds)
    if (f != fold) rest.push_back(p);
  Rng rng(mix_seed(seed, 0x7a1, static_cast<std::uint64_t>(fold)));
  rng.shuffle(rest);
  const std::size_t n_val = std::max<std::size_t>(1, rest.size() / static_cast<std::size_t>(val_parts + 1));
  std::set<PatientId> val(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));

  FoldSplit s;
  s.fold = fold;
  for (std::size_t i = 0; i < patient_of.size(); ++i) {
    if (folds.at(patient_of[i]) == fold)
      s.test.push_back(i);
    else if (val.count(patient_of[i]))
      s.val.push_back(i);
    else
      s.train.push_back(i);
  }
  return s;
}

}  // namespace problist::train
