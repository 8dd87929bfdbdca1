#pragma once

// Small synthetic folds shared by the slower test suites.

#include "problist/pipeline.hpp"
#include "problist/synth.hpp"

namespace problist::fixtures {

/// A few hundred short stays with four planted problems.
inline synth::GenSpec small_spec(std::uint64_t seed = 3) {
  synth::GenSpec g;
  g.seed = seed;
  g.n_patients = 240;
  g.vocab_size = 80;
  g.num_problems = 4;
  g.procedure_fraction = 0.25;
  g.prevalence_min = 0.25;
  g.prevalence_max = 0.4;
  g.risk_problems = 2;
  g.risk_prevalence = 0.3;
  g.risk_weight = 3.0;
  g.target_rate = 0.3;
  g.rare_codes = 2;
  return g;
}

/// Run config sized for unit tests: short narratives, tiny network.
inline pipeline::RunConfig small_run_config() {
  pipeline::RunConfig c;
  c.problems = "R-ICD";
  c.folds = 5;
  c.min_docs = 3;
  c.min_code_count = 20;
  c.narrative_length = 128;
  c.cbow.dim = 8;
  c.cbow.epochs = 2;
  c.filters = 4;
  c.train.max_epochs = 3;
  c.train.patience = 3;
  c.train.batch_size = 16;
  return c;
}

inline pipeline::FoldData small_fold(std::uint64_t seed = 3, const pipeline::RunConfig& cfg = small_run_config()) {
  const auto corpus = synth::generate(small_spec(seed));
  return pipeline::prepare_fold(corpus.tables, corpus.phecodes, cfg);
}

}  // namespace problist::fixtures
