#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "problist/common.hpp"
#include "problist/corpus/narrative.hpp"
#include "problist/corpus/vocab.hpp"
#include "problist/numerics/ops.hpp"
#include "problist/numerics/tensor.hpp"

namespace problist::embed {

struct CbowConfig {
  int dim = 100;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double rate = 0.025;
  double subsample = 1e-3;
  std::uint64_t seed = 1;
};

/// Vocabulary-aligned embedding rows. The pad row is all zeros; the unknown
/// row holds its random initialization.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(numerics::Tensor2 values) : values_(std::move(values)) {
    if (!values_.all_finite()) throw DataError("embedding matrix has non-finite entries");
  }

  [[nodiscard]] std::size_t rows() const { return values_.rows(); }
  [[nodiscard]] std::size_t dim() const { return values_.cols(); }
  [[nodiscard]] const numerics::Tensor2& values() const { return values_; }

  [[nodiscard]] std::span<const double> lookup(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= values_.rows())
      throw std::out_of_range("embedding lookup: token id " + std::to_string(id) + " out of range");
    return values_.row(static_cast<std::size_t>(id));
  }

 private:
  numerics::Tensor2 values_;
};

namespace detail {
inline void random_row(std::span<double> row, Rng& rng) {
  const double d = static_cast<double>(row.size());
  for (double& v : row) v = (rng.uniform() - 0.5) / d;
}
}  // namespace detail

/// Word2vec CBOW with negative sampling, single-threaded and deterministic
/// for a given seed. Tokens outside the vocabulary are dropped from the
/// training stream. Throws if any note belongs to a patient in `excluded`.
inline EmbeddingMatrix train_cbow(std::span<const corpus::NormalizedNote> notes,
                                  const corpus::Vocabulary& vocab, const CbowConfig& cfg,
                                  const std::set<PatientId>& excluded = {}) {
  if (cfg.dim <= 0) throw ConfigError("train_cbow: dim must be positive");
  if (cfg.window <= 0 || cfg.negatives < 0 || cfg.epochs <= 0 || cfg.rate <= 0)
    throw ConfigError("train_cbow: window, epochs and rate must be positive");
  const std::size_t dim = static_cast<std::size_t>(cfg.dim);
  const std::size_t v = vocab.size();

  std::vector<std::vector<TokenId>> sentences;
  std::vector<double> counts(v, 0.0);
  double total = 0.0;
  for (const auto& note : notes) {
    if (excluded.count(note.patient_id))
      throw DataError("train_cbow: note of held-out patient " + std::to_string(note.patient_id) +
                      " reached embedding training");
    std::vector<TokenId> ids;
    for (const auto& tok : note.tokens) {
      const TokenId id = vocab.id(tok);
      if (id == corpus::kUnkId || id == corpus::kPadId) continue;
      ids.push_back(id);
      counts[static_cast<std::size_t>(id)] += 1.0;
      total += 1.0;
    }
    if (!ids.empty()) sentences.push_back(std::move(ids));
  }
  if (total == 0.0) throw DataError("train_cbow: corpus has no in-vocabulary tokens");

  Rng rng(mix_seed(cfg.seed, 0xcb0));
  numerics::Tensor2 syn0(v, dim);
  numerics::Tensor2 syn1(v, dim);
  for (std::size_t r = 0; r < v; ++r) detail::random_row(syn0.row(r), rng);
  std::fill(syn0.row(corpus::kPadId).begin(), syn0.row(corpus::kPadId).end(), 0.0);

  // Negative-sampling distribution: unigram^0.75, sampled by inverse CDF.
  std::vector<double> cdf(v, 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    acc += std::pow(counts[i], 0.75);
    cdf[i] = acc;
  }
  auto sample_negative = [&] {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<TokenId>(std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), v - 1));
  };
  auto keep_prob = [&](TokenId id) {
    if (cfg.subsample <= 0) return 1.0;
    const double f = counts[static_cast<std::size_t>(id)];
    const double t = cfg.subsample * total;
    return (std::sqrt(f / t) + 1.0) * t / f;
  };

  const double work = static_cast<double>(cfg.epochs) * total;
  double processed = 0.0;
  std::vector<double> h(dim), err(dim);
  std::vector<TokenId> kept;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& sentence : sentences) {
      kept.clear();
      for (TokenId id : sentence)
        if (rng.uniform() < keep_prob(id)) kept.push_back(id);
      processed += static_cast<double>(sentence.size());
      const double lr = cfg.rate * std::max(1.0 - processed / (work + 1.0), 1e-4);
      for (std::size_t pos = 0; pos < kept.size(); ++pos) {
        const auto reach = static_cast<std::size_t>(cfg.window) - rng.below(static_cast<std::uint64_t>(cfg.window));
        const std::size_t lo = pos >= reach ? pos - reach : 0;
        const std::size_t hi = std::min(kept.size() - 1, pos + reach);
        std::fill(h.begin(), h.end(), 0.0);
        std::size_t ctx = 0;
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == pos) continue;
          numerics::axpy(1.0, syn0.row(static_cast<std::size_t>(kept[c])), h);
          ++ctx;
        }
        if (ctx == 0) continue;
        for (double& x : h) x /= static_cast<double>(ctx);
        std::fill(err.begin(), err.end(), 0.0);
        for (int d = 0; d <= cfg.negatives; ++d) {
          TokenId target = kept[pos];
          double label = 1.0;
          if (d > 0) {
            target = sample_negative();
            if (target == kept[pos]) continue;
            label = 0.0;
          }
          auto out = syn1.row(static_cast<std::size_t>(target));
          const double f = numerics::sigmoid(numerics::dot(h, out));
          const double g = (label - f) * lr;
          numerics::axpy(g, out, err);
          numerics::axpy(g, h, out);
        }
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == pos) continue;
          numerics::axpy(1.0, err, syn0.row(static_cast<std::size_t>(kept[c])));
        }
      }
    }
  }
  return EmbeddingMatrix(std::move(syn0));
}

/// word2vec text format: `vocab_size dim` then `token v1 ... v_dim` per line.
inline std::string to_word2vec_text(const EmbeddingMatrix& m, const corpus::Vocabulary& vocab) {
  std::string out = std::to_string(m.rows()) + " " + std::to_string(m.dim()) + "\n";
  char buf[40];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out += vocab.token(static_cast<TokenId>(r));
    for (double x : m.values().row(r)) {
      std::snprintf(buf, sizeof(buf), " %.17g", x);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

/// Reads word2vec text vectors into vocabulary order. Vocabulary tokens the
/// file does not cover get a seeded random row; the pad row is forced to zero.
inline EmbeddingMatrix from_word2vec_text(std::string_view text, const corpus::Vocabulary& vocab,
                                          std::uint64_t seed = 1) {
  std::istringstream in{std::string(text)};
  std::size_t n = 0, dim = 0;
  if (!(in >> n >> dim) || dim == 0) throw DataError("word2vec: bad header line");
  numerics::Tensor2 values(vocab.size(), dim);
  std::vector<bool> seen(vocab.size(), false);
  std::string token;
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> token)) throw DataError("word2vec: truncated file");
    for (auto& x : row)
      if (!(in >> x)) throw DataError("word2vec: truncated vector for '" + token + "'");
    if (!vocab.contains(token)) continue;
    const auto id = static_cast<std::size_t>(vocab.id(token));
    std::copy(row.begin(), row.end(), values.row(id).begin());
    seen[id] = true;
  }
  Rng rng(mix_seed(seed, 0x77));
  for (std::size_t r = 0; r < vocab.size(); ++r)
    if (!seen[r]) detail::random_row(values.row(r), rng);
  std::fill(values.row(corpus::kPadId).begin(), values.row(corpus::kPadId).end(), 0.0);
  return EmbeddingMatrix(std::move(values));
}

}  // namespace problist::embed
