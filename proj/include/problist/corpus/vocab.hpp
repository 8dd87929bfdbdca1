#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "problist/common.hpp"
#include "problist/corpus/text.hpp"

namespace problist::corpus {

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kNumId = 2;
inline constexpr TokenId kDeidId = 3;
inline constexpr TokenId kFirstRegularId = 4;

/// Token <-> id map with document frequencies. Ids 0..3 are the reserved
/// pad / unk / num / de-id tokens; regular tokens follow in order of
/// descending document frequency, ties broken lexicographically.
class Vocabulary {
 public:
  Vocabulary() {
    for (auto t : {kPadToken, kUnkToken, kNumToken, kDeidToken}) push(std::string(t), 0);
  }

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] std::size_t doc_freq(TokenId id) const { return doc_freq_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

  /// Id of `token`, or the unknown-token id.
  [[nodiscard]] TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnkId : it->second;
  }

  /// `token<TAB>id<TAB>doc_freq` per line, in id order.
  [[nodiscard]] std::string to_tsv() const {
    std::string out;
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      out += tokens_[i] + '\t' + std::to_string(i) + '\t' + std::to_string(doc_freq_[i]) + '\n';
    return out;
  }

  static Vocabulary from_tsv(std::string_view text) {
    Vocabulary v;
    v.tokens_.clear();
    v.doc_freq_.clear();
    v.index_.clear();
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = line.find('\t', t1 + 1);
      if (t1 == std::string::npos || t2 == std::string::npos)
        throw DataError("vocabulary: malformed line '" + line + "'");
      const auto id = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
      if (id != static_cast<long long>(v.tokens_.size()))
        throw DataError("vocabulary: ids must be contiguous from 0");
      v.push(line.substr(0, t1), std::stoull(line.substr(t2 + 1)));
    }
    if (v.tokens_.size() < static_cast<std::size_t>(kFirstRegularId) || v.tokens_[0] != kPadToken ||
        v.tokens_[1] != kUnkToken || v.tokens_[2] != kNumToken || v.tokens_[3] != kDeidToken)
      throw DataError("vocabulary: reserved tokens missing or out of place");
    return v;
  }

  [[nodiscard]] std::string hash() const { return fnv1a_hex(to_tsv()); }

  friend Vocabulary build_vocab(std::span<const std::vector<std::string>> notes, std::size_t min_docs);

 private:
  void push(std::string token, std::size_t df) {
    index_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(token));
    doc_freq_.push_back(df);
  }

  std::vector<std::string> tokens_;
  std::vector<std::size_t> doc_freq_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Keeps every token that occurs in at least `min_docs` notes (document
/// frequency, not raw count). Reserved tokens are always present.
inline Vocabulary build_vocab(std::span<const std::vector<std::string>> notes,
                              std::size_t min_docs = 5) {
  if (min_docs < 1) throw ConfigError("build_vocab: min_docs must be >= 1");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& note : notes) {
    std::set<std::string_view> seen(note.begin(), note.end());
    for (auto t : seen) ++df[std::string(t)];
  }
  Vocabulary v;
  for (TokenId r = 0; r < kFirstRegularId; ++r) {
    auto it = df.find(v.tokens_[static_cast<std::size_t>(r)]);
    if (it != df.end()) v.doc_freq_[static_cast<std::size_t>(r)] = it->second;
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : df)
    if (n >= min_docs && !v.contains(tok)) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (auto& [tok, n] : kept) v.push(std::move(tok), n);
  return v;
}

}  // namespace problist::corpus
