#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "problist/common.hpp"
#include "problist/corpus/cohort.hpp"
#include "problist/corpus/tables.hpp"
#include "problist/corpus/text.hpp"
#include "problist/corpus/vocab.hpp"

namespace problist::corpus {

inline constexpr std::size_t kNarrativeLength = 8000;

/// A note after normalization, with the provenance needed downstream.
struct NormalizedNote {
  PatientId patient_id = 0;
  AdmissionId admission_id = 0;
  Timestamp chart_time;
  std::vector<std::string> tokens;
};

inline std::vector<NormalizedNote> normalize_notes(const RawTables& tables,
                                                   const TextNormalizer& normalizer = TextNormalizer{}) {
  std::vector<NormalizedNote> out;
  out.reserve(tables.notes.size());
  for (const auto& n : tables.notes)
    out.push_back({n.patient_id, n.admission_id, n.chart_time, normalizer(n.text)});
  return out;
}

/// Fixed-length token sequence for one stay.
///
/// Only the real tokens are stored; positions in [true_length(), size()) are
/// implicitly the pad id and masked. `surface` keeps the normalized spelling
/// of each real token (including those mapped to the unknown id) so spans can
/// be rendered verbatim.
class Narrative {
 public:
  Narrative() = default;
  Narrative(StayId stay, std::vector<TokenId> ids, std::vector<std::string> surface,
            std::size_t capacity)
      : stay_id_(stay), ids_(std::move(ids)), surface_(std::move(surface)), capacity_(capacity) {
    if (ids_.size() > capacity_ || surface_.size() != ids_.size())
      throw std::invalid_argument("Narrative: inconsistent lengths");
  }

  [[nodiscard]] StayId stay_id() const { return stay_id_; }
  /// Fixed length N (8000 by default).
  [[nodiscard]] std::size_t size() const { return capacity_; }
  [[nodiscard]] std::size_t true_length() const { return ids_.size(); }
  [[nodiscard]] std::span<const TokenId> tokens() const { return ids_; }
  [[nodiscard]] const std::vector<std::string>& surface() const { return surface_; }

  [[nodiscard]] TokenId operator[](std::size_t i) const { return i < ids_.size() ? ids_[i] : kPadId; }
  [[nodiscard]] bool is_pad(std::size_t i) const { return i >= ids_.size(); }

  [[nodiscard]] std::vector<TokenId> padded_ids() const {
    std::vector<TokenId> out(capacity_, kPadId);
    std::copy(ids_.begin(), ids_.end(), out.begin());
    return out;
  }
  [[nodiscard]] std::vector<bool> pad_mask() const {
    std::vector<bool> m(capacity_, true);
    std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(ids_.size()), false);
    return m;
  }

  /// Normalized tokens joined by single spaces.
  [[nodiscard]] std::string text() const { return join_tokens(surface_, 0, surface_.size()); }

 private:
  StayId stay_id_ = 0;
  std::vector<TokenId> ids_;
  std::vector<std::string> surface_;
  std::size_t capacity_ = kNarrativeLength;
};

/// Concatenates the record's notes in chart order and maps tokens to ids.
/// Longer narratives keep their most recent `length` tokens.
inline Narrative assemble_narrative(const CohortRecord& record,
                                    std::span<const NormalizedNote> notes, const Vocabulary& vocab,
                                    std::size_t length = kNarrativeLength) {
  if (length == 0) throw ConfigError("assemble_narrative: length must be positive");
  std::vector<std::size_t> refs = record.note_refs;
  for (auto r : refs)
    if (r >= notes.size()) throw DataError("assemble_narrative: note reference out of range");
  std::stable_sort(refs.begin(), refs.end(), [&](std::size_t a, std::size_t b) {
    return notes[a].chart_time < notes[b].chart_time;
  });
  std::size_t total = 0;
  for (auto r : refs) total += notes[r].tokens.size();
  if (total == 0)
    throw DataError("assemble_narrative: stay " + std::to_string(record.stay_id) +
                    " has no usable note text");
  const std::size_t skip = total > length ? total - length : 0;
  std::vector<TokenId> ids;
  std::vector<std::string> surface;
  ids.reserve(std::min(total, length));
  surface.reserve(std::min(total, length));
  std::size_t pos = 0;
  for (auto r : refs)
    for (const auto& tok : notes[r].tokens) {
      if (pos++ < skip) continue;
      ids.push_back(vocab.id(tok));
      surface.push_back(tok);
    }
  return Narrative(record.stay_id, std::move(ids), std::move(surface), length);
}

}  // namespace problist::corpus
