#pragma once

#include <cctype>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace problist::corpus {

// Reserved token spellings (U+27E8 / U+27E9 angle brackets).
inline constexpr std::string_view kPadToken = "\xE2\x9F\xA8pad\xE2\x9F\xA9";
inline constexpr std::string_view kUnkToken = "\xE2\x9F\xA8unk\xE2\x9F\xA9";
inline constexpr std::string_view kNumToken = "\xE2\x9F\xA8num\xE2\x9F\xA9";
inline constexpr std::string_view kDeidToken = "\xE2\x9F\xA8" "deid\xE2\x9F\xA9";

/// Lowercases, maps typographic quotes and dashes to ASCII, replaces
/// de-identification spans with the de-id token and digit runs with the
/// number token, splits punctuation into standalone tokens (collapsing runs
/// of the same mark) and splits on whitespace.
///
/// The default de-id pattern is MIMIC's `[** ... **]`; other exports can pass
/// an ECMAScript regex instead.
class TextNormalizer {
 public:
  TextNormalizer() = default;
  explicit TextNormalizer(const std::string& deid_regex) : deid_(std::regex(deid_regex)) {}

  [[nodiscard]] std::vector<std::string> operator()(std::string_view raw) const {
    std::string text = deid_ ? replace_regex(raw) : replace_mimic_deid(raw);
    return tokenize(ascii_fold(text));
  }

 private:
  // The de-id token survives tokenization as an opaque marker byte.
  static constexpr char kDeidMarker = '\x01';

  static std::string replace_mimic_deid(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
      if (s.compare(i, 3, "[**") == 0) {
        const auto close = s.find("**]", i + 3);
        if (close != std::string_view::npos) {
          out += ' ';
          out += kDeidMarker;
          out += ' ';
          i = close + 3;
          continue;
        }
      }
      out += s[i++];
    }
    return out;
  }

  [[nodiscard]] std::string replace_regex(std::string_view s) const {
    const std::string marker{' ', kDeidMarker, ' '};
    return std::regex_replace(std::string(s), *deid_, marker);
  }

  // Typographic punctuation (UTF-8) to ASCII.
  static std::string ascii_fold(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto c = static_cast<unsigned char>(s[i]);
      if (c == 0xE2 && i + 2 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0x80) {
        const auto d = static_cast<unsigned char>(s[i + 2]);
        char repl = 0;
        if (d == 0x98 || d == 0x99) repl = '\'';
        else if (d == 0x9C || d == 0x9D) repl = '"';
        else if (d >= 0x90 && d <= 0x95) repl = '-';
        else if (d == 0xA6) repl = '.';  // ellipsis
        if (repl) {
          out += repl;
          i += 2;
          continue;
        }
      }
      out += static_cast<char>(std::tolower(c));
    }
    return out;
  }

  static bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
  static bool is_digit(char c) { return c >= '0' && c <= '9'; }
  static bool is_punct(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::ispunct(u) != 0;
  }

  static std::vector<std::string> tokenize(const std::string& s) {
    static constexpr std::string_view kReserved[] = {kPadToken, kUnkToken, kNumToken, kDeidToken};
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
      if (!word.empty()) out.push_back(std::move(word));
      word.clear();
    };
    std::size_t i = 0;
    while (i < s.size()) {
      const char c = s[i];
      if (c == kDeidMarker) {
        flush();
        out.emplace_back(kDeidToken);
        ++i;
      } else if (is_space(c)) {
        flush();
        ++i;
      } else if (is_digit(c)) {
        flush();
        while (i < s.size() && is_digit(s[i])) ++i;
        out.emplace_back(kNumToken);
      } else if (is_punct(c)) {
        flush();
        while (i < s.size() && s[i] == c) ++i;
        out.emplace_back(1, c);
      } else {
        // Already-normalized reserved tokens pass through unchanged.
        bool matched = false;
        if (static_cast<unsigned char>(c) == 0xE2) {
          for (auto r : kReserved)
            if (std::string_view(s).substr(i, r.size()) == r) {
              flush();
              out.emplace_back(r);
              i += r.size();
              matched = true;
              break;
            }
        }
        if (!matched) word += s[i++];
      }
    }
    flush();
    return out;
  }

  std::optional<std::regex> deid_;
};

inline std::vector<std::string> normalize_text(std::string_view raw) {
  static const TextNormalizer normalizer;
  return normalizer(raw);
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin,
                               std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end && i < tokens.size(); ++i) {
    if (i > begin) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace problist::corpus
