#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace problist {

using PatientId = std::int64_t;
using StayId = std::int64_t;
using AdmissionId = std::int64_t;
using TokenId = std::int32_t;

/// Bad input data (malformed tables, inconsistent records). CLI exit status 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or selector value. CLI exit status 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Warnings
//
// Library code reports recoverable conditions (short ICD stems, clamped k,
// all-zero weight vectors) through a process-wide sink. The default sink
// writes one JSON object per line to stderr.

using WarningSink = std::function<void(std::string_view code, std::string_view message)>;

namespace detail {
inline WarningSink& warning_sink() {
  static WarningSink sink = [](std::string_view code, std::string_view message) {
    std::string line = "{\"level\":\"warning\",\"code\":\"";
    line.append(code);
    line += "\",\"message\":\"";
    for (char c : message) {
      if (c == '"' || c == '\\') line += '\\';
      line += c;
    }
    line += "\"}\n";
    std::fputs(line.c_str(), stderr);
  };
  return sink;
}
}  // namespace detail

inline void warn(std::string_view code, std::string_view message) {
  if (detail::warning_sink()) detail::warning_sink()(code, message);
}

/// Installs `sink` for the lifetime of the guard and restores the previous one.
class ScopedWarningSink {
 public:
  explicit ScopedWarningSink(WarningSink sink) : previous_(std::move(detail::warning_sink())) {
    detail::warning_sink() = std::move(sink);
  }
  ~ScopedWarningSink() { detail::warning_sink() = std::move(previous_); }
  ScopedWarningSink(const ScopedWarningSink&) = delete;
  ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

 private:
  WarningSink previous_;
};

// ---------------------------------------------------------------------------
// Hashing

/// 64-bit FNV-1a. Stable across platforms; used for artifact fingerprints.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update(std::span<const double> values) {
    for (double v : values) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      for (int i = 0; i < 8; ++i) {
        state_ ^= (bits >> (8 * i)) & 0xffU;
        state_ *= 0x100000001b3ULL;
      }
    }
    return *this;
  }
  [[nodiscard]] std::uint64_t digest() const { return state_; }
  [[nodiscard]] std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a_hex(std::string_view bytes) { return Fnv1a{}.update(bytes).hex(); }

/// SplitMix64 finalizer; derives independent stream seeds from (seed, a, b).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

// ---------------------------------------------------------------------------
// Random numbers
//
// std::mt19937_64's output sequence is fixed by the standard, but the
// standard distributions are not, so every draw goes through the helpers
// below. This keeps generated corpora and trained weights identical across
// standard library implementations.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection sampled.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Timestamps

/// Seconds since the Unix epoch, UTC. MIMIC shifts dates into the far future,
/// which a 64-bit count represents without trouble.
struct Timestamp {
  std::int64_t seconds = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
  Timestamp operator+(std::int64_t s) const { return {seconds + s}; }
  Timestamp operator-(std::int64_t s) const { return {seconds - s}; }
};

inline constexpr std::int64_t kSecondsPerDay = 86400;

/// Parses "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" or the same with 'T'.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  auto digits = [&](std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return false;
      v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
  };
  int y, mo, d, h = 0, mi = 0, se = 0;
  if (!digits(0, 4, y) || s.size() < 10 || s[4] != '-' || !digits(5, 2, mo) || s[7] != '-' ||
      !digits(8, 2, d))
    return std::nullopt;
  if (s.size() > 10) {
    if ((s[10] != ' ' && s[10] != 'T') || !digits(11, 2, h) || s.size() < 16 || s[13] != ':' ||
        !digits(14, 2, mi))
      return std::nullopt;
    if (s.size() > 16) {
      if (s[16] != ':' || !digits(17, 2, se)) return std::nullopt;
      if (s.size() > 19) return std::nullopt;
    }
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || se > 59) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return Timestamp{static_cast<std::int64_t>(days) * kSecondsPerDay + h * 3600 + mi * 60 + se};
}

inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  std::int64_t days = t.seconds / kSecondsPerDay;
  std::int64_t rem = t.seconds % kSecondsPerDay;
  if (rem < 0) {
    rem += kSecondsPerDay;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                static_cast<int>(rem % 60));
  return buf;
}

}  // namespace problist
