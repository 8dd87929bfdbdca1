#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "problist/common.hpp"

namespace problist::numerics {

/// Dense row-major matrix of doubles.
///
/// Sequence data is stored one position per row (N x d), the transpose of the
/// column-per-position notation usually used for text convolutions, so that
/// the feature vector of a single position is contiguous.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("Tensor2: data size mismatch");
  }
  Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw std::invalid_argument("Tensor2: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  [[nodiscard]] std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] bool same_shape(const Tensor2& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  [[nodiscard]] bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  // Four independent partial sums in a fixed order: vectorizes without
  // relaxing floating-point semantics, and stays deterministic.
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

/// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

/// Named, ordered collection of parameter tensors. Gradient buffers use the
/// same layout so that optimizers can walk both in lockstep.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor2 value;
  };

  Tensor2& add(std::string name, Tensor2 value) {
    for (const auto& e : entries_)
      if (e.name == name) throw std::invalid_argument("ParamSet: duplicate group " + name);
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.back().value;
  }

  [[nodiscard]] bool contains(std::string_view name) const {
    for (const auto& e : entries_)
      if (e.name == name) return true;
    return false;
  }

  Tensor2& operator[](std::string_view name) { return find(name); }
  const Tensor2& operator[](std::string_view name) const {
    return const_cast<ParamSet*>(this)->find(name);
  }

  [[nodiscard]] std::size_t group_count() const { return entries_.size(); }
  [[nodiscard]] std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }
  std::vector<Entry>& entries() { return entries_; }
  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }

  /// Same group names and shapes, zero-filled.
  [[nodiscard]] ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, Tensor2(e.value.rows(), e.value.cols()));
    return out;
  }

  void set_zero() {
    for (auto& e : entries_) e.value.fill(0.0);
  }

  void scale(double a) {
    for (auto& e : entries_)
      for (double& v : e.value.values()) v *= a;
  }

  /// this += a * other (layouts must match).
  void add_scaled(const ParamSet& other, double a) {
    check_layout(other);
    for (std::size_t g = 0; g < entries_.size(); ++g)
      axpy(a, other.entries_[g].value.values(), entries_[g].value.values());
  }

  void check_layout(const ParamSet& other) const {
    if (other.entries_.size() != entries_.size())
      throw std::invalid_argument("ParamSet: group count mismatch");
    for (std::size_t g = 0; g < entries_.size(); ++g)
      if (entries_[g].name != other.entries_[g].name ||
          !entries_[g].value.same_shape(other.entries_[g].value))
        throw std::invalid_argument("ParamSet: layout mismatch at " + entries_[g].name);
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& e : entries_)
      if (!e.value.all_finite()) return false;
    return true;
  }

  /// Bit-level fingerprint of the selected groups (all groups if empty).
  [[nodiscard]] std::string fingerprint(std::span<const std::string> groups = {}) const {
    Fnv1a h;
    for (const auto& e : entries_) {
      if (!groups.empty() && std::find(groups.begin(), groups.end(), e.name) == groups.end())
        continue;
      h.update(e.name);
      h.update(e.value.values());
    }
    return h.hex();
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t g = 0; g < a.entries_.size(); ++g)
      if (a.entries_[g].name != b.entries_[g].name || !(a.entries_[g].value == b.entries_[g].value))
        return false;
    return true;
  }

 private:
  Tensor2& find(std::string_view name) {
    for (auto& e : entries_)
      if (e.name == name) return e.value;
    throw std::out_of_range("ParamSet: no group named " + std::string(name));
  }

  std::vector<Entry> entries_;
};

}  // namespace problist::numerics
