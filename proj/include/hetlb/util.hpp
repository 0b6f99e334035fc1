#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetlb {

// Dense row-major matrix of doubles. Small (H x M style) unless noted.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix();
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols_)
        throw std::invalid_argument("Matrix::from_rows: ragged rows");
      for (std::size_t c = 0; c < m.cols_; ++c) m(r, c) = rows[r][c];
    }
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  const std::vector<double>& flat() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// Seeded random stream. All draws go through canonical 53-bit uniforms so
// results do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double exponential(double rate) {
    // rate > 0; -log1p(-u) avoids log(0)
    return -std::log1p(-uniform()) / rate;
  }

  // Uniform integer in [0, n), n >= 1. Rejection keeps it unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: n == 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Index sampled proportionally to nonnegative weights (sum > 0).
  std::size_t discrete(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("Rng::discrete: zero total weight");
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    // Rounding can push u past the last positive weight.
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return i;
    return weights.size() - 1;
  }

 private:
  std::mt19937_64 eng_;
};

// Set of integer ids with O(1) insert/erase/uniform-sample.
class IndexedSet {
 public:
  IndexedSet() = default;
  explicit IndexedSet(std::size_t universe) : pos_(universe, -1) {}

  void resize_universe(std::size_t universe) { pos_.assign(universe, -1); items_.clear(); }

  bool contains(int id) const { return pos_[id] >= 0; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  void insert(int id) {
    if (pos_[id] >= 0) return;
    pos_[id] = static_cast<int>(items_.size());
    items_.push_back(id);
  }

  void erase(int id) {
    int p = pos_[id];
    if (p < 0) return;
    int last = items_.back();
    items_[p] = last;
    pos_[last] = p;
    items_.pop_back();
    pos_[id] = -1;
  }

  int sample(Rng& rng) const {
    if (items_.empty()) throw std::logic_error("IndexedSet::sample: empty");
    return items_[rng.uniform_int(items_.size())];
  }

  const std::vector<int>& items() const { return items_; }

 private:
  std::vector<int> items_;
  std::vector<int> pos_;
};

inline bool nearly_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace hetlb
