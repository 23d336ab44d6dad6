// Dense row-major matrices, entrywise norms and seeded random streams.
#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace attnlab {

/// Thrown for contract violations: shape mismatches, bad parameters, schema errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;

inline std::string shape_str(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

/// Dense matrix of finite doubles, row-major.
class Mat {
public:
  Mat() = default;

  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw Error("Mat: dimensions must be positive, got " + shape_str(rows, cols));
    if (!std::isfinite(fill)) throw Error("Mat: non-finite fill value");
  }

  Mat(std::size_t rows, std::size_t cols, Vec data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) throw Error("Mat: dimensions must be positive, got " + shape_str(rows, cols));
    if (data_.size() != rows * cols)
      throw Error("Mat: " + std::to_string(data_.size()) + " entries cannot fill " + shape_str(rows, cols));
    check_finite("Mat");
  }

  Mat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    if (rows_ == 0 || cols_ == 0) throw Error("Mat: empty initializer");
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw Error("Mat: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
    check_finite("Mat");
  }

  static Mat zeros(std::size_t rows, std::size_t cols) { return Mat(rows, cols, 0.0); }
  static Mat ones(std::size_t rows, std::size_t cols) { return Mat(rows, cols, 1.0); }
  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  /// 1_n y^T: every row equals y.
  static Mat broadcast_row(std::size_t rows, std::span<const double> y) {
    Mat m(rows, y.size());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < y.size(); ++j) m(i, j) = y[j];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }

  std::string shape() const { return shape_str(rows_, cols_); }

  Mat transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  void check_finite(std::string_view where) const {
    for (std::size_t k = 0; k < data_.size(); ++k) {
      if (!std::isfinite(data_[k])) {
        std::ostringstream os;
        os << where << ": non-finite entry at (" << k / cols_ << "," << k % cols_ << ")";
        throw Error(os.str());
      }
    }
  }

  Mat& operator+=(const Mat& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    check_finite("operator+=");
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    require_same_shape(o, "operator-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    check_finite("operator-=");
    return *this;
  }
  Mat& operator*=(double c) {
    for (auto& v : data_) v *= c;
    check_finite("operator*=");
    return *this;
  }

  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(Mat a, double c) { return a *= c; }
  friend Mat operator*(double c, Mat a) { return a *= c; }

  friend bool operator==(const Mat& a, const Mat& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

private:
  void require_same_shape(const Mat& o, std::string_view op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw Error(std::string(op) + ": shape mismatch " + shape() + " vs " + o.shape());
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

/// Matrix product with ascending inner-index summation, so results are bit-reproducible.
inline Mat mat_mul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw Error("mat_mul: cannot multiply " + a.shape() + " by " + b.shape());
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  c.check_finite("mat_mul");
  return c;
}

/// max_{j,l} |A_{j,l}|
inline double norm_inf(std::span<const double> v) noexcept {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}
inline double norm_inf(const Mat& a) noexcept { return norm_inf(a.data()); }

/// sum_{j,l} |A_{j,l}|
inline double norm_l1(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}
inline double norm_l1(const Mat& a) noexcept { return norm_l1(a.data()); }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}
inline double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error("max_abs_diff: shape mismatch " + a.shape() + " vs " + b.shape());
  return max_abs_diff(a.data(), b.data());
}

/// Shortest decimal string that parses back to exactly v.
inline std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// SplitMix64 finalizer; used to turn (root_seed, stream_index) into a generator seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent random stream for one (root_seed, stream_index) pair.
///
/// The engine is std::mt19937_64 seeded with
///   splitmix64(root_seed ^ splitmix64(stream_index)).
/// Reals are built from the top 53 bits of each draw, so the value sequence does
/// not depend on the standard library's distribution implementations.
class RngStream {
public:
  static constexpr std::string_view algorithm = "mt19937_64+splitmix64";

  RngStream(std::uint64_t root_seed, std::uint64_t stream_index)
      : root_seed_(root_seed), stream_index_(stream_index),
        engine_(splitmix64(root_seed ^ splitmix64(stream_index))) {}

  std::uint64_t root_seed() const noexcept { return root_seed_; }
  std::uint64_t stream_index() const noexcept { return stream_index_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform in [-scale, scale]; exactly scale * (2u - 1) so streams are scale-paired.
  double symmetric(double scale) { return scale * (2.0 * uniform01() - 1.0); }

  /// Uniform integer in [lo, hi].
  std::size_t uniform_int(std::size_t lo, std::size_t hi) {
    if (hi < lo) throw Error("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::size_t>(next_u64() % span);
  }

private:
  std::uint64_t root_seed_;
  std::uint64_t stream_index_;
  std::mt19937_64 engine_;
};

/// Entries drawn uniformly from [-scale, scale].
inline Mat sample_uniform_matrix(std::size_t rows, std::size_t cols, double scale, RngStream& rng) {
  if (!std::isfinite(scale) || scale < 0.0) throw Error("sample_uniform_matrix: scale must be finite and >= 0");
  Mat m(rows, cols);
  for (auto& v : m.data()) v = rng.symmetric(scale);
  return m;
}

inline Vec sample_uniform_vector(std::size_t n, double scale, RngStream& rng) {
  if (!std::isfinite(scale) || scale < 0.0) throw Error("sample_uniform_vector: scale must be finite and >= 0");
  Vec v(n);
  for (auto& x : v) x = rng.symmetric(scale);
  return v;
}

}  // namespace attnlab
