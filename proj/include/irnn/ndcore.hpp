#pragma once

// Dense 64-bit linear algebra and the seeded generator every other module
// draws from. Row-major storage; the only product in the hot loop is a
// matrix-vector product.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace irnn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t len() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
      throw ShapeError("Matrix: dimensions must be positive, got " + std::to_string(rows) +
                       "x" + std::to_string(cols));
    }
    data_.assign(rows * cols, fill);
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows)
      : Matrix(rows.size(), rows.size() == 0 ? 0 : rows.begin()->size()) {
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != cols_) throw ShapeError("Matrix: ragged initializer");
      std::copy(row.begin(), row.end(), data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
      ++i;
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

/// Seedable generator: std::mt19937_64 underneath, Box-Muller for normals.
/// Streams are reproducible for a fixed seed within one build of this library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 == 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer; derives independent stream seeds from one run seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Products and constructors

/// Dot product with four interleaved partial sums, combined as
/// (s0 + s1) + (s2 + s3). The order is fixed, so results are deterministic.
inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

inline Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != v.len()) {
    throw ShapeError("matvec: matrix " + m.shape_string() + " incompatible with vector of length " +
                     std::to_string(v.len()));
  }
  Vector out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out[i] = dot(m.row(i), v.values());
  }
  return out;
}

/// mᵀ·v without materializing the transpose.
inline Vector matvec_transposed(const Matrix& m, const Vector& v) {
  if (m.rows() != v.len()) {
    throw ShapeError("matvec_transposed: matrix " + m.shape_string() +
                     " incompatible with vector of length " + std::to_string(v.len()));
  }
  Vector out(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j] * vi;
  }
  return out;
}

inline Matrix identity(std::size_t n) {
  if (n == 0) throw ShapeError("identity: n must be positive");
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

inline Matrix scaled_identity(std::size_t n, double s) {
  if (n == 0) throw ShapeError("scaled_identity: n must be positive");
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = s;
  return m;
}

inline Matrix gaussian_fill(std::size_t rows, std::size_t cols, double mean, double std, Rng& rng) {
  if (!(std >= 0.0)) throw std::invalid_argument("gaussian_fill: std must be nonnegative");
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.normal(mean, std);
  return m;
}

inline Vector gaussian_vector(std::size_t len, double mean, double std, Rng& rng) {
  if (!(std >= 0.0)) throw std::invalid_argument("gaussian_vector: std must be nonnegative");
  Vector v(len);
  for (double& x : v) x = rng.normal(mean, std);
  return v;
}

// ---------------------------------------------------------------------------
// Norms

inline double sum_of_squares(std::span<const double> xs) noexcept {
  double acc = 0.0;
  for (double x : xs) acc += x * x;
  return acc;
}

/// Joint L2 norm over every element of every block.
inline double l2_norm(std::span<const std::span<const double>> blocks) noexcept {
  double acc = 0.0;
  for (auto block : blocks) acc += sum_of_squares(block);
  return std::sqrt(acc);
}

inline double l2_norm(std::initializer_list<std::span<const double>> blocks) noexcept {
  return l2_norm(std::span<const std::span<const double>>(blocks.begin(), blocks.size()));
}

inline double l2_norm(const Vector& v) noexcept { return std::sqrt(sum_of_squares(v.values())); }
inline double l2_norm(const Matrix& m) noexcept { return std::sqrt(sum_of_squares(m.values())); }

// ---------------------------------------------------------------------------
// Elementwise helpers

namespace detail {

inline void require_same_len(const Vector& a, const Vector& b, const char* op) {
  if (a.len() != b.len()) {
    throw ShapeError(std::string(op) + ": vector lengths " + std::to_string(a.len()) + " and " +
                     std::to_string(b.len()) + " differ");
  }
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + a.shape_string() + " and " +
                     b.shape_string() + " differ");
  }
}

template <class T, class F>
T zip_with(const T& a, const T& b, F f) {
  T out = a;
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = f(dst[i], src[i]);
  return out;
}

}  // namespace detail

inline Vector add(const Vector& a, const Vector& b) {
  detail::require_same_len(a, b, "add");
  return detail::zip_with(a, b, [](double x, double y) { return x + y; });
}
inline Matrix add(const Matrix& a, const Matrix& b) {
  detail::require_same_shape(a, b, "add");
  return detail::zip_with(a, b, [](double x, double y) { return x + y; });
}
inline Vector sub(const Vector& a, const Vector& b) {
  detail::require_same_len(a, b, "sub");
  return detail::zip_with(a, b, [](double x, double y) { return x - y; });
}
inline Matrix sub(const Matrix& a, const Matrix& b) {
  detail::require_same_shape(a, b, "sub");
  return detail::zip_with(a, b, [](double x, double y) { return x - y; });
}
inline Vector hadamard(const Vector& a, const Vector& b) {
  detail::require_same_len(a, b, "hadamard");
  return detail::zip_with(a, b, [](double x, double y) { return x * y; });
}
inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  detail::require_same_shape(a, b, "hadamard");
  return detail::zip_with(a, b, [](double x, double y) { return x * y; });
}

template <class T>
  requires std::same_as<T, Vector> || std::same_as<T, Matrix>
T scale(const T& a, double s) {
  T out = a;
  for (double& x : out.values()) x *= s;
  return out;
}

inline Matrix outer(const Vector& u, const Vector& v) {
  Matrix m(u.len(), v.len());
  for (std::size_t i = 0; i < u.len(); ++i) {
    auto row = m.row(i);
    for (std::size_t j = 0; j < v.len(); ++j) row[j] = u[i] * v[j];
  }
  return m;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

}  // namespace irnn
