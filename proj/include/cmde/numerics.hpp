#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "cmde/error.hpp"

namespace cmde {

// Row-major dense matrix of 64-bit reals. Consumers index with (row, col);
// `row(r)` exposes a contiguous span for hot loops.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix from_row_major(std::size_t rows, std::size_t cols,
                                    std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const DenseMatrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double factor);
double frobenius_norm(const DenseMatrix& a);
double relative_frobenius_error(const DenseMatrix& estimate, const DenseMatrix& reference);
double trace(const DenseMatrix& a);
bool all_finite(const DenseMatrix& a);

// Fixed summation order (four interleaved partial sums), so results do not
// depend on the caller or thread layout.
inline double dot(std::span<const double> a, std::span<const double> b) {
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

// Lower-triangular L with L * L^T = a + jitter * I.
DenseMatrix cholesky(const DenseMatrix& a, double jitter = 0.0);

struct CholeskyFactor {
  DenseMatrix lower;
  double jitter = 0.0;
};

// Tries jitter 0, then 1e-8 * trace(a) / n escalated x10 up to three times.
CholeskyFactor factorize_spd(const DenseMatrix& a);

// Solves L x = b (forward substitution).
std::vector<double> solve_lower(const DenseMatrix& lower, std::span<const double> b);
// Solves L^T x = b (back substitution with the transpose of L).
std::vector<double> solve_lower_transposed(const DenseMatrix& lower, std::span<const double> b);
// Solves (L L^T) x = b.
std::vector<double> cholesky_solve(const DenseMatrix& lower, std::span<const double> b);

// xoshiro256++ stream seeded through splitmix64. `split()` hands out the
// current position and jumps this stream 2^128 draws ahead, so split streams
// never overlap.
class SeededRng {
 public:
  using result_type = std::uint64_t;

  explicit SeededRng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();

  std::uint64_t seed() const noexcept { return seed_; }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double normal();
  double normal(double variance);
  bool bernoulli(double p);
  std::size_t uniform_index(std::size_t n);

  SeededRng split();
  std::vector<SeededRng> split(std::size_t count);

  void jump();

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  boost::random::normal_distribution<double> normal_;
};

DenseMatrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double variance);

}  // namespace cmde
