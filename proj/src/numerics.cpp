#include "cmde/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace cmde {

namespace {

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << what << ": shape " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
        << b.cols();
    throw Error(ErrorKind::kDimensionMismatch, msg.str());
  }
}

void require_square(const DenseMatrix& a, const char* what) {
  if (a.rows() != a.cols()) {
    std::ostringstream msg;
    msg << what << ": expected a square matrix, got " << a.rows() << "x" << a.cols();
    throw Error(ErrorKind::kDimensionMismatch, msg.str());
  }
}

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw Error(ErrorKind::kDimensionMismatch, "ragged initializer for DenseMatrix");
    }
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::from_row_major(std::size_t rows, std::size_t cols,
                                        std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw Error(ErrorKind::kDimensionMismatch, "entry count does not equal rows*cols");
  }
  DenseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.values_ = std::move(values);
  return m;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "matmul: inner dimensions differ");
  }
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "matvec: vector length differs from columns");
  }
  std::vector<double> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "add");
  DenseMatrix out = a;
  auto o = out.values();
  auto v = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += v[i];
  return out;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "subtract");
  DenseMatrix out = a;
  auto o = out.values();
  auto v = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= v[i];
  return out;
}

DenseMatrix scale(const DenseMatrix& a, double factor) {
  DenseMatrix out = a;
  for (double& v : out.values()) v *= factor;
  return out;
}

double frobenius_norm(const DenseMatrix& a) { return std::sqrt(dot(a.values(), a.values())); }

double relative_frobenius_error(const DenseMatrix& estimate, const DenseMatrix& reference) {
  require_same_shape(estimate, reference, "relative_frobenius_error");
  return frobenius_norm(subtract(estimate, reference)) / frobenius_norm(reference);
}

double trace(const DenseMatrix& a) {
  require_square(a, "trace");
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

bool all_finite(const DenseMatrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

DenseMatrix cholesky(const DenseMatrix& a, double jitter) {
  require_square(a, "cholesky");
  if (jitter < 0.0) {
    throw Error(ErrorKind::kDimensionMismatch, "cholesky: jitter must be nonnegative");
  }
  const std::size_t n = a.rows();
  double max_abs = 0.0;
  for (double v : a.values()) max_abs = std::max(max_abs, std::abs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * max_abs) {
        std::ostringstream msg;
        msg << "cholesky: input not symmetric at (" << i << ", " << j << ")";
        throw Error(ErrorKind::kDimensionMismatch, msg.str());
      }
    }
  }

  // Row-oriented (Cholesky-Crout) so both operands of each inner product are
  // contiguous rows of L.
  DenseMatrix lower(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto li = lower.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const auto lj = lower.row(j);
      const double s = a(i, j) - dot(li.first(j), lj.first(j));
      li[j] = s / lj[j];
    }
    const double pivot = a(i, i) + jitter - dot(li.first(i), li.first(i));
    if (!(pivot > 0.0)) {
      std::ostringstream msg;
      msg << "cholesky: pivot " << pivot << " at row " << i << " (jitter " << jitter << ")";
      throw Error(ErrorKind::kNotPositiveDefinite, msg.str());
    }
    li[i] = std::sqrt(pivot);
  }
  return lower;
}

CholeskyFactor factorize_spd(const DenseMatrix& a) {
  require_square(a, "factorize_spd");
  try {
    return {cholesky(a, 0.0), 0.0};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNotPositiveDefinite) throw;
  }
  const double base = 1e-8 * std::max(trace(a), 0.0) / static_cast<double>(a.rows());
  double jitter = base > 0.0 ? base : 1e-8;
  for (int attempt = 0; attempt <= 3; ++attempt, jitter *= 10.0) {
    try {
      return {cholesky(a, jitter), jitter};
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNotPositiveDefinite || attempt == 3) throw;
    }
  }
  throw Error(ErrorKind::kNotPositiveDefinite, "factorize_spd: unreachable");
}

std::vector<double> solve_lower(const DenseMatrix& lower, std::span<const double> b) {
  require_square(lower, "solve_lower");
  if (b.size() != lower.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "solve_lower: right-hand side length");
  }
  const std::size_t n = b.size();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto li = lower.row(i);
    x[i] = (b[i] - dot(li.first(i), std::span<const double>(x).first(i))) / li[i];
  }
  return x;
}

std::vector<double> solve_lower_transposed(const DenseMatrix& lower, std::span<const double> b) {
  require_square(lower, "solve_lower_transposed");
  if (b.size() != lower.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "solve_lower_transposed: right-hand side length");
  }
  const std::size_t n = b.size();
  std::vector<double> x(b.begin(), b.end());
  // Column-sweep form: after x[i] is final, subtract its contribution from the
  // remaining rows using row i of L (contiguous).
  for (std::size_t ii = n; ii-- > 0;) {
    const auto li = lower.row(ii);
    x[ii] /= li[ii];
    const double xi = x[ii];
    for (std::size_t k = 0; k < ii; ++k) x[k] -= li[k] * xi;
  }
  return x;
}

std::vector<double> cholesky_solve(const DenseMatrix& lower, std::span<const double> b) {
  return solve_lower_transposed(lower, solve_lower(lower, b));
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : state_) s = splitmix64(x);
}

SeededRng::result_type SeededRng::operator()() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double SeededRng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double SeededRng::normal() { return normal_(*this); }

double SeededRng::normal(double variance) { return std::sqrt(variance) * normal_(*this); }

bool SeededRng::bernoulli(double p) { return uniform() < p; }

std::size_t SeededRng::uniform_index(std::size_t n) {
  // Lemire's multiply-shift with rejection keeps the index unbiased.
  const std::uint64_t range = n;
  std::uint64_t x = (*this)();
  __uint128_t m = static_cast<__uint128_t>(x) * range;
  std::uint64_t low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = -range % range;
    while (low < threshold) {
      x = (*this)();
      m = static_cast<__uint128_t>(x) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

void SeededRng::jump() {
  static constexpr std::uint64_t kJump[] = {0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL,
                                            0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
  std::uint64_t s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  for (std::uint64_t word : kJump) {
    for (int b = 0; b < 64; ++b) {
      if (word & (std::uint64_t{1} << b)) {
        s0 ^= state_[0];
        s1 ^= state_[1];
        s2 ^= state_[2];
        s3 ^= state_[3];
      }
      (*this)();
    }
  }
  state_[0] = s0;
  state_[1] = s1;
  state_[2] = s2;
  state_[3] = s3;
}

SeededRng SeededRng::split() {
  SeededRng child = *this;
  child.normal_.reset();
  jump();
  return child;
}

std::vector<SeededRng> SeededRng::split(std::size_t count) {
  std::vector<SeededRng> streams;
  streams.reserve(count);
  for (std::size_t i = 0; i < count; ++i) streams.push_back(split());
  return streams;
}

DenseMatrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double variance) {
  if (!(variance > 0.0)) {
    throw Error(ErrorKind::kInvalidArchitecture, "gaussian_matrix: variance must be positive");
  }
  DenseMatrix m(rows, cols);
  const double sd = std::sqrt(variance);
  for (double& v : m.values()) v = sd * rng.normal();
  return m;
}

}  // namespace cmde
