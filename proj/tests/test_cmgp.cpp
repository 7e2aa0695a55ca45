#include <doctest.h>

#include <cmath>
#include <functional>

#include "cmde/cmgp.hpp"
#include "cmde/datagen.hpp"

using namespace cmde;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kIoError;
}

MatrixKernel icm(const ScalarKernel& k, const DenseMatrix& b) { return MatrixKernel{{k}, {b}}; }

const DenseMatrix kOnes{{1, 1}, {1, 1}};
const DenseMatrix kCorrelated{{2, 1}, {1, 2}};

Dataset small_dataset(std::uint64_t seed, std::size_t n, std::size_t dim = 1) {
  SeededRng rng(seed);
  Dataset d;
  d.x = DenseMatrix(n, dim);
  for (double& v : d.x.values()) v = 2 * rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    d.t.push_back(rng.bernoulli(0.5) ? 1 : 0);
    d.y.push_back(std::sin(d.x(i, 0)) + d.t.back() + 0.1 * rng.normal());
  }
  return d;
}

}  // namespace

TEST_CASE("fit rejects empty data and negative noise") {
  Dataset d;
  d.x = DenseMatrix(0, 1);
  const MatrixKernel k = icm(ScalarKernel::arcsine(0.1), kOnes);
  CHECK(kind_of([&] { fit(d, k, 0.01); }) == ErrorKind::kEmptyDataset);
  CHECK(kind_of([&] { fit(small_dataset(1, 5), k, -1.0); }) == ErrorKind::kConfigError);
}

TEST_CASE("noiseless single point is interpolated") {
  Dataset d;
  d.x = DenseMatrix{{0.7}};
  d.t = {1};
  d.y = {2.5};
  const GpPosterior gp = fit(d, icm(ScalarKernel::erf_network(0.5), kCorrelated), 0.0);
  const GpPrediction p = posterior(gp, d.x);
  CHECK(p.mean(0, 1) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(std::abs(p.covariance(0, 3)) <= 1e-8);
}

TEST_CASE("noiseless training points are interpolated") {
  const Dataset d = small_dataset(2, 12);
  const GpPosterior gp = fit(d, icm(ScalarKernel::relu_network(0.5, 2), kCorrelated), 0.0);
  const GpPrediction p = posterior(gp, d.x);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t t = static_cast<std::size_t>(d.t[i]);
    CHECK(p.mean(i, t) == doctest::Approx(d.y[i]).epsilon(1e-6));
    CHECK(std::abs(p.covariance(i, t * 2 + t)) <= 1e-8);
  }
}

TEST_CASE("the synthetic data fits with the arcsine ICM kernel") {
  SeededRng rng(1);
  const Dataset d = generate_synthetic(rng, 3000);
  const GpPosterior gp = fit(d, icm(ScalarKernel::arcsine(0.1), kOnes), 0.0025);
  CHECK(gp.factor.lower.rows() == 3000);
  CHECK(solve_residual(gp) <= 1e-8);
  const GpPrediction p = posterior(gp, DenseMatrix{{-1.0}, {0.0}, {2.0}});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::isfinite(p.mean(i, 0)));
    CHECK(std::abs(p.cate_variance(i, 0)) <= 1e-8);
  }
}

TEST_CASE("far queries revert to the prior variance") {
  Dataset d;
  SeededRng rng(3);
  d.x = DenseMatrix(40, 2);
  for (std::size_t i = 0; i < 40; ++i) {
    d.x(i, 0) = -3.0 + 0.15 * i;
    d.t.push_back(static_cast<int>(i % 2));
    d.y.push_back(std::tanh(d.x(i, 0)) + 0.05 * rng.normal());
  }
  const ScalarKernel k = ScalarKernel::arcsine(0.1);
  const GpPosterior gp = fit(d, icm(k, kCorrelated), 0.0025);
  const DenseMatrix query{{0.0, 1e3}};
  const GpPrediction p = posterior(gp, query);
  const double kxx = kernel_value(k, query.row(0), query.row(0));
  for (std::size_t c = 0; c < 2; ++c) {
    const double prior = kCorrelated(c, c) * kxx;
    CHECK(std::abs(p.covariance(0, c * 2 + c) - prior) <= 0.05 * prior);
  }
}

TEST_CASE("fully correlated tasks leave no CATE variance") {
  const Dataset d = small_dataset(4, 30);
  const GpPosterior gp = fit(d, icm(ScalarKernel::erf_network(0.3), kOnes), 0.01);
  DenseMatrix q(9, 1);
  for (std::size_t i = 0; i < 9; ++i) q(i, 0) = -8.0 + 2.0 * i;
  const GpPrediction p = posterior(gp, q);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(std::abs(p.cate_variance(i, 0)) <= 1e-8);
    CHECK(p.cate_mean(i, 0) == doctest::Approx(p.mean(i, 1) - p.mean(i, 0)));
  }
}

TEST_CASE("posterior mean is linear in the outcomes") {
  Dataset d = small_dataset(5, 25);
  const MatrixKernel k = icm(ScalarKernel::relu_network(0.2), kCorrelated);
  const DenseMatrix q{{-2.0}, {0.1}, {3.3}};
  const GpPrediction a = posterior_mean(fit(d, k, 0.05), q);
  for (double& y : d.y) y *= 2;
  const GpPrediction b = posterior_mean(fit(d, k, 0.05), q);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(b.mean(i, c) == doctest::Approx(2 * a.mean(i, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("posterior variance never exceeds the prior variance") {
  const Dataset d = small_dataset(6, 40, 2);
  const double group[] = {1, 0.5, 0.3}, shared[] = {0.8, 0.2, 0.6};
  const auto spec = CoregionalizationSpec::multi_treatment(3, group, shared);
  NetworkArchitecture a;
  a.activation = Activation::kErf;
  const NetworkArchitecture archs[] = {a};
  const MatrixKernel k = implied_matrix_kernel(spec, archs);
  Dataset d3 = d;
  d3.treatments = 3;
  for (std::size_t i = 0; i < d3.size(); ++i) d3.t[i] = static_cast<int>(i % 3);
  const GpPosterior gp = fit(d3, k, 0.01);
  SeededRng rng(7);
  DenseMatrix q(30, 2);
  for (double& v : q.values()) v = 3 * rng.normal();
  const GpPrediction p = posterior(gp, q);
  for (std::size_t i = 0; i < 30; ++i) {
    const DenseMatrix prior = matrix_kernel_eval(k, q.row(i), q.row(i));
    for (std::size_t c = 0; c < 3; ++c) CHECK(p.covariance(i, c * 3 + c) <= prior(c, c) + 1e-8);
    CHECK(p.cate_mean.cols() == 2);
  }
}

TEST_CASE("posterior_mean agrees with posterior") {
  const Dataset d = small_dataset(8, 30);
  const GpPosterior gp = fit(d, icm(ScalarKernel::arcsine(0.5), kCorrelated), 0.01);
  DenseMatrix q(300, 1);
  for (std::size_t i = 0; i < 300; ++i) q(i, 0) = -6.0 + 0.04 * i;
  const GpPrediction full = posterior(gp, q);
  const GpPrediction fast = posterior_mean(gp, q);
  CHECK(full.mean == fast.mean);
  CHECK(full.cate_mean == fast.cate_mean);
}

TEST_CASE("the cached solve reproduces the outcomes") {
  const Dataset d = small_dataset(9, 60);
  const GpPosterior gp = fit(d, icm(ScalarKernel::erf_network(0.2), kCorrelated), 0.01);
  CHECK(solve_residual(gp) <= 1e-8);
}

TEST_CASE("posterior rejects mismatched queries") {
  const Dataset d = small_dataset(10, 5);
  const GpPosterior gp = fit(d, icm(ScalarKernel::arcsine(0.1), kCorrelated), 0.01);
  CHECK(kind_of([&] { posterior(gp, DenseMatrix(2, 3)); }) == ErrorKind::kDimensionMismatch);
}
