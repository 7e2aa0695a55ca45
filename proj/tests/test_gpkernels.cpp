#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "cmde/gpkernels.hpp"
#include "test_util.hpp"

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

NetworkArchitecture arch(Activation act, std::vector<std::size_t> hidden, double s2 = 0.1) {
  NetworkArchitecture a;
  a.hidden_widths = std::move(hidden);
  a.activation = act;
  a.prior_variance = s2;
  return a;
}

DenseMatrix grid5() { return test::column({-4, -2, 0, 2, 4}); }

DenseMatrix random_points(SeededRng& rng, std::size_t n, std::size_t d, double spread = 2.0) {
  DenseMatrix x(n, d);
  for (double& v : x.values()) v = spread * rng.normal();
  return x;
}

}  // namespace

TEST_CASE("arcsine kernel at the origin") {
  const double zero[] = {0.0};
  const double expected = 2.0 / std::numbers::pi * std::asin(0.2 / 1.2);
  CHECK(arcsine_kernel(zero, zero, 0.1) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(arcsine_kernel(zero, zero, 0.1) == doctest::Approx(0.10659).epsilon(1e-4));
}

TEST_CASE("arcsine kernel matches the hidden-feature second moment of wide erf layers") {
  // E[erf(w0 + w1 x) erf(w0 + w1 x')] with w ~ N(0, 0.1 I), averaged over 16
  // independent width-8192 first layers.
  const double points[] = {0.0, -2.0, 3.0};
  double sums[3][3] = {};
  const std::size_t width = 8192, layers = 16;
  SeededRng rng(2024);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t u = 0; u < width; ++u) {
      const double b = rng.normal(0.1), w = rng.normal(0.1);
      double h[3];
      for (int p = 0; p < 3; ++p) h[p] = std::erf(b + w * points[p]);
      for (int p = 0; p < 3; ++p) {
        for (int q = 0; q < 3; ++q) sums[p][q] += h[p] * h[q];
      }
    }
  }
  for (int p = 0; p < 3; ++p) {
    for (int q = 0; q < 3; ++q) {
      const double mc = sums[p][q] / static_cast<double>(width * layers);
      const double closed = arcsine_kernel(std::span(points + p, 1), std::span(points + q, 1), 0.1);
      CAPTURE(p);
      CAPTURE(q);
      CHECK(std::abs(mc - closed) <= 0.02 * std::abs(closed));
    }
  }
}

TEST_CASE("erf network kernel matches Monte-Carlo network draws") {
  const DenseMatrix x = grid5();
  const ScalarKernel k = ScalarKernel::erf_network(0.1);
  const DenseMatrix analytic = gram(k, x);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double a = arcsine_kernel(x.row(i), x.row(j), 0.1);
      CHECK(analytic(i, j) == doctest::Approx(0.1 * (1.0 + a)).epsilon(1e-14));
    }
  }
  const DenseMatrix mc = monte_carlo_kernel(arch(Activation::kErf, {512}), 20000, 3, x);
  CHECK(relative_frobenius_error(mc, analytic) <= 0.03);
}

TEST_CASE("arcsine kernel is diagonally dominant") {
  for (double s2 : {0.01, 0.1, 1.0, 10.0}) {
    for (int i = -20; i <= 20; ++i) {
      const double x[] = {0.5 * i};
      const double kxx = arcsine_kernel(x, x, s2);
      for (int j = -20; j <= 20; ++j) {
        const double xp[] = {0.5 * j};
        const double kxy = std::abs(arcsine_kernel(x, xp, s2));
        CHECK(kxy <= std::sqrt(kxx * arcsine_kernel(xp, xp, s2)) + 1e-15);
        if (std::abs(j) <= std::abs(i)) CHECK(kxx >= kxy - 1e-15);
      }
    }
  }
}

TEST_CASE("the kernel is not stationary: a farther point can covary more than the diagonal") {
  const double x[] = {-8.5}, xp[] = {-10.0};
  CHECK(arcsine_kernel(x, xp, 0.01) > arcsine_kernel(x, x, 0.01));
}

TEST_CASE("arcsine kernel vanishes with the prior variance") {
  const double x[] = {1.0, -2.0}, xp[] = {0.5, 3.0};
  double prev = arcsine_kernel(x, x, 1.0);
  for (double s2 : {1e-1, 1e-2, 1e-4, 1e-8}) {
    const double v = arcsine_kernel(x, x, s2);
    CHECK(v < prev);
    prev = v;
  }
  CHECK(std::abs(arcsine_kernel(x, xp, 1e-10)) <= 1e-9);
}

TEST_CASE("arcsine kernel values lie in [-1, 1] and are symmetric") {
  SeededRng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const double x[] = {10 * rng.normal(), 10 * rng.normal()};
    const double xp[] = {10 * rng.normal(), 10 * rng.normal()};
    const double s2 = std::exp(3 * rng.normal());
    const double v = arcsine_kernel(x, xp, s2);
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
    CHECK(v == arcsine_kernel(xp, x, s2));
  }
  const double a[] = {1.0}, b[] = {1.0, 2.0};
  CHECK(kind_of([&] { arcsine_kernel(a, b, 0.1); }) == ErrorKind::kDimensionMismatch);
}

TEST_CASE("relu recursion keeps the diagonal positive at every depth") {
  for (double xv : {0.0, 0.3, -5.0, 40.0}) {
    const double x[] = {xv};
    for (std::size_t depth = 1; depth <= 8; ++depth) {
      CHECK(arccosine_relu_kernel(x, x, 0.1, depth) > 0.0);
    }
  }
}

TEST_CASE("relu kernel matches Monte-Carlo over width-8192 relu networks") {
  const DenseMatrix x = grid5();
  const DenseMatrix analytic = gram(ScalarKernel::relu_network(0.1), x);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(analytic(i, j) == arccosine_relu_kernel(x.row(i), x.row(j), 0.1, 1));
    }
  }
  const DenseMatrix mc = monte_carlo_kernel(arch(Activation::kRelu, {8192}), 20000, 5, x);
  CHECK(relative_frobenius_error(mc, analytic) <= 0.03);
}

TEST_CASE("deep relu kernel matches a hand recursion") {
  const double x[] = {0.7, -0.2}, xp[] = {-1.0, 0.4};
  const double s2 = 0.4, sb2 = 0.2;
  double a = sb2 + s2 * (x[0] * x[0] + x[1] * x[1]);
  double b = sb2 + s2 * (xp[0] * xp[0] + xp[1] * xp[1]);
  double c = sb2 + s2 * (x[0] * xp[0] + x[1] * xp[1]);
  for (int l = 0; l < 3; ++l) {
    const double theta = std::acos(c / std::sqrt(a * b));
    const double cross = std::sqrt(a * b) / (2 * std::numbers::pi) *
                         (std::sin(theta) + (std::numbers::pi - theta) * std::cos(theta));
    c = sb2 + s2 * cross;
    a = sb2 + s2 * a / 2;
    b = sb2 + s2 * b / 2;
  }
  CHECK(arccosine_relu_kernel(x, xp, s2, sb2, 3) == doctest::Approx(c).epsilon(1e-13));
}

TEST_CASE("orthogonal inputs without bias give the arc-cosine value at a right angle") {
  const double x[] = {1.0, 0.0}, xp[] = {0.0, 2.5};
  const double kxy = arccosine_relu_kernel(x, xp, 0.7, 0.0, 1);
  const double kxx = arccosine_relu_kernel(x, x, 0.7, 0.0, 1);
  const double kyy = arccosine_relu_kernel(xp, xp, 0.7, 0.0, 1);
  CHECK(kxy / std::sqrt(kxx * kyy) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-14));
}

TEST_CASE("monte_carlo_kernel with one draw is rank one") {
  const DenseMatrix x = grid5();
  const DenseMatrix g = monte_carlo_kernel(arch(Activation::kTanh, {32}), 1, 9, x);
  std::vector<double> f(5);
  for (std::size_t i = 0; i < 5; ++i) f[i] = std::sqrt(g(i, i));
  // g = f f^T up to the sign of each f_i.
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(g(i, j)) == doctest::Approx(f[i] * f[j]).epsilon(1e-12));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(test::to_eigen(g));
  const auto ev = eig.eigenvalues();
  CHECK(std::abs(ev(3)) <= 1e-12 * ev(4));
}

TEST_CASE("monte_carlo_kernel is deterministic and rejects zero draws") {
  const DenseMatrix x = grid5();
  const auto a = arch(Activation::kErf, {16});
  CHECK(monte_carlo_kernel(a, 50, 1, x) == monte_carlo_kernel(a, 50, 1, x));
  CHECK(monte_carlo_kernel(a, 50, 1, x) != monte_carlo_kernel(a, 50, 2, x));
  CHECK_THROWS_AS(monte_carlo_kernel(a, 0, 1, x), Error);
  CHECK(kind_of([&] { monte_carlo_kernel(arch(Activation::kErf, {0}), 5, 1, x); }) ==
        ErrorKind::kInvalidArchitecture);
}

TEST_CASE("identity single layer converges to the linear covariance") {
  SeededRng rng(6);
  const DenseMatrix x = random_points(rng, 6, 2, 1.0);
  DenseMatrix exact(6, 6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) exact(i, j) = 0.3 * (1.0 + dot(x.row(i), x.row(j)));
  }
  const DenseMatrix mc = monte_carlo_kernel(arch(Activation::kIdentity, {}, 0.3), 100000, 7, x);
  CHECK(relative_frobenius_error(mc, exact) <= 0.02);
}

TEST_CASE("Monte-Carlo error shrinks like one over root draws") {
  const DenseMatrix x = grid5();
  const auto a = arch(Activation::kIdentity, {}, 0.1);
  DenseMatrix exact(5, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) exact(i, j) = 0.1 * (1.0 + x(i, 0) * x(j, 0));
  }
  double small = 0, large = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    small += relative_frobenius_error(monte_carlo_kernel(a, 10000, 100 + seed, x), exact);
    large += relative_frobenius_error(monte_carlo_kernel(a, 40000, 200 + seed, x), exact);
  }
  const double ratio = large / small;
  CHECK(ratio >= 0.3);
  CHECK(ratio <= 0.8);
}

TEST_CASE("multiplicative kernel examples") {
  const ScalarKernel k = ScalarKernel::erf_network(0.2);
  const std::size_t one_block[] = {2};
  const ScalarKernel one[] = {k};
  const double x[] = {0.3, -1.0}, xp[] = {2.0, 0.5};
  CHECK(multiplicative_kernel(one, one_block, x, xp) == kernel_value(k, x, xp));

  const std::size_t blocks[] = {1, 1};
  const ScalarKernel two[] = {k, ScalarKernel::relu_network(0.5)};
  const double prod = kernel_value(two[0], std::span(x, 1), std::span(xp, 1)) *
                      kernel_value(two[1], std::span(x + 1, 1), std::span(xp + 1, 1));
  CHECK(multiplicative_kernel(two, blocks, x, xp) == doctest::Approx(prod).epsilon(1e-15));

  // Zero-bias arcsine factor at the origin is zero.
  ScalarKernel zero = ScalarKernel::arcsine(0.1);
  const ScalarKernel with_zero[] = {k, zero};
  const double origin_tail[] = {0.3, 0.0}, any[] = {2.0, 5.0};
  ScalarKernel lin = ScalarKernel::relu_network(0.3);
  lin.bias_variance = 0.0;
  const ScalarKernel annihilated[] = {k, lin};
  CHECK(multiplicative_kernel(annihilated, blocks, origin_tail, any) == 0.0);
  CHECK(multiplicative_kernel(with_zero, blocks, x, xp) != 0.0);

  const std::size_t three_blocks[] = {1, 1, 0};
  CHECK(kind_of([&] { multiplicative_kernel(two, three_blocks, x, xp); }) == ErrorKind::kSpecMismatch);
}

TEST_CASE("product kernel equals J times the per-block product") {
  ModalityPlan plan;
  plan.block_dims = {1, 2};
  plan.fusion_dim = 16;
  const ScalarKernel base = ScalarKernel::erf_network(0.1);
  const ScalarKernel fused = fused_network_kernel(base, plan);
  const double x[] = {0.5, 1.0, -1.0}, xp[] = {-0.5, 0.0, 2.0};
  const double expected = 16.0 * kernel_value(base, std::span(x, 1), std::span(xp, 1)) *
                          kernel_value(base, std::span(x + 1, 2), std::span(xp + 1, 2));
  CHECK(kernel_value(fused, x, xp) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("matrix_kernel_eval examples") {
  const ScalarKernel k = ScalarKernel::erf_network(0.1);
  const double x[] = {0.4}, xp[] = {-1.3};
  const double kv = kernel_value(k, x, xp);

  MatrixKernel ident{{k}, {DenseMatrix::identity(2)}};
  const DenseMatrix a = matrix_kernel_eval(ident, x, xp);
  CHECK(a == DenseMatrix{{kv, 0}, {0, kv}});

  MatrixKernel ones{{k}, {DenseMatrix{{1, 1}, {1, 1}}}};
  const DenseMatrix b = matrix_kernel_eval(ones, x, xp);
  CHECK(b == DenseMatrix{{kv, kv}, {kv, kv}});

  const DenseMatrix b1{{2, 0.5}, {0.5, 1}};
  MatrixKernel twice{{k, k}, {b1, b1}};
  MatrixKernel doubled{{k}, {scale(b1, 2.0)}};
  const DenseMatrix c = matrix_kernel_eval(twice, x, xp), d = matrix_kernel_eval(doubled, x, xp);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(c(i, j) == doctest::Approx(d(i, j)).epsilon(1e-15));
  }
}

TEST_CASE("matrix kernel validation") {
  const ScalarKernel k = ScalarKernel::arcsine(0.1);
  CHECK(kind_of([&] { validate(MatrixKernel{}); }) == ErrorKind::kSpecMismatch);
  CHECK(kind_of([&] { validate(MatrixKernel{{k, k}, {DenseMatrix::identity(2)}}); }) ==
        ErrorKind::kSpecMismatch);
  CHECK(kind_of([&] { validate(MatrixKernel{{k}, {DenseMatrix(2, 3)}}); }) ==
        ErrorKind::kSpecMismatch);
  CHECK(kind_of([&] {
          validate(MatrixKernel{{k, k}, {DenseMatrix::identity(2), DenseMatrix::identity(3)}});
        }) == ErrorKind::kSpecMismatch);
  CHECK(kind_of([&] { validate(MatrixKernel{{k}, {DenseMatrix{{1, 2}, {0, 1}}}}); }) ==
        ErrorKind::kSpecMismatch);
}

TEST_CASE("matrix_kernel_eval is exactly transpose-symmetric") {
  SeededRng rng(8);
  const std::array<double, 3> blocks[] = {{1, 0.5, 0.3}, {-0.2, 1.4, 0.8}};
  const NetworkArchitecture archs[] = {arch(Activation::kErf, {64}), arch(Activation::kRelu, {64, 64})};
  const MatrixKernel mk = implied_matrix_kernel(CoregionalizationSpec::lmc(blocks), archs);
  for (int trial = 0; trial < 50; ++trial) {
    const double x[] = {3 * rng.normal(), rng.normal()};
    const double xp[] = {3 * rng.normal(), rng.normal()};
    CHECK(matrix_kernel_eval(mk, x, xp) == transpose(matrix_kernel_eval(mk, xp, x)));
  }
}

TEST_CASE("scalar kernels give PSD Gram matrices") {
  SeededRng rng(9);
  const std::vector<ScalarKernel> kernels{
      ScalarKernel::arcsine(0.1),          ScalarKernel::arcsine(5.0),
      ScalarKernel::erf_network(0.1, 3),   ScalarKernel::relu_network(0.1, 1),
      ScalarKernel::relu_network(1.5, 4),
  };
  for (std::size_t n : {2, 10, 50}) {
    const DenseMatrix x = random_points(rng, n, 3);
    for (const auto& k : kernels) {
      const DenseMatrix g = gram(k, x);
      CHECK(g == transpose(g));
      CHECK(test::min_eigenvalue(g) >= -1e-8);
    }
    const DenseMatrix mc = monte_carlo_kernel(arch(Activation::kTanh, {16}), 200, n, x);
    CHECK(test::min_eigenvalue(mc) >= -1e-8);
  }
}

TEST_CASE("stacked covariance is PSD and point-major") {
  SeededRng rng(10);
  const double group[] = {1, 0.5, 0.2}, shared[] = {0.7, 0.1, 0.4};
  const NetworkArchitecture archs[] = {arch(Activation::kRelu, {64})};
  const MatrixKernel mk =
      implied_matrix_kernel(CoregionalizationSpec::multi_treatment(3, group, shared), archs);
  const DenseMatrix x = random_points(rng, 20, 2);
  const DenseMatrix s = stacked_covariance(mk, x);
  REQUIRE(s.rows() == 60);
  const DenseMatrix block = matrix_kernel_eval(mk, x.row(4), x.row(7));
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t d = 0; d < 3; ++d) CHECK(s(4 * 3 + c, 7 * 3 + d) == block(c, d));
  }
  CHECK(test::min_eigenvalue(s) >= -1e-8 * trace(s));
  CHECK_NOTHROW(factorize_spd(s));
}

TEST_CASE("network_kernel covers erf and relu only") {
  CHECK(network_kernel(arch(Activation::kErf, {8})).kind == KernelKind::kErfNetwork);
  CHECK(network_kernel(arch(Activation::kRelu, {8, 8})).depth == 2);
  CHECK(kind_of([&] { network_kernel(arch(Activation::kTanh, {8})); }) ==
        ErrorKind::kInvalidArchitecture);
  for (KernelKind kind : {KernelKind::kArcsineErf, KernelKind::kErfNetwork, KernelKind::kArccosineRelu,
                          KernelKind::kMonteCarlo, KernelKind::kProduct}) {
    CHECK(parse_kernel_kind(to_string(kind)) == kind);
  }
}
