#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "cmde/kernelcheck.hpp"
#include "cmde/serialize.hpp"
#include "test_util.hpp"

using namespace cmde;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kIoError;
}

NetworkArchitecture arch(Activation act, std::size_t width, std::size_t depth = 1) {
  NetworkArchitecture a;
  a.hidden_widths.assign(depth, width);
  a.activation = act;
  a.prior_variance = 0.1;
  return a;
}

DenseMatrix grid5() { return test::column({-4, -2, 0, 2, 4}); }

}  // namespace

TEST_CASE("shared-only icm3 has identical task blocks") {
  const NetworkArchitecture archs[] = {arch(Activation::kErf, 64)};
  const auto ec = empirical_prior_covariance(CoregionalizationSpec::icm3(0, 0, 1), archs, grid5(),
                                             500, 1);
  const DenseMatrix& s = ec.covariance;
  REQUIRE(s.rows() == 10);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double v = s(2 * i, 2 * j);
      CHECK(s(2 * i, 2 * j + 1) == v);
      CHECK(s(2 * i + 1, 2 * j) == v);
      CHECK(s(2 * i + 1, 2 * j + 1) == v);
    }
  }
}

TEST_CASE("identity twoNet has no cross-task covariance") {
  const NetworkArchitecture archs[] = {arch(Activation::kErf, 128)};
  const auto ec = empirical_prior_covariance(CoregionalizationSpec::two_net(1, 0, 0, 1), archs,
                                             grid5(), 4000, 2);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(ec.covariance(2 * i, 2 * j + 1)) <= 3 * ec.standard_error(2 * i, 2 * j + 1));
    }
  }
}

TEST_CASE("reduced-scale icm3 erf prior matches the analytic kernel") {
  const auto spec = CoregionalizationSpec::icm3(0.5, 0.8, 1.0);
  const NetworkArchitecture archs[] = {arch(Activation::kErf, 512)};
  const auto ec = empirical_prior_covariance(spec, archs, grid5(), 6000, 3);
  const DenseMatrix target = analytic_prior_covariance(spec, archs, grid5());
  CHECK(relative_frobenius_error(ec.covariance, target) <= 0.06);

  // Independent route for the target: B (x) K assembled by hand.
  const double b00 = 0.25 + 1.0, b11 = 0.64 + 1.0, b01 = 1.0;
  const DenseMatrix g = grid5();
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double k = 0.1 * (1.0 + arcsine_kernel(g.row(i), g.row(j), 0.1));
      CHECK(target(2 * i, 2 * j) == doctest::Approx(b00 * k).epsilon(1e-14));
      CHECK(target(2 * i, 2 * j + 1) == doctest::Approx(b01 * k).epsilon(1e-14));
      CHECK(target(2 * i + 1, 2 * j + 1) == doctest::Approx(b11 * k).epsilon(1e-14));
    }
  }
}

TEST_CASE("reduced-scale multiTreatment prior matches k (x) B") {
  const double ones[] = {1, 1, 1};
  const auto spec = CoregionalizationSpec::multi_treatment(3, ones, ones);
  const NetworkArchitecture archs[] = {arch(Activation::kErf, 256)};
  const auto ec = empirical_prior_covariance(spec, archs, grid5(), 4000, 4);
  const DenseMatrix target = analytic_prior_covariance(spec, archs, grid5());
  CHECK(target(0, 0) == doctest::Approx(3 * target(0, 1)).epsilon(1e-14));
  CHECK(relative_frobenius_error(ec.covariance, target) <= 0.08);
}

TEST_CASE("empirical covariance is symmetric, PSD and zero mean") {
  const auto spec = CoregionalizationSpec::icm3(1, 1, 0.1);
  const NetworkArchitecture archs[] = {arch(Activation::kRelu, 64, 2)};
  const auto ec = empirical_prior_covariance(spec, archs, grid5(), 3000, 5);
  CHECK(ec.covariance == transpose(ec.covariance));
  CHECK(test::min_eigenvalue(ec.covariance) >= -1e-8);
  REQUIRE(ec.mean.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(std::abs(ec.mean[i]) <= 3 * ec.mean_standard_error[i]);
  }
  CHECK(ec.draws == 3000);
}

TEST_CASE("empirical covariance is deterministic per seed") {
  const NetworkArchitecture archs[] = {arch(Activation::kTanh, 16)};
  const auto spec = CoregionalizationSpec::icm3(1, 1, 1);
  CHECK(empirical_prior_covariance(spec, archs, grid5(), 50, 7).covariance ==
        empirical_prior_covariance(spec, archs, grid5(), 50, 7).covariance);
}

TEST_CASE("lmc with distinct architectures is distinguishable from a single-block ICM") {
  const std::array<double, 3> blocks[] = {{1, 0.2, 1}, {0.3, 1, 0.5}};
  const auto spec = CoregionalizationSpec::lmc(blocks);
  const NetworkArchitecture archs[] = {arch(Activation::kErf, 256), arch(Activation::kRelu, 256)};
  const auto ec = empirical_prior_covariance(spec, archs, grid5(), 4000, 8);
  const DenseMatrix right = analytic_prior_covariance(spec, archs, grid5());

  // Wrong model: a single erf block carrying the summed coregionalization.
  const auto bs = coregionalization_matrices(spec, spec.coefficients);
  MatrixKernel wrong_kernel{{network_kernel(archs[0])}, {add(bs[0], bs[1])}};
  const DenseMatrix wrong = stacked_covariance(wrong_kernel, grid5());
  const double e_right = relative_frobenius_error(ec.covariance, right);
  const double e_wrong = relative_frobenius_error(ec.covariance, wrong);
  CHECK(e_right <= 0.08);
  CHECK(e_wrong > e_right);
}

TEST_CASE("fused multi-modal prior matches J times the product kernel") {
  ModalityPlan plan;
  plan.block_dims = {1, 1};
  plan.fusion_dim = 4;
  const auto spec = CoregionalizationSpec::icm3(0, 0, 1);
  const NetworkArchitecture archs[] = {arch(Activation::kErf, 256)};
  const DenseMatrix grid{{-1.0, 0.5}, {0.0, 0.0}, {2.0, -1.0}};
  const auto ec = empirical_prior_covariance(spec, archs, grid, 6000, 9, plan);
  const DenseMatrix target = analytic_prior_covariance(spec, archs, grid, plan);
  const ScalarKernel k = network_kernel(archs[0]);
  const double expected = 4.0 * kernel_value(k, grid.row(0).subspan(0, 1), grid.row(2).subspan(0, 1)) *
                          kernel_value(k, grid.row(0).subspan(1, 1), grid.row(2).subspan(1, 1));
  CHECK(target(0, 4) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(relative_frobenius_error(ec.covariance, target) <= 0.1);
}

TEST_CASE("convergence sweep validation") {
  const NetworkArchitecture archs[] = {arch(Activation::kErf, 8)};
  const auto spec = CoregionalizationSpec::icm3(0, 0, 1);
  const std::size_t one[] = {64};
  CHECK(kind_of([&] { convergence_sweep(spec, archs, one, 10, grid5(), 1); }) ==
        ErrorKind::kInvalidArchitecture);
  const std::size_t decreasing[] = {64, 32};
  CHECK(kind_of([&] { convergence_sweep(spec, archs, decreasing, 10, grid5(), 1); }) ==
        ErrorKind::kInvalidArchitecture);
  CHECK(kind_of([&] { empirical_prior_covariance(spec, archs, grid5(), 1, 1); }) ==
        ErrorKind::kInvalidArchitecture);
}

TEST_CASE("convergence sweep report and outputs") {
  const NetworkArchitecture archs[] = {arch(Activation::kErf, 8)};
  const auto spec = CoregionalizationSpec::icm3(0, 0, 1);
  const std::size_t widths[] = {4, 16, 64};
  const ConvergenceReport report = convergence_sweep(spec, archs, widths, 400, grid5(), 11, 3);
  REQUIRE(report.widths.size() == 3);
  for (const auto& w : report.widths) {
    CHECK(w.errors.size() == 3);
    double mean = 0;
    for (double e : w.errors) {
      CHECK(e >= 0.0);
      mean += e;
    }
    CHECK(w.mean_error == doctest::Approx(mean / 3).epsilon(1e-14));
    CHECK(w.elapsed_seconds >= 0.0);
  }
  bool non_increasing = true;
  for (std::size_t i = 1; i < 3; ++i) {
    non_increasing = non_increasing && report.widths[i].mean_error <= report.widths[i - 1].mean_error;
  }
  CHECK(report.non_increasing == non_increasing);

  const auto doc = to_json(report);
  CHECK(doc.at("widths").size() == 3);
  const fs::path dir = fs::temp_directory_path() / "cmde_test_kernelcheck";
  fs::create_directories(dir);
  write_convergence_csv(report, (dir / "sweep.csv").string());
  write_convergence_svg(report, (dir / "sweep.svg").string());
  const std::string csv = read_text_file((dir / "sweep.csv").string());
  CHECK(csv.rfind("width,mean_error,sd_error\n", 0) == 0);
  CHECK(read_text_file((dir / "sweep.svg").string()).find("<svg") != std::string::npos);
}
