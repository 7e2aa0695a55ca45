#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "cmde/datagen.hpp"

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

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "cmde_test_datagen";
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("synthetic data has a constant unit treatment effect") {
  SeededRng rng(1);
  const Dataset d = generate_synthetic(rng, 3000);
  REQUIRE(d.size() == 3000);
  REQUIRE(d.dim() == 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK((*d.mu1)[i] - (*d.mu0)[i] == 1.0);
    CHECK((*d.y1)[i] - (*d.y0)[i] == 1.0);
    CHECK(d.y[i] == (d.t[i] == 1 ? (*d.y1)[i] : (*d.y0)[i]));
    CHECK((*d.mu0)[i] == doctest::Approx(1.0 + sigmoid(d.x(i, 0))).epsilon(1e-11));
    CHECK((*d.propensity)[i] == doctest::Approx(sigmoid(d.x(i, 0))).epsilon(1e-11));
  }
  CHECK(factual_consistent(d));
  CHECK_NOTHROW(validate(d));
}

TEST_CASE("synthetic covariate and treatment moments") {
  SeededRng rng(2);
  const Dataset d = generate_synthetic(rng, 100000);
  double sum = 0, sq = 0, treated = 0, noise_sq = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    sum += d.x(i, 0);
    sq += d.x(i, 0) * d.x(i, 0);
    treated += d.t[i];
    const double xi = (*d.y0)[i] - (*d.mu0)[i];
    noise_sq += xi * xi;
  }
  const double n = static_cast<double>(d.size());
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(std::abs(var - 9.0) <= 0.03 * 9.0);
  CHECK(std::abs(treated / n - 0.5) <= 0.01);
  CHECK(noise_sq / n == doctest::Approx(0.0025).epsilon(0.03));
}

TEST_CASE("generators are deterministic per seed") {
  SeededRng a(5), b(5);
  const Dataset da = generate_synthetic(a, 100), db = generate_synthetic(b, 100);
  CHECK(da.x == db.x);
  CHECK(da.t == db.t);
  CHECK(da.y == db.y);
  SeededRng c(6), e(6);
  const SemiSynthSpec spec = clinical_preset();
  const Dataset sc = generate_semisynthetic(c, 50, spec), se = generate_semisynthetic(e, 50, spec);
  CHECK(sc.x == se.x);
  CHECK(sc.y == se.y);
}

TEST_CASE("semi-synthetic null effect") {
  SemiSynthSpec spec;
  spec.beta0 = 2.5;
  SeededRng rng(7);
  const Dataset d = generate_semisynthetic(rng, 20000, spec);
  REQUIRE(d.dim() == spec.d_dim + spec.im_dim);
  CHECK(d.modality_blocks == std::vector<std::size_t>{spec.d_dim, spec.im_dim});
  double mean = 0, sq = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK((*d.mu1)[i] - (*d.mu0)[i] == 0.0);
    CHECK((*d.mu0)[i] == 2.5);
    const double r = (*d.y0)[i] - 2.5;
    mean += r;
    sq += r * r;
  }
  const double n = static_cast<double>(d.size());
  CHECK(std::abs(mean / n) <= 4 * std::sqrt(0.1 / n));
  CHECK(sq / n == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("semi-synthetic category effect reads off the active category") {
  SemiSynthSpec spec;
  spec.beta_t1 = {{0, 0.5}, {1, -1.0}, {2, 2.0}};
  const double effect[] = {0.5, -1.0, 2.0};
  SeededRng rng(8);
  const Dataset d = generate_semisynthetic(rng, 500, spec);
  std::size_t seen[3] = {};
  for (std::size_t i = 0; i < d.size(); ++i) {
    int active = -1, hot = 0;
    for (std::size_t k = 0; k < spec.im_dim; ++k) {
      const double v = d.x(i, spec.d_dim + k);
      CHECK((v == 0.0 || v == 1.0));
      if (v == 1.0) {
        active = static_cast<int>(k);
        ++hot;
      }
    }
    REQUIRE(hot == 1);
    ++seen[active];
    CHECK((*d.mu1)[i] - (*d.mu0)[i] == doctest::Approx(effect[active]).epsilon(1e-15));
  }
  for (std::size_t c : seen) CHECK(c > 100);
}

TEST_CASE("semi-synthetic interaction terms") {
  SemiSynthSpec spec;
  spec.beta1 = {{1, 0.7}};
  spec.beta3 = {{0 * 4 + 2, 1.5}};
  spec.beta_t2 = {{3 * 3 + 1, -0.4}};
  SeededRng rng(9);
  const Dataset d = generate_semisynthetic(rng, 200, spec);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double mu0 = 0.7 * d.x(i, 1) + 1.5 * d.x(i, 0) * d.x(i, 2);
    CHECK((*d.mu0)[i] == doctest::Approx(mu0).epsilon(1e-14).scale(1.0));
    const double cate = -0.4 * d.x(i, 3) * d.x(i, 4 + 1);
    CHECK((*d.mu1)[i] - (*d.mu0)[i] == doctest::Approx(cate).epsilon(1e-14).scale(1.0));
  }
}

TEST_CASE("propensity assignment hits the requested treated fraction") {
  SemiSynthSpec spec;
  PropensityAssignment pa;
  pa.beta_t = {0.8, -0.5, 0.3, 0.0, 1.0, -1.0, 0.5};
  pa.p2 = 0.1;
  spec.assignment = pa;
  SeededRng rng(10);
  const Dataset d = generate_semisynthetic(rng, 10000, spec);
  double treated = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    treated += d.t[i];
    const double p = (*d.propensity)[i];
    CHECK(p >= kPropensityClamp);
    CHECK(p <= 1.0 - kPropensityClamp);
  }
  CHECK(std::abs(treated / 10000.0 - 0.1) <= 0.02);
}

TEST_CASE("propensities are clamped when the ratio exceeds one") {
  SemiSynthSpec spec;
  PropensityAssignment pa;
  pa.beta_t = {8.0, 0, 0, 0, 0, 0, 0};
  pa.p2 = 0.9;
  spec.assignment = pa;
  SeededRng rng(11);
  const Dataset d = generate_semisynthetic(rng, 2000, spec);
  bool hit_upper = false;
  for (double p : *d.propensity) {
    CHECK(p >= kPropensityClamp);
    CHECK(p <= 1.0 - kPropensityClamp);
    hit_upper = hit_upper || p == 1.0 - kPropensityClamp;
  }
  CHECK(hit_upper);
}

TEST_CASE("randomized assignment") {
  SemiSynthSpec spec;
  spec.assignment = RandomizedAssignment{0.3};
  SeededRng rng(12);
  const Dataset d = generate_semisynthetic(rng, 20000, spec);
  double treated = 0;
  for (int t : d.t) treated += t;
  CHECK(std::abs(treated / 20000.0 - 0.3) <= 0.015);
}

TEST_CASE("semi-synthetic spec validation") {
  SemiSynthSpec spec;
  spec.beta1 = {{4, 1.0}};
  CHECK(kind_of([&] { validate(spec); }) == ErrorKind::kSpecMismatch);
  spec = {};
  spec.beta3 = {{16, 1.0}};
  CHECK(kind_of([&] { validate(spec); }) == ErrorKind::kSpecMismatch);
  spec = {};
  spec.beta_t2 = {{12, 1.0}};
  CHECK(kind_of([&] { validate(spec); }) == ErrorKind::kSpecMismatch);
  spec = {};
  spec.assignment = RandomizedAssignment{1.5};
  CHECK(kind_of([&] { validate(spec); }) == ErrorKind::kSpecMismatch);
  CHECK_NOTHROW(validate(clinical_preset()));
}

TEST_CASE("dataset CSV round trip is bitwise") {
  SeededRng rng(13);
  const Dataset d = generate_semisynthetic(rng, 300, clinical_preset());
  const std::string path = (scratch_dir() / "roundtrip.csv").string();
  write_dataset(d, path);
  const Dataset r = read_dataset(path);
  CHECK(r.x == d.x);
  CHECK(r.t == d.t);
  CHECK(r.y == d.y);
  CHECK(*r.y0 == *d.y0);
  CHECK(*r.y1 == *d.y1);
  CHECK(*r.mu0 == *d.mu0);
  CHECK(*r.mu1 == *d.mu1);
  CHECK(*r.propensity == *d.propensity);
  CHECK(r.modality_blocks == d.modality_blocks);
  CHECK(r.treatments == 2);
}

TEST_CASE("factual-only data round trips without ground-truth columns") {
  Dataset d;
  d.x = DenseMatrix{{0.1, 1e-300}, {-2.5, 3.0}};
  d.t = {0, 2};
  d.treatments = 3;
  d.y = {std::nextafter(1.0, 2.0), -0.0};
  const std::string path = (scratch_dir() / "factual.csv").string();
  write_dataset(d, path);
  const Dataset r = read_dataset(path);
  CHECK(r.x == d.x);
  CHECK(r.y == d.y);
  CHECK(r.t == d.t);
  CHECK(r.treatments == 3);
  CHECK_FALSE(r.y0.has_value());
}

TEST_CASE("reading data without a sidecar assumes two arms") {
  const fs::path path = scratch_dir() / "plain.csv";
  fs::remove(fs::path(path.string() + ".meta.json"));
  write_file(path, "x_0,t,y\n0.5,1,2.0\n-1,0,0.25\n");
  const Dataset d = read_dataset(path.string());
  CHECK(d.size() == 2);
  CHECK(d.treatments == 2);
  CHECK(d.y[1] == 0.25);
}

TEST_CASE("schema and parse errors") {
  const fs::path dir = scratch_dir();
  SUBCASE("missing t column") {
    write_file(dir / "no_t.csv", "x_0,y\n0.5,2.0\n");
    CHECK(kind_of([&] { read_dataset((dir / "no_t.csv").string()); }) == ErrorKind::kSchemaError);
  }
  SUBCASE("treatment outside a binary dataset") {
    write_file(dir / "bad_t.csv", "x_0,t,y\n0.5,1,2.0\n0.1,2,1.0\n");
    CHECK(kind_of([&] { read_dataset((dir / "bad_t.csv").string()); }) == ErrorKind::kParseError);
    CHECK(message_of([&] { read_dataset((dir / "bad_t.csv").string()); }).find("line 3") !=
          std::string::npos);
  }
  SUBCASE("non-numeric cell") {
    write_file(dir / "bad_num.csv", "x_0,t,y\n0.5,1,abc\n");
    CHECK(kind_of([&] { read_dataset((dir / "bad_num.csv").string()); }) == ErrorKind::kParseError);
  }
  SUBCASE("ragged row") {
    write_file(dir / "ragged.csv", "x_0,t,y\n0.5,1\n");
    CHECK(kind_of([&] { read_dataset((dir / "ragged.csv").string()); }) == ErrorKind::kParseError);
  }
  SUBCASE("missing file") {
    CHECK(kind_of([&] { read_dataset((dir / "absent.csv").string()); }) == ErrorKind::kIoError);
  }
}

TEST_CASE("dataset validation") {
  Dataset d;
  d.x = DenseMatrix(0, 1);
  CHECK(kind_of([&] { validate(d); }) == ErrorKind::kEmptyDataset);
  d.x = DenseMatrix{{1.0}, {2.0}};
  d.t = {0, 1};
  d.y = {1.0};
  CHECK(kind_of([&] { validate(d); }) == ErrorKind::kDimensionMismatch);
  d.y = {1.0, 2.0};
  d.t = {0, 3};
  CHECK(kind_of([&] { validate(d); }) == ErrorKind::kNonBinaryTreatment);
  d.treatments = 3;
  CHECK(kind_of([&] { validate(d); }) == ErrorKind::kSchemaError);
}
