#include "cmde/cmgp.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "cmde/parallel.hpp"
#include "cmde/serialize.hpp"

namespace cmde {

namespace {

constexpr std::size_t kQueryChunk = 256;

DenseMatrix row_slice(const DenseMatrix& x, std::size_t begin, std::size_t end) {
  DenseMatrix out(end - begin, x.cols());
  for (std::size_t i = begin; i < end; ++i) {
    std::copy(x.row(i).begin(), x.row(i).end(), out.row(i - begin).begin());
  }
  return out;
}

GpPrediction predict_impl(const GpPosterior& gp, const DenseMatrix& queries, bool with_cov) {
  if (queries.cols() != gp.x.cols()) {
    std::ostringstream msg;
    msg << "queries have " << queries.cols() << " covariates, posterior was fit on "
        << gp.x.cols();
    throw Error(ErrorKind::kDimensionMismatch, msg.str());
  }
  const std::size_t n = gp.x.rows();
  const std::size_t m = queries.rows();
  const std::size_t c_count = gp.kernel.outputs();
  const std::size_t qn = gp.kernel.kernels.size();
  GpPrediction out{DenseMatrix(m, c_count), DenseMatrix(with_cov ? m : 0, c_count * c_count),
                   DenseMatrix(m, c_count - 1), DenseMatrix(with_cov ? m : 0, c_count - 1)};
  for (std::size_t begin = 0; begin < m; begin += kQueryChunk) {
    const std::size_t end = std::min(m, begin + kQueryChunk);
    const DenseMatrix chunk = row_slice(queries, begin, end);
    std::vector<DenseMatrix> cross;  // per q: n x chunk
    std::vector<DenseMatrix> self;   // per q: prior k_q(x*, x*)
    for (std::size_t q = 0; q < qn; ++q) {
      cross.push_back(cross_gram(gp.kernel.kernels[q], gp.x, chunk));
      if (with_cov) {
        DenseMatrix diag(chunk.rows(), 1);
        for (std::size_t r = 0; r < chunk.rows(); ++r) {
          diag(r, 0) = kernel_value(gp.kernel.kernels[q], chunk.row(r), chunk.row(r));
        }
        self.push_back(std::move(diag));
      }
    }
    parallel_for(end - begin, [&](std::size_t r) {
      const std::size_t row = begin + r;
      // kstar[c][i] = Cov(f_c(x*), y_i)
      std::vector<std::vector<double>> kstar(c_count, std::vector<double>(n, 0.0));
      for (std::size_t q = 0; q < qn; ++q) {
        const auto& b = gp.kernel.coregionalization[q];
        for (std::size_t i = 0; i < n; ++i) {
          const double kv = cross[q](i, r);
          const auto ti = static_cast<std::size_t>(gp.t[i]);
          for (std::size_t c = 0; c < c_count; ++c) kstar[c][i] += kv * b(ti, c);
        }
      }
      for (std::size_t c = 0; c < c_count; ++c) out.mean(row, c) = dot(kstar[c], gp.weights);
      for (std::size_t c = 1; c < c_count; ++c) {
        out.cate_mean(row, c - 1) = out.mean(row, c) - out.mean(row, 0);
      }
      if (!with_cov) return;
      std::vector<std::vector<double>> v(c_count);
      for (std::size_t c = 0; c < c_count; ++c) v[c] = solve_lower(gp.factor.lower, kstar[c]);
      for (std::size_t s = 0; s < c_count; ++s) {
        for (std::size_t t = 0; t < c_count; ++t) {
          double prior = 0.0;
          for (std::size_t q = 0; q < qn; ++q) prior += self[q](r, 0) * gp.kernel.coregionalization[q](s, t);
          out.covariance(row, s * c_count + t) = prior - dot(v[s], v[t]);
        }
      }
      for (std::size_t c = 1; c < c_count; ++c) {
        const double var = out.covariance(row, c * c_count + c) + out.covariance(row, 0) -
                           2.0 * out.covariance(row, c);
        out.cate_variance(row, c - 1) = var;
      }
    });
  }
  return out;
}

}  // namespace

GpPosterior fit(const Dataset& data, const MatrixKernel& kernel, double noise_variance) {
  if (data.size() == 0) throw Error(ErrorKind::kEmptyDataset, "cannot fit a GP on zero rows");
  if (!(noise_variance >= 0.0)) {
    throw Error(ErrorKind::kConfigError, "noise variance must be >= 0");
  }
  validate(kernel);
  const std::size_t n = data.size();
  const std::size_t c_count = kernel.outputs();
  for (std::size_t i = 0; i < n; ++i) {
    if (data.t[i] < 0 || static_cast<std::size_t>(data.t[i]) >= c_count) {
      std::ostringstream msg;
      msg << "row " << i << " has treatment " << data.t[i] << ", kernel has " << c_count
          << " tasks";
      throw Error(ErrorKind::kDimensionMismatch, msg.str());
    }
  }
  GpPosterior gp;
  gp.x = data.x;
  gp.t = data.t;
  gp.y = data.y;
  gp.kernel = kernel;
  gp.noise_variance = noise_variance;
  gp.observed_covariance = DenseMatrix(n, n);
  for (std::size_t q = 0; q < kernel.kernels.size(); ++q) {
    const DenseMatrix g = gram(kernel.kernels[q], data.x);
    const auto& b = kernel.coregionalization[q];
    for (std::size_t i = 0; i < n; ++i) {
      const auto ti = static_cast<std::size_t>(data.t[i]);
      for (std::size_t j = 0; j < n; ++j) {
        gp.observed_covariance(i, j) += g(i, j) * b(ti, static_cast<std::size_t>(data.t[j]));
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) gp.observed_covariance(i, i) += noise_variance;
  gp.factor = factorize_spd(gp.observed_covariance);
  gp.weights = cholesky_solve(gp.factor.lower, gp.y);
  return gp;
}

GpPrediction posterior(const GpPosterior& gp, const DenseMatrix& queries) {
  return predict_impl(gp, queries, true);
}

GpPrediction posterior_mean(const GpPosterior& gp, const DenseMatrix& queries) {
  return predict_impl(gp, queries, false);
}

double solve_residual(const GpPosterior& gp) {
  const auto ky = matvec(gp.observed_covariance, gp.weights);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ky.size(); ++i) {
    num += (ky[i] - gp.y[i]) * (ky[i] - gp.y[i]);
    den += gp.y[i] * gp.y[i];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

void write_posterior_csv(const std::string& path, const DenseMatrix& queries,
                         const GpPrediction& prediction) {
  const std::size_t d = queries.cols();
  const std::size_t c_count = prediction.mean.cols();
  const bool has_cov = prediction.covariance.rows() == queries.rows();
  std::vector<std::string> header;
  if (d == 1) {
    header.push_back("x");
  } else {
    for (std::size_t j = 0; j < d; ++j) header.push_back("x_" + std::to_string(j));
  }
  const bool two = c_count == 2;
  for (std::size_t c = 0; c < c_count; ++c) header.push_back("mean" + std::to_string(c));
  for (std::size_t c = 1; c < c_count; ++c) header.push_back(two ? "cate" : "cate" + std::to_string(c));
  if (has_cov) {
    for (std::size_t c = 0; c < c_count; ++c) header.push_back("sd" + std::to_string(c));
    for (std::size_t c = 1; c < c_count; ++c) {
      header.push_back(two ? "cate_sd" : "cate_sd" + std::to_string(c));
    }
  }
  DenseMatrix table(queries.rows(), header.size());
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < d; ++j) table(i, k++) = queries(i, j);
    for (std::size_t c = 0; c < c_count; ++c) table(i, k++) = prediction.mean(i, c);
    for (std::size_t c = 1; c < c_count; ++c) table(i, k++) = prediction.cate_mean(i, c - 1);
    if (!has_cov) continue;
    for (std::size_t c = 0; c < c_count; ++c) {
      table(i, k++) = std::sqrt(std::max(0.0, prediction.covariance(i, c * c_count + c)));
    }
    for (std::size_t c = 1; c < c_count; ++c) {
      table(i, k++) = std::sqrt(std::max(0.0, prediction.cate_variance(i, c - 1)));
    }
  }
  write_matrix_csv(path, header, table);
}

}  // namespace cmde
