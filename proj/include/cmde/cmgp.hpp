#pragma once

#include <string>
#include <vector>

#include "cmde/datagen.hpp"
#include "cmde/gpkernels.hpp"
#include "cmde/numerics.hpp"

namespace cmde {

// Exact multi-task GP conditioned on factual observations: entry (i, j) of the
// observed covariance is K(x_i, x_j)[t_i, t_j] + noise_variance * delta_ij.
struct GpPosterior {
  DenseMatrix x;
  std::vector<int> t;
  std::vector<double> y;
  MatrixKernel kernel;
  double noise_variance = 0.0;
  DenseMatrix observed_covariance;
  CholeskyFactor factor;
  std::vector<double> weights;  // observed_covariance^{-1} y
};

// Throws kEmptyDataset, kConfigError for negative noise, kNotPositiveDefinite
// when the jitter escalation is exhausted.
GpPosterior fit(const Dataset& data, const MatrixKernel& kernel, double noise_variance);

// Treatment 0 is the reference arm: cate column c - 1 contrasts arm c with arm 0.
struct GpPrediction {
  DenseMatrix mean;           // M x C
  DenseMatrix covariance;     // M x (C * C), row-major C x C per query
  DenseMatrix cate_mean;      // M x (C - 1)
  DenseMatrix cate_variance;  // M x (C - 1); e^T Cov e
};

GpPrediction posterior(const GpPosterior& gp, const DenseMatrix& queries);
// Means only (no triangular solves); covariance columns are left empty.
GpPrediction posterior_mean(const GpPosterior& gp, const DenseMatrix& queries);

// ||K_obs v - y|| / ||y|| for the cached solve v.
double solve_residual(const GpPosterior& gp);

// Columns x_0..x_{D-1}, mean_c..., cate..., sd_c..., cate_sd...; for two arms
// this is x, mean0, mean1, cate, sd0, sd1, cate_sd.
void write_posterior_csv(const std::string& path, const DenseMatrix& queries,
                         const GpPrediction& prediction);

}  // namespace cmde
