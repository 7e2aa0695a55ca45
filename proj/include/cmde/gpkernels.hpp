#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmde/learner.hpp"
#include "cmde/nets.hpp"
#include "cmde/numerics.hpp"

namespace cmde {

// Arcsine closed form with x~ = [1, x] and Sigma = sigma_w^2 * I of size D + 1:
// (2/pi) asin(2 x~'S x~' / sqrt((1 + 2 x~'S x~)(1 + 2 x~''S x~'))).
double arcsine_kernel(std::span<const double> x, std::span<const double> xp,
                      double prior_variance);

// Output covariance of an infinitely wide nngp-initialized network with
// `depth` hidden layers: K^0 = sb2 + s2 x.x', K^l = sb2 + s2 E[phi(u) phi(v)]
// with (u, v) ~ N(0, K^{l-1}). Closed forms exist for relu (arc-cosine), erf
// (arcsine) and identity; other activations throw kInvalidArchitecture.
double nngp_kernel(Activation activation, std::span<const double> x, std::span<const double> xp,
                   double prior_variance, double bias_variance, std::size_t depth);

// Relu recursion; bias_variance = prior_variance matches the nets prior.
double arccosine_relu_kernel(std::span<const double> x, std::span<const double> xp,
                             double prior_variance, std::size_t depth);
double arccosine_relu_kernel(std::span<const double> x, std::span<const double> xp,
                             double prior_variance, double bias_variance, std::size_t depth);

// (1/draws) sum_d f_d(X) f_d(X)^T over independently initialized scalar
// networks {D, hidden..., 1}. Draw d uses the d-th split of Rng(seed).
DenseMatrix monte_carlo_kernel(const NetworkArchitecture& architecture, std::size_t draws,
                               std::uint64_t seed, const DenseMatrix& x);

enum class KernelKind { kArcsineErf, kErfNetwork, kArccosineRelu, kMonteCarlo, kProduct };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view name);

struct MonteCarloConfig {
  std::size_t draws = 20000;
  std::uint64_t seed = 0;
};

// kArcsineErf: the bare arcsine formula. kErfNetwork / kArccosineRelu: the
// nngp_kernel recursion. kMonteCarlo: monte_carlo_kernel with `architecture`.
// kProduct: product of `factors`, factor m reading covariate block m.
// Every value is multiplied by `scale`.
struct ScalarKernel {
  KernelKind kind = KernelKind::kArcsineErf;
  double prior_variance = 0.1;
  double bias_variance = -1.0;  // negative: same as prior_variance
  std::size_t depth = 1;
  double scale = 1.0;
  NetworkArchitecture architecture;
  MonteCarloConfig mc;
  std::vector<ScalarKernel> factors;
  std::vector<std::size_t> blocks;

  static ScalarKernel arcsine(double prior_variance);
  static ScalarKernel erf_network(double prior_variance, std::size_t depth = 1);
  static ScalarKernel relu_network(double prior_variance, std::size_t depth = 1);
  static ScalarKernel monte_carlo(NetworkArchitecture architecture, MonteCarloConfig mc);
  static ScalarKernel product(std::vector<ScalarKernel> factors, std::vector<std::size_t> blocks,
                              double scale = 1.0);

  double effective_bias_variance() const;
};

// Covariance of Sum_j Prod_m (Z_m)_j equals fusion_dim * Prod_m k_m when every
// encoder output coordinate has kernel k_m; this returns that kernel for an
// architecture applied per modality block.
ScalarKernel fused_network_kernel(const ScalarKernel& per_block, const ModalityPlan& plan);

// Pointwise value; kMonteCarlo evaluates a two-point Gram matrix.
double kernel_value(const ScalarKernel& k, std::span<const double> x, std::span<const double> xp);

// Gram matrix over the rows of x (symmetric by construction) and the cross
// matrix between rows of a and rows of b.
DenseMatrix gram(const ScalarKernel& k, const DenseMatrix& x);
DenseMatrix cross_gram(const ScalarKernel& k, const DenseMatrix& a, const DenseMatrix& b);

// Product over modalities of kernels[m](x_m, x'_m); blocks are consecutive.
double multiplicative_kernel(std::span<const ScalarKernel> kernels,
                             std::span<const std::size_t> blocks, std::span<const double> x,
                             std::span<const double> xp);

struct MatrixKernel {
  std::vector<ScalarKernel> kernels;
  std::vector<DenseMatrix> coregionalization;

  std::size_t outputs() const { return coregionalization.front().rows(); }
};

// Throws kSpecMismatch for empty, unequal-length, non-square, mismatched or
// asymmetric inputs.
void validate(const MatrixKernel& mk);

// Kernel that the baselearner prior of `spec` converges to: per block, the
// network kernel of its architecture (fused across modalities when a plan is
// given) paired with B_q.
MatrixKernel implied_matrix_kernel(const CoregionalizationSpec& spec,
                                   std::span<const NetworkArchitecture> architectures,
                                   const std::optional<ModalityPlan>& plan = std::nullopt);

// Network kernel of a single architecture; kInvalidArchitecture when no
// closed form exists for its activation.
ScalarKernel network_kernel(const NetworkArchitecture& architecture);

// sum_q k_q(x, x') B_q
DenseMatrix matrix_kernel_eval(const MatrixKernel& mk, std::span<const double> x,
                               std::span<const double> xp);

// NC x NC covariance in point-major, task-minor order.
DenseMatrix stacked_covariance(const MatrixKernel& mk, const DenseMatrix& x);

void write_gram_csv(const DenseMatrix& gram, const std::string& path);

}  // namespace cmde
