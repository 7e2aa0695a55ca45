#include "cmde/gpkernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "cmde/parallel.hpp"
#include "cmde/serialize.hpp"

namespace cmde {

namespace {

constexpr double kClampTolerance = 1e-12;

double clamp_unit(double v) {
  if (v > 1.0 && v <= 1.0 + kClampTolerance) return 1.0;
  if (v < -1.0 && v >= -1.0 - kClampTolerance) return -1.0;
  return std::clamp(v, -1.0, 1.0);
}

void check_same_dim(std::span<const double> x, std::span<const double> xp) {
  if (x.size() != xp.size()) {
    std::ostringstream msg;
    msg << "kernel inputs have " << x.size() << " and " << xp.size() << " entries";
    throw Error(ErrorKind::kDimensionMismatch, msg.str());
  }
}

// E[phi(u) phi(v)] for (u, v) ~ N(0, [[a, c], [c, b]]).
double gaussian_expectation(Activation act, double a, double b, double c) {
  switch (act) {
    case Activation::kRelu: {
      const double norm = std::sqrt(a * b);
      if (norm == 0.0) return 0.0;
      const double theta = std::acos(clamp_unit(c / norm));
      return norm / (2.0 * std::numbers::pi) *
             (std::sin(theta) + (std::numbers::pi - theta) * std::cos(theta));
    }
    case Activation::kErf:
      return 2.0 / std::numbers::pi *
             std::asin(clamp_unit(2.0 * c / std::sqrt((1.0 + 2.0 * a) * (1.0 + 2.0 * b))));
    case Activation::kIdentity: return c;
    default: break;
  }
  throw Error(ErrorKind::kInvalidArchitecture,
              "no closed-form kernel for activation " + std::string(to_string(act)));
}

std::vector<std::span<const double>> split_blocks(std::span<const double> x,
                                                  std::span<const std::size_t> blocks) {
  std::size_t total = 0;
  for (std::size_t b : blocks) total += b;
  if (total != x.size()) {
    std::ostringstream msg;
    msg << "modality blocks cover " << total << " covariates, input has " << x.size();
    throw Error(ErrorKind::kSpecMismatch, msg.str());
  }
  std::vector<std::span<const double>> parts;
  std::size_t offset = 0;
  for (std::size_t b : blocks) {
    parts.push_back(x.subspan(offset, b));
    offset += b;
  }
  return parts;
}

DenseMatrix column_block(const DenseMatrix& x, std::size_t offset, std::size_t width) {
  DenseMatrix out(x.rows(), width);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < width; ++j) out(i, j) = x(i, offset + j);
  }
  return out;
}

}  // namespace

double arcsine_kernel(std::span<const double> x, std::span<const double> xp,
                      double prior_variance) {
  check_same_dim(x, xp);
  const double sxx = prior_variance * (1.0 + dot(x, x));
  const double syy = prior_variance * (1.0 + dot(xp, xp));
  const double sxy = prior_variance * (1.0 + dot(x, xp));
  return 2.0 / std::numbers::pi *
         std::asin(clamp_unit(2.0 * sxy / std::sqrt((1.0 + 2.0 * sxx) * (1.0 + 2.0 * syy))));
}

double nngp_kernel(Activation activation, std::span<const double> x, std::span<const double> xp,
                   double prior_variance, double bias_variance, std::size_t depth) {
  check_same_dim(x, xp);
  if (!(prior_variance > 0.0) || bias_variance < 0.0) {
    throw Error(ErrorKind::kInvalidArchitecture, "kernel variances must be positive");
  }
  double kxx = bias_variance + prior_variance * dot(x, x);
  double kyy = bias_variance + prior_variance * dot(xp, xp);
  double kxy = bias_variance + prior_variance * dot(x, xp);
  for (std::size_t l = 0; l < depth; ++l) {
    const double nxy = bias_variance + prior_variance * gaussian_expectation(activation, kxx, kyy, kxy);
    const double nxx = bias_variance + prior_variance * gaussian_expectation(activation, kxx, kxx, kxx);
    const double nyy = bias_variance + prior_variance * gaussian_expectation(activation, kyy, kyy, kyy);
    kxx = nxx;
    kyy = nyy;
    kxy = nxy;
  }
  return kxy;
}

double arccosine_relu_kernel(std::span<const double> x, std::span<const double> xp,
                             double prior_variance, std::size_t depth) {
  return arccosine_relu_kernel(x, xp, prior_variance, prior_variance, depth);
}

double arccosine_relu_kernel(std::span<const double> x, std::span<const double> xp,
                             double prior_variance, double bias_variance, std::size_t depth) {
  if (depth < 1) throw Error(ErrorKind::kInvalidArchitecture, "relu kernel needs depth >= 1");
  return nngp_kernel(Activation::kRelu, x, xp, prior_variance, bias_variance, depth);
}

DenseMatrix monte_carlo_kernel(const NetworkArchitecture& architecture, std::size_t draws,
                               std::uint64_t seed, const DenseMatrix& x) {
  if (draws < 1) throw Error(ErrorKind::kInvalidArchitecture, "monte carlo kernel needs draws >= 1");
  const std::size_t n = x.rows();
  std::vector<std::size_t> widths{x.cols()};
  widths.insert(widths.end(), architecture.hidden_widths.begin(), architecture.hidden_widths.end());
  widths.push_back(1);
  validate_widths(widths, architecture.prior_variance);
  SeededRng root(seed);
  std::vector<SeededRng> streams = root.split(draws);
  std::vector<double> outputs(draws * n);
  parallel_for(draws, [&](std::size_t d) {
    const MlpNetwork net = init_network(streams[d], widths, architecture.activation,
                                        architecture.prior_variance, architecture.init_mode);
    ForwardTrace trace;
    for (std::size_t i = 0; i < n; ++i) {
      forward_trace(net, x.row(i), trace);
      outputs[d * n + i] = trace.output()[0];
    }
  });
  DenseMatrix g(n, n);
  for (std::size_t d = 0; d < draws; ++d) {
    const double* f = outputs.data() + d * n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) g(i, j) += f[i] * f[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(draws);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      g(i, j) *= inv;
      g(j, i) = g(i, j);
    }
  }
  return g;
}

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::kArcsineErf: return "arcsineErf";
    case KernelKind::kErfNetwork: return "erfNetwork";
    case KernelKind::kArccosineRelu: return "arccosineRelu";
    case KernelKind::kMonteCarlo: return "monteCarlo";
    case KernelKind::kProduct: return "product";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(std::string_view name) {
  for (auto k : {KernelKind::kArcsineErf, KernelKind::kErfNetwork, KernelKind::kArccosineRelu,
                 KernelKind::kMonteCarlo, KernelKind::kProduct}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::kConfigError, "unknown kernel kind '" + std::string(name) + "'");
}

ScalarKernel ScalarKernel::arcsine(double prior_variance) {
  ScalarKernel k;
  k.kind = KernelKind::kArcsineErf;
  k.prior_variance = prior_variance;
  return k;
}

ScalarKernel ScalarKernel::erf_network(double prior_variance, std::size_t depth) {
  ScalarKernel k;
  k.kind = KernelKind::kErfNetwork;
  k.prior_variance = prior_variance;
  k.depth = depth;
  return k;
}

ScalarKernel ScalarKernel::relu_network(double prior_variance, std::size_t depth) {
  ScalarKernel k;
  k.kind = KernelKind::kArccosineRelu;
  k.prior_variance = prior_variance;
  k.depth = depth;
  return k;
}

ScalarKernel ScalarKernel::monte_carlo(NetworkArchitecture architecture, MonteCarloConfig mc) {
  ScalarKernel k;
  k.kind = KernelKind::kMonteCarlo;
  k.prior_variance = architecture.prior_variance;
  k.depth = architecture.hidden_widths.size();
  k.architecture = std::move(architecture);
  k.mc = mc;
  return k;
}

ScalarKernel ScalarKernel::product(std::vector<ScalarKernel> factors,
                                   std::vector<std::size_t> blocks, double scale) {
  if (factors.size() != blocks.size() || factors.empty()) {
    throw Error(ErrorKind::kSpecMismatch, "product kernel needs one factor per modality block");
  }
  ScalarKernel k;
  k.kind = KernelKind::kProduct;
  k.factors = std::move(factors);
  k.blocks = std::move(blocks);
  k.scale = scale;
  return k;
}

double ScalarKernel::effective_bias_variance() const {
  return bias_variance < 0.0 ? prior_variance : bias_variance;
}

ScalarKernel fused_network_kernel(const ScalarKernel& per_block, const ModalityPlan& plan) {
  std::vector<ScalarKernel> factors(plan.block_dims.size(), per_block);
  return ScalarKernel::product(std::move(factors), plan.block_dims,
                               static_cast<double>(plan.fusion_dim));
}

double multiplicative_kernel(std::span<const ScalarKernel> kernels,
                             std::span<const std::size_t> blocks, std::span<const double> x,
                             std::span<const double> xp) {
  if (kernels.size() != blocks.size() || kernels.empty()) {
    std::ostringstream msg;
    msg << kernels.size() << " kernels for " << blocks.size() << " modalities";
    throw Error(ErrorKind::kSpecMismatch, msg.str());
  }
  check_same_dim(x, xp);
  const auto xs = split_blocks(x, blocks);
  const auto ys = split_blocks(xp, blocks);
  double p = 1.0;
  for (std::size_t m = 0; m < kernels.size(); ++m) p *= kernel_value(kernels[m], xs[m], ys[m]);
  return p;
}

double kernel_value(const ScalarKernel& k, std::span<const double> x, std::span<const double> xp) {
  switch (k.kind) {
    case KernelKind::kArcsineErf: return k.scale * arcsine_kernel(x, xp, k.prior_variance);
    case KernelKind::kErfNetwork:
      return k.scale * nngp_kernel(Activation::kErf, x, xp, k.prior_variance,
                                   k.effective_bias_variance(), k.depth);
    case KernelKind::kArccosineRelu:
      return k.scale * arccosine_relu_kernel(x, xp, k.prior_variance, k.effective_bias_variance(),
                                             k.depth);
    case KernelKind::kMonteCarlo: {
      check_same_dim(x, xp);
      DenseMatrix pts(2, x.size());
      std::copy(x.begin(), x.end(), pts.row(0).begin());
      std::copy(xp.begin(), xp.end(), pts.row(1).begin());
      return k.scale * monte_carlo_kernel(k.architecture, k.mc.draws, k.mc.seed, pts)(0, 1);
    }
    case KernelKind::kProduct: return k.scale * multiplicative_kernel(k.factors, k.blocks, x, xp);
  }
  return 0.0;
}

DenseMatrix gram(const ScalarKernel& k, const DenseMatrix& x) {
  const std::size_t n = x.rows();
  if (k.kind == KernelKind::kMonteCarlo) {
    return scale(monte_carlo_kernel(k.architecture, k.mc.draws, k.mc.seed, x), k.scale);
  }
  if (k.kind == KernelKind::kProduct) {
    std::size_t total = 0;
    for (std::size_t b : k.blocks) total += b;
    if (total != x.cols() || k.factors.size() != k.blocks.size()) {
      throw Error(ErrorKind::kSpecMismatch, "product kernel blocks do not cover the covariates");
    }
    DenseMatrix g(n, n, k.scale);
    std::size_t offset = 0;
    for (std::size_t m = 0; m < k.factors.size(); ++m) {
      const DenseMatrix gm = gram(k.factors[m], column_block(x, offset, k.blocks[m]));
      offset += k.blocks[m];
      for (std::size_t i = 0; i < g.values().size(); ++i) g.values()[i] *= gm.values()[i];
    }
    return g;
  }
  DenseMatrix g(n, n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) g(i, j) = kernel_value(k, x.row(i), x.row(j));
  });
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  }
  return g;
}

DenseMatrix cross_gram(const ScalarKernel& k, const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "cross_gram inputs differ in dimension");
  }
  if (k.kind == KernelKind::kMonteCarlo || k.kind == KernelKind::kProduct) {
    DenseMatrix both(a.rows() + b.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) std::copy(a.row(i).begin(), a.row(i).end(), both.row(i).begin());
    for (std::size_t i = 0; i < b.rows(); ++i) {
      std::copy(b.row(i).begin(), b.row(i).end(), both.row(a.rows() + i).begin());
    }
    const DenseMatrix g = gram(k, both);
    DenseMatrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = g(i, a.rows() + j);
    }
    return out;
  }
  DenseMatrix out(a.rows(), b.rows());
  parallel_for(a.rows(), [&](std::size_t i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = kernel_value(k, a.row(i), b.row(j));
  });
  return out;
}

void validate(const MatrixKernel& mk) {
  if (mk.kernels.empty() || mk.kernels.size() != mk.coregionalization.size()) {
    throw Error(ErrorKind::kSpecMismatch, "matrix kernel needs one B_q per scalar kernel");
  }
  const std::size_t c = mk.coregionalization.front().rows();
  for (const auto& b : mk.coregionalization) {
    if (b.rows() != c || b.cols() != c) {
      throw Error(ErrorKind::kSpecMismatch, "coregionalization matrices disagree in size");
    }
    double max_abs = 0.0;
    for (double v : b.values()) max_abs = std::max(max_abs, std::abs(v));
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (std::abs(b(i, j) - b(j, i)) > 1e-12 * std::max(1.0, max_abs)) {
          throw Error(ErrorKind::kSpecMismatch, "coregionalization matrix is not symmetric");
        }
      }
    }
  }
}

ScalarKernel network_kernel(const NetworkArchitecture& architecture) {
  if (architecture.init_mode != InitMode::kNngp) {
    throw Error(ErrorKind::kInvalidArchitecture,
                "the unscaled prior has no infinite-width kernel; use init mode nngp");
  }
  const std::size_t depth = architecture.hidden_widths.size();
  switch (architecture.activation) {
    case Activation::kErf: return ScalarKernel::erf_network(architecture.prior_variance, depth);
    case Activation::kRelu: return ScalarKernel::relu_network(architecture.prior_variance, depth);
    default: break;
  }
  throw Error(ErrorKind::kInvalidArchitecture,
              "no closed-form kernel for activation " +
                  std::string(to_string(architecture.activation)));
}

MatrixKernel implied_matrix_kernel(const CoregionalizationSpec& spec,
                                   std::span<const NetworkArchitecture> architectures,
                                   const std::optional<ModalityPlan>& plan) {
  const auto bs = coregionalization_matrices(spec, spec.coefficients);
  if (architectures.size() != 1 && architectures.size() != bs.size()) {
    throw Error(ErrorKind::kSpecMismatch, "architecture count differs from block count");
  }
  MatrixKernel mk;
  for (std::size_t q = 0; q < bs.size(); ++q) {
    ScalarKernel k = network_kernel(architectures[architectures.size() == 1 ? 0 : q]);
    mk.kernels.push_back(plan ? fused_network_kernel(k, *plan) : k);
    mk.coregionalization.push_back(bs[q]);
  }
  return mk;
}

DenseMatrix matrix_kernel_eval(const MatrixKernel& mk, std::span<const double> x,
                               std::span<const double> xp) {
  validate(mk);
  const std::size_t c = mk.outputs();
  DenseMatrix out(c, c);
  for (std::size_t q = 0; q < mk.kernels.size(); ++q) {
    const double kv = kernel_value(mk.kernels[q], x, xp);
    const auto& b = mk.coregionalization[q];
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) out(i, j) += kv * b(i, j);
    }
  }
  return out;
}

DenseMatrix stacked_covariance(const MatrixKernel& mk, const DenseMatrix& x) {
  validate(mk);
  const std::size_t n = x.rows();
  const std::size_t c = mk.outputs();
  DenseMatrix out(n * c, n * c);
  for (std::size_t q = 0; q < mk.kernels.size(); ++q) {
    const DenseMatrix g = gram(mk.kernels[q], x);
    const auto& b = mk.coregionalization[q];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t s = 0; s < c; ++s) {
          for (std::size_t t = 0; t < c; ++t) out(i * c + s, j * c + t) += g(i, j) * b(s, t);
        }
      }
    }
  }
  return out;
}

void write_gram_csv(const DenseMatrix& gram, const std::string& path) {
  std::vector<std::string> header;
  for (std::size_t j = 0; j < gram.cols(); ++j) header.push_back("k_" + std::to_string(j));
  write_matrix_csv(path, header, gram);
}

}  // namespace cmde
