#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmde/gpkernels.hpp"
#include "cmde/learner.hpp"
#include "cmde/numerics.hpp"

namespace cmde {

// Monte-Carlo estimate of E[f(x) f(x')^T] over freshly initialized
// baselearners, stacked point-major / task-minor, with per-entry standard
// errors and the per-entry sample mean of f.
struct EmpiricalCovariance {
  DenseMatrix covariance;
  DenseMatrix standard_error;
  std::vector<double> mean;
  std::vector<double> mean_standard_error;
  std::size_t draws = 0;
};

// Draw d initializes its baselearner from the d-th split of Rng(seed).
EmpiricalCovariance empirical_prior_covariance(const CoregionalizationSpec& spec,
                                               std::span<const NetworkArchitecture> architectures,
                                               const DenseMatrix& grid, std::size_t draws,
                                               std::uint64_t seed,
                                               const std::optional<ModalityPlan>& plan = std::nullopt);

// Infinite-width target: stacked_covariance of implied_matrix_kernel.
DenseMatrix analytic_prior_covariance(const CoregionalizationSpec& spec,
                                      std::span<const NetworkArchitecture> architectures,
                                      const DenseMatrix& grid,
                                      const std::optional<ModalityPlan>& plan = std::nullopt);

struct WidthResult {
  std::size_t width;
  std::vector<double> errors;  // one per replicate
  double mean_error;
  double sd_error;
  double elapsed_seconds;
};

struct ConvergenceReport {
  CoregionalizationSpec spec;
  std::vector<NetworkArchitecture> architectures;  // hidden widths replaced per entry
  DenseMatrix grid;
  std::size_t draws = 0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::vector<WidthResult> widths;
  bool non_increasing = false;
};

// Every hidden layer of every architecture is set to each width in turn;
// replicate r uses seed + r. Widths must be strictly increasing (>= 2 of them).
ConvergenceReport convergence_sweep(const CoregionalizationSpec& spec,
                                    std::span<const NetworkArchitecture> architectures,
                                    std::span<const std::size_t> widths, std::size_t draws,
                                    const DenseMatrix& grid, std::uint64_t seed,
                                    std::size_t replicates = 10,
                                    const std::optional<ModalityPlan>& plan = std::nullopt);

nlohmann::ordered_json to_json(const ConvergenceReport& report);
// Timing stays in the JSON report so the CSV is reproducible bitwise.
void write_convergence_csv(const ConvergenceReport& report, const std::string& path);
void write_convergence_svg(const ConvergenceReport& report, const std::string& path);

}  // namespace cmde
