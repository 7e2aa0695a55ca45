#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmde/nets.hpp"
#include "cmde/numerics.hpp"

namespace cmde {

enum class Variant { kIcm3, kLmc, kMultiTreatment, kTwoNet };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view name);

// Coefficient layout by variant:
//   icm3:            {alpha_H, alpha_T, alpha_HT}
//   lmc:             {alpha_H^q, alpha_T^q, alpha_HT^q} for q = 1..Q
//   multiTreatment:  {alpha_1..alpha_C} then alpha_cd for c < d in row-major order
//   twoNet:          {alpha_0, beta_0, alpha_1, beta_1}
// Only the upper triangle of the shared multi-treatment coefficients is stored,
// which makes alpha_cd = alpha_dc hold by construction.
struct CoregionalizationSpec {
  Variant variant = Variant::kIcm3;
  std::size_t components = 1;
  std::size_t treatments = 2;
  std::vector<double> coefficients;

  static CoregionalizationSpec icm3(double alpha_h, double alpha_t, double alpha_ht);
  static CoregionalizationSpec lmc(std::span<const std::array<double, 3>> per_component);
  static CoregionalizationSpec multi_treatment(std::size_t treatments,
                                               std::span<const double> group,
                                               std::span<const double> shared_upper);
  static CoregionalizationSpec two_net(double alpha0, double beta0, double alpha1, double beta1);
};

std::size_t coefficient_count(const CoregionalizationSpec& spec);
std::size_t block_count(const CoregionalizationSpec& spec);
// Throws kSpecMismatch when Q < 1, C < 2 or the coefficient set is incomplete.
void validate(const CoregionalizationSpec& spec);

// Position of alpha_cd (c < d, zero-based) within the multiTreatment layout.
std::size_t shared_coefficient_index(std::size_t treatments, std::size_t c, std::size_t d);

// Each term adds coefficient[coefficient] * f_component(x) to output `output`.
struct MixingTerm {
  std::size_t output;
  std::size_t component;
  std::size_t coefficient;
};

struct ComponentInfo {
  std::string name;
  std::size_t block;  // q for lmc, 0 otherwise
};

struct MixingLayout {
  std::size_t outputs = 2;
  std::size_t blocks = 1;
  std::vector<ComponentInfo> components;
  std::vector<MixingTerm> terms;
};

MixingLayout mixing_layout(const CoregionalizationSpec& spec);

// One C x C matrix per block: B_q = A_q A_q^T where A_q[c][k] collects the
// coefficients with which component k of block q enters output c.
std::vector<DenseMatrix> coregionalization_matrices(const CoregionalizationSpec& spec,
                                                    std::span<const double> coefficients);
// Single-block variants only (icm3, multiTreatment, twoNet, lmc with Q = 1).
DenseMatrix coregionalization_matrix(const CoregionalizationSpec& spec,
                                     std::span<const double> coefficients);

struct NetworkArchitecture {
  std::vector<std::size_t> hidden_widths{2048};
  Activation activation = Activation::kRelu;
  double prior_variance = 0.1;
  InitMode init_mode = InitMode::kNngp;
};

// Covariate vector split into consecutive modality blocks; every encoder emits
// a representation of length fusion_dim.
struct ModalityPlan {
  std::vector<std::size_t> block_dims;
  std::size_t fusion_dim = 16;

  std::size_t input_dim() const;
};

// One constituent function f_k. Without a modality plan it holds a single
// scalar-output network; with one it holds an encoder per modality and
// evaluates sum_j prod_m (Z_m)_j.
struct Component {
  std::vector<MlpNetwork> encoders;
};

// sum_j prod_m z[m][j]
double fuse(std::span<const std::vector<double>> representations);

class Baselearner {
 public:
  Baselearner(CoregionalizationSpec spec, std::vector<Component> components,
              std::optional<ModalityPlan> modality_plan, std::size_t input_dim);

  const CoregionalizationSpec& spec() const noexcept { return spec_; }
  const MixingLayout& layout() const noexcept { return layout_; }
  const std::optional<ModalityPlan>& modality_plan() const noexcept { return plan_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t treatments() const noexcept { return layout_.outputs; }

  std::span<const double> coefficients() const noexcept { return spec_.coefficients; }
  std::span<double> coefficients() noexcept { return spec_.coefficients; }
  std::span<const Component> components() const noexcept { return components_; }
  std::span<Component> components() noexcept { return components_; }

  std::size_t parameter_count() const;
  // Coefficients first, then every encoder of every component in order.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> values);
  double squared_norm() const;

 private:
  CoregionalizationSpec spec_;
  MixingLayout layout_;
  std::vector<Component> components_;
  std::optional<ModalityPlan> plan_;
  std::size_t input_dim_;
};

// `architectures` holds one entry shared by all blocks or one per lmc block.
Baselearner build_baselearner(SeededRng& rng, const CoregionalizationSpec& spec,
                              std::span<const NetworkArchitecture> architectures,
                              std::size_t input_dim,
                              const std::optional<ModalityPlan>& modality_plan = std::nullopt);

// Scratch state for one baselearner evaluation; reused across samples.
struct BaselearnerWorkspace {
  std::vector<std::vector<ForwardTrace>> traces;  // [component][encoder]
  std::vector<double> component_values;
  std::vector<double> outputs;
  std::vector<double> component_upstream;
  std::vector<double> encoder_upstream;
  std::vector<double> delta;
  std::vector<double> delta_prev;
};

struct BaselearnerGradient {
  std::vector<double> coefficients;
  std::vector<std::vector<GradientTape>> components;  // [component][encoder]

  static BaselearnerGradient zeros_like(const Baselearner& learner);
  void set_zero();
  std::vector<double> flat() const;
};

// Fills ws.component_values and ws.outputs for input x.
void evaluate(const Baselearner& learner, std::span<const double> x, BaselearnerWorkspace& ws);

// After evaluate(): adds d(upstream . outputs)/d(theta) into grad.
void accumulate_gradient(const Baselearner& learner, BaselearnerWorkspace& ws,
                         std::span<const double> upstream, BaselearnerGradient& grad);

void apply_step(Baselearner& learner, const BaselearnerGradient& grad, double step);

std::vector<double> predict_potential_outcomes(const Baselearner& learner,
                                               std::span<const double> x);

// Per-component values f_k(x); requires a modality plan.
std::vector<double> encode_and_fuse(const Baselearner& learner, std::span<const double> x);

}  // namespace cmde
