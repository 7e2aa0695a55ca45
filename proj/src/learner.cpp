#include "cmde/learner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

namespace cmde {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kIcm3: return "icm3";
    case Variant::kLmc: return "lmc";
    case Variant::kMultiTreatment: return "multiTreatment";
    case Variant::kTwoNet: return "twoNet";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::kIcm3, Variant::kLmc, Variant::kMultiTreatment, Variant::kTwoNet}) {
    if (to_string(v) == name) return v;
  }
  throw Error(ErrorKind::kConfigError, "unknown variant '" + std::string(name) + "'");
}

CoregionalizationSpec CoregionalizationSpec::icm3(double alpha_h, double alpha_t,
                                                  double alpha_ht) {
  return {Variant::kIcm3, 1, 2, {alpha_h, alpha_t, alpha_ht}};
}

CoregionalizationSpec CoregionalizationSpec::lmc(
    std::span<const std::array<double, 3>> per_component) {
  CoregionalizationSpec spec{Variant::kLmc, per_component.size(), 2, {}};
  for (const auto& block : per_component) {
    spec.coefficients.insert(spec.coefficients.end(), block.begin(), block.end());
  }
  return spec;
}

CoregionalizationSpec CoregionalizationSpec::multi_treatment(std::size_t treatments,
                                                             std::span<const double> group,
                                                             std::span<const double> shared_upper) {
  CoregionalizationSpec spec{Variant::kMultiTreatment, 1, treatments, {}};
  spec.coefficients.assign(group.begin(), group.end());
  spec.coefficients.insert(spec.coefficients.end(), shared_upper.begin(), shared_upper.end());
  return spec;
}

CoregionalizationSpec CoregionalizationSpec::two_net(double alpha0, double beta0, double alpha1,
                                                     double beta1) {
  return {Variant::kTwoNet, 1, 2, {alpha0, beta0, alpha1, beta1}};
}

std::size_t coefficient_count(const CoregionalizationSpec& spec) {
  switch (spec.variant) {
    case Variant::kIcm3: return 3;
    case Variant::kLmc: return 3 * spec.components;
    case Variant::kMultiTreatment:
      return spec.treatments + spec.treatments * (spec.treatments - 1) / 2;
    case Variant::kTwoNet: return 4;
  }
  return 0;
}

std::size_t block_count(const CoregionalizationSpec& spec) {
  return spec.variant == Variant::kLmc ? spec.components : 1;
}

void validate(const CoregionalizationSpec& spec) {
  if (spec.variant == Variant::kLmc && spec.components < 1) {
    throw Error(ErrorKind::kSpecMismatch, "lmc needs at least one component (Q >= 1)");
  }
  if (spec.variant == Variant::kMultiTreatment && spec.treatments < 2) {
    throw Error(ErrorKind::kSpecMismatch, "multiTreatment needs at least two treatments");
  }
  if (spec.variant != Variant::kMultiTreatment && spec.treatments != 2) {
    throw Error(ErrorKind::kSpecMismatch,
                std::string(to_string(spec.variant)) + " is defined for two treatments only");
  }
  const std::size_t expected = coefficient_count(spec);
  if (spec.coefficients.size() != expected) {
    std::ostringstream msg;
    msg << to_string(spec.variant) << " expects " << expected << " coefficients, got "
        << spec.coefficients.size();
    throw Error(ErrorKind::kSpecMismatch, msg.str());
  }
  for (double a : spec.coefficients) {
    if (!std::isfinite(a)) throw Error(ErrorKind::kSpecMismatch, "non-finite coefficient");
  }
}

std::size_t shared_coefficient_index(std::size_t treatments, std::size_t c, std::size_t d) {
  if (!(c < d && d < treatments)) {
    throw Error(ErrorKind::kSpecMismatch, "shared coefficient needs c < d < C");
  }
  return treatments + c * treatments - c * (c + 1) / 2 + (d - c - 1);
}

MixingLayout mixing_layout(const CoregionalizationSpec& spec) {
  validate(spec);
  MixingLayout layout;
  layout.outputs = spec.treatments;
  layout.blocks = block_count(spec);
  auto add_component = [&](std::string name, std::size_t block) {
    layout.components.push_back({std::move(name), block});
    return layout.components.size() - 1;
  };
  switch (spec.variant) {
    case Variant::kIcm3:
    case Variant::kLmc: {
      const bool lmc = spec.variant == Variant::kLmc;
      for (std::size_t q = 0; q < layout.blocks; ++q) {
        const std::string suffix = lmc ? "^" + std::to_string(q + 1) : "";
        const std::size_t h = add_component("f_H" + suffix, q);
        const std::size_t t = add_component("f_T" + suffix, q);
        const std::size_t ht = add_component("f_HT" + suffix, q);
        const std::size_t base = 3 * q;
        layout.terms.push_back({0, h, base});
        layout.terms.push_back({0, ht, base + 2});
        layout.terms.push_back({1, ht, base + 2});
        layout.terms.push_back({1, t, base + 1});
      }
      break;
    }
    case Variant::kMultiTreatment: {
      const std::size_t c_count = spec.treatments;
      for (std::size_t c = 0; c < c_count; ++c) {
        const std::size_t k = add_component("f_" + std::to_string(c), 0);
        layout.terms.push_back({c, k, c});
      }
      for (std::size_t c = 0; c < c_count; ++c) {
        for (std::size_t d = c + 1; d < c_count; ++d) {
          const std::size_t k = add_component("f_" + std::to_string(c) + std::to_string(d), 0);
          const std::size_t idx = shared_coefficient_index(c_count, c, d);
          layout.terms.push_back({c, k, idx});
          layout.terms.push_back({d, k, idx});
        }
      }
      break;
    }
    case Variant::kTwoNet: {
      const std::size_t a = add_component("f_A", 0);
      const std::size_t b = add_component("f_B", 0);
      layout.terms.push_back({0, a, 0});
      layout.terms.push_back({0, b, 1});
      layout.terms.push_back({1, a, 2});
      layout.terms.push_back({1, b, 3});
      break;
    }
  }
  return layout;
}

std::vector<DenseMatrix> coregionalization_matrices(const CoregionalizationSpec& spec,
                                                    std::span<const double> coefficients) {
  CoregionalizationSpec resolved = spec;
  resolved.coefficients.assign(coefficients.begin(), coefficients.end());
  const MixingLayout layout = mixing_layout(resolved);
  const std::size_t c_count = layout.outputs;
  const std::size_t k_count = layout.components.size();
  std::vector<DenseMatrix> loadings(layout.blocks, DenseMatrix(c_count, k_count));
  for (const auto& term : layout.terms) {
    const std::size_t q = layout.components[term.component].block;
    loadings[q](term.output, term.component) += coefficients[term.coefficient];
  }
  std::vector<DenseMatrix> out;
  out.reserve(layout.blocks);
  for (const auto& a : loadings) out.push_back(matmul(a, transpose(a)));
  return out;
}

DenseMatrix coregionalization_matrix(const CoregionalizationSpec& spec,
                                     std::span<const double> coefficients) {
  if (block_count(spec) != 1) {
    throw Error(ErrorKind::kSpecMismatch,
                "lmc with Q > 1 has one matrix per block; use coregionalization_matrices");
  }
  return coregionalization_matrices(spec, coefficients).front();
}

std::size_t ModalityPlan::input_dim() const {
  std::size_t d = 0;
  for (std::size_t b : block_dims) d += b;
  return d;
}

double fuse(std::span<const std::vector<double>> representations) {
  if (representations.empty()) {
    throw Error(ErrorKind::kSpecMismatch, "fuse needs at least one representation");
  }
  const std::size_t j_count = representations.front().size();
  for (const auto& z : representations) {
    if (z.size() != j_count) {
      throw Error(ErrorKind::kSpecMismatch, "representations disagree on fusion dimension");
    }
  }
  double total = 0.0;
  for (std::size_t j = 0; j < j_count; ++j) {
    double p = 1.0;
    for (const auto& z : representations) p *= z[j];
    total += p;
  }
  return total;
}

namespace {

void check_modality_plan(const ModalityPlan& plan, std::size_t input_dim) {
  if (plan.block_dims.empty()) {
    throw Error(ErrorKind::kSpecMismatch, "modality plan lists no blocks");
  }
  if (plan.fusion_dim == 0) throw Error(ErrorKind::kSpecMismatch, "fusion dimension J is zero");
  for (std::size_t b : plan.block_dims) {
    if (b == 0) throw Error(ErrorKind::kSpecMismatch, "empty modality block");
  }
  if (plan.input_dim() != input_dim) {
    std::ostringstream msg;
    msg << "modality blocks cover " << plan.input_dim() << " covariates, input has " << input_dim;
    throw Error(ErrorKind::kSpecMismatch, msg.str());
  }
}

}  // namespace

Baselearner::Baselearner(CoregionalizationSpec spec, std::vector<Component> components,
                         std::optional<ModalityPlan> modality_plan, std::size_t input_dim)
    : spec_(std::move(spec)),
      layout_(mixing_layout(spec_)),
      components_(std::move(components)),
      plan_(std::move(modality_plan)),
      input_dim_(input_dim) {
  if (components_.size() != layout_.components.size()) {
    std::ostringstream msg;
    msg << to_string(spec_.variant) << " needs " << layout_.components.size()
        << " networks, got " << components_.size();
    throw Error(ErrorKind::kSpecMismatch, msg.str());
  }
  if (plan_) check_modality_plan(*plan_, input_dim_);
  const std::size_t encoders = plan_ ? plan_->block_dims.size() : 1;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& comp = components_[k];
    if (comp.encoders.size() != encoders) {
      throw Error(ErrorKind::kSpecMismatch, "component " + layout_.components[k].name +
                                                " has the wrong number of encoders");
    }
    for (std::size_t m = 0; m < encoders; ++m) {
      const auto& net = comp.encoders[m];
      const std::size_t in = plan_ ? plan_->block_dims[m] : input_dim_;
      const std::size_t out = plan_ ? plan_->fusion_dim : 1;
      if (net.input_dim() != in || net.output_dim() != out) {
        throw Error(ErrorKind::kSpecMismatch, "encoder shape of " + layout_.components[k].name +
                                                  " disagrees with the covariate layout");
      }
    }
  }
  // Networks of one block share depth and init strategy.
  for (std::size_t k = 0; k < components_.size(); ++k) {
    for (std::size_t k2 = 0; k2 < k; ++k2) {
      if (layout_.components[k].block != layout_.components[k2].block) continue;
      const auto& a = components_[k].encoders.front();
      const auto& b = components_[k2].encoders.front();
      if (a.hidden_layers() != b.hidden_layers() || a.init_mode() != b.init_mode()) {
        throw Error(ErrorKind::kInvalidArchitecture,
                    "networks of one block must share depth and init mode");
      }
    }
  }
}

std::size_t Baselearner::parameter_count() const {
  std::size_t n = spec_.coefficients.size();
  for (const auto& comp : components_) {
    for (const auto& net : comp.encoders) n += net.parameter_count();
  }
  return n;
}

std::vector<double> Baselearner::flat_parameters() const {
  std::vector<double> flat(spec_.coefficients);
  flat.reserve(parameter_count());
  for (const auto& comp : components_) {
    for (const auto& net : comp.encoders) {
      const auto p = net.flat_parameters();
      flat.insert(flat.end(), p.begin(), p.end());
    }
  }
  return flat;
}

void Baselearner::set_flat_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw Error(ErrorKind::kDimensionMismatch, "flat parameter length differs from baselearner");
  }
  std::size_t offset = spec_.coefficients.size();
  std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(offset),
            spec_.coefficients.begin());
  for (auto& comp : components_) {
    for (auto& net : comp.encoders) {
      const std::size_t n = net.parameter_count();
      net.set_flat_parameters(values.subspan(offset, n));
      offset += n;
    }
  }
}

double Baselearner::squared_norm() const {
  double s = dot(spec_.coefficients, spec_.coefficients);
  for (const auto& comp : components_) {
    for (const auto& net : comp.encoders) s += net.squared_norm();
  }
  return s;
}

Baselearner build_baselearner(SeededRng& rng, const CoregionalizationSpec& spec,
                              std::span<const NetworkArchitecture> architectures,
                              std::size_t input_dim,
                              const std::optional<ModalityPlan>& modality_plan) {
  const MixingLayout layout = mixing_layout(spec);
  if (architectures.size() != 1 && architectures.size() != layout.blocks) {
    std::ostringstream msg;
    msg << "expected 1 or " << layout.blocks << " architectures, got " << architectures.size();
    throw Error(ErrorKind::kSpecMismatch, msg.str());
  }
  if (input_dim == 0) throw Error(ErrorKind::kInvalidArchitecture, "input dimension is zero");
  if (modality_plan) check_modality_plan(*modality_plan, input_dim);
  std::vector<Component> components;
  components.reserve(layout.components.size());
  for (const auto& info : layout.components) {
    const auto& arch = architectures[architectures.size() == 1 ? 0 : info.block];
    Component comp;
    const std::size_t encoders = modality_plan ? modality_plan->block_dims.size() : 1;
    for (std::size_t m = 0; m < encoders; ++m) {
      std::vector<std::size_t> widths;
      widths.push_back(modality_plan ? modality_plan->block_dims[m] : input_dim);
      widths.insert(widths.end(), arch.hidden_widths.begin(), arch.hidden_widths.end());
      widths.push_back(modality_plan ? modality_plan->fusion_dim : 1);
      comp.encoders.push_back(
          init_network(rng, std::move(widths), arch.activation, arch.prior_variance, arch.init_mode));
    }
    components.push_back(std::move(comp));
  }
  return Baselearner(spec, std::move(components), modality_plan, input_dim);
}

BaselearnerGradient BaselearnerGradient::zeros_like(const Baselearner& learner) {
  BaselearnerGradient g;
  g.coefficients.assign(learner.coefficients().size(), 0.0);
  for (const auto& comp : learner.components()) {
    auto& tapes = g.components.emplace_back();
    for (const auto& net : comp.encoders) tapes.push_back(GradientTape::zeros_like(net));
  }
  return g;
}

void BaselearnerGradient::set_zero() {
  for (double& v : coefficients) v = 0.0;
  for (auto& tapes : components) {
    for (auto& tape : tapes) tape.set_zero();
  }
}

std::vector<double> BaselearnerGradient::flat() const {
  std::vector<double> out(coefficients);
  for (const auto& tapes : components) {
    for (const auto& tape : tapes) {
      const auto f = tape.flat();
      out.insert(out.end(), f.begin(), f.end());
    }
  }
  return out;
}

void evaluate(const Baselearner& learner, std::span<const double> x, BaselearnerWorkspace& ws) {
  if (x.size() != learner.input_dim()) {
    std::ostringstream msg;
    msg << "baselearner expects " << learner.input_dim() << " covariates, got " << x.size();
    throw Error(ErrorKind::kDimensionMismatch, msg.str());
  }
  const auto components = learner.components();
  const auto& plan = learner.modality_plan();
  ws.traces.resize(components.size());
  ws.component_values.assign(components.size(), 0.0);
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& encoders = components[k].encoders;
    auto& traces = ws.traces[k];
    traces.resize(encoders.size());
    if (!plan) {
      forward_trace(encoders.front(), x, traces.front());
      ws.component_values[k] = traces.front().output()[0];
      continue;
    }
    std::size_t offset = 0;
    for (std::size_t m = 0; m < encoders.size(); ++m) {
      const std::size_t dim = plan->block_dims[m];
      forward_trace(encoders[m], x.subspan(offset, dim), traces[m]);
      offset += dim;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < plan->fusion_dim; ++j) {
      double p = 1.0;
      for (std::size_t m = 0; m < encoders.size(); ++m) p *= traces[m].output()[j];
      total += p;
    }
    ws.component_values[k] = total;
  }
  const auto coef = learner.coefficients();
  ws.outputs.assign(learner.treatments(), 0.0);
  for (const auto& term : learner.layout().terms) {
    ws.outputs[term.output] += coef[term.coefficient] * ws.component_values[term.component];
  }
}

void accumulate_gradient(const Baselearner& learner, BaselearnerWorkspace& ws,
                         std::span<const double> upstream, BaselearnerGradient& grad) {
  if (upstream.size() != learner.treatments()) {
    throw Error(ErrorKind::kDimensionMismatch, "upstream length differs from treatment count");
  }
  const auto coef = learner.coefficients();
  const auto components = learner.components();
  ws.component_upstream.assign(components.size(), 0.0);
  for (const auto& term : learner.layout().terms) {
    grad.coefficients[term.coefficient] += upstream[term.output] * ws.component_values[term.component];
    ws.component_upstream[term.component] += upstream[term.output] * coef[term.coefficient];
  }
  const auto& plan = learner.modality_plan();
  for (std::size_t k = 0; k < components.size(); ++k) {
    const double g = ws.component_upstream[k];
    if (g == 0.0) continue;
    const auto& encoders = components[k].encoders;
    const auto& traces = ws.traces[k];
    if (!plan) {
      const double up[] = {g};
      accumulate_backward(encoders.front(), traces.front(), up, grad.components[k].front(),
                          ws.delta, ws.delta_prev);
      continue;
    }
    const std::size_t j_count = plan->fusion_dim;
    for (std::size_t m = 0; m < encoders.size(); ++m) {
      ws.encoder_upstream.assign(j_count, g);
      for (std::size_t j = 0; j < j_count; ++j) {
        for (std::size_t m2 = 0; m2 < encoders.size(); ++m2) {
          if (m2 != m) ws.encoder_upstream[j] *= traces[m2].output()[j];
        }
      }
      accumulate_backward(encoders[m], traces[m], ws.encoder_upstream, grad.components[k][m],
                          ws.delta, ws.delta_prev);
    }
  }
}

void apply_step(Baselearner& learner, const BaselearnerGradient& grad, double step) {
  auto coef = learner.coefficients();
  for (std::size_t i = 0; i < coef.size(); ++i) coef[i] -= step * grad.coefficients[i];
  auto components = learner.components();
  for (std::size_t k = 0; k < components.size(); ++k) {
    for (std::size_t m = 0; m < components[k].encoders.size(); ++m) {
      apply_step(components[k].encoders[m], grad.components[k][m], step);
    }
  }
}

std::vector<double> predict_potential_outcomes(const Baselearner& learner,
                                               std::span<const double> x) {
  BaselearnerWorkspace ws;
  evaluate(learner, x, ws);
  return ws.outputs;
}

std::vector<double> encode_and_fuse(const Baselearner& learner, std::span<const double> x) {
  if (!learner.modality_plan()) {
    throw Error(ErrorKind::kSpecMismatch, "baselearner has no modality plan");
  }
  BaselearnerWorkspace ws;
  evaluate(learner, x, ws);
  return ws.component_values;
}

}  // namespace cmde
