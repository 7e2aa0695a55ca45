#include "cmde/nets.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>

namespace cmde {

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSoftplus: return "softplus";
    case Activation::kErf: return "erf";
    case Activation::kIdentity: return "identity";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::kRelu, Activation::kTanh, Activation::kSoftplus, Activation::kErf,
                 Activation::kIdentity}) {
    if (to_string(a) == name) return a;
  }
  throw Error(ErrorKind::kConfigError, "unknown activation '" + std::string(name) + "'");
}

double activate(Activation activation, double u) {
  switch (activation) {
    case Activation::kRelu: return u > 0.0 ? u : 0.0;
    case Activation::kTanh: return std::tanh(u);
    case Activation::kSoftplus: return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
    case Activation::kErf: return std::erf(u);
    case Activation::kIdentity: return u;
  }
  return u;
}

double activation_derivative(Activation activation, double u) {
  switch (activation) {
    case Activation::kRelu: return u > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(u);
      return 1.0 - t * t;
    }
    case Activation::kSoftplus:
      return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
    case Activation::kErf: return std::numbers::inv_sqrtpi * 2.0 * std::exp(-u * u);
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

std::string_view to_string(InitMode mode) {
  return mode == InitMode::kNngp ? "nngp" : "unscaled";
}

InitMode parse_init_mode(std::string_view name) {
  if (name == "nngp") return InitMode::kNngp;
  if (name == "unscaled") return InitMode::kUnscaled;
  throw Error(ErrorKind::kConfigError, "unknown init mode '" + std::string(name) + "'");
}

double weight_variance(InitMode mode, std::size_t layer_index, std::size_t fan_in,
                       double prior_variance) {
  if (mode == InitMode::kUnscaled || layer_index == 0) return prior_variance;
  return prior_variance / static_cast<double>(fan_in);
}

void validate_widths(std::span<const std::size_t> widths, double prior_variance) {
  if (widths.size() < 2) {
    throw Error(ErrorKind::kInvalidArchitecture,
                "network needs at least an input and an output width");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw Error(ErrorKind::kInvalidArchitecture, "zero-width layer");
  }
  if (!(prior_variance > 0.0) || !std::isfinite(prior_variance)) {
    throw Error(ErrorKind::kInvalidArchitecture, "prior variance must be positive and finite");
  }
}

MlpNetwork::MlpNetwork(std::vector<std::size_t> widths, Activation activation,
                       double prior_variance, InitMode init_mode, std::vector<Layer> layers)
    : widths_(std::move(widths)),
      activation_(activation),
      prior_variance_(prior_variance),
      init_mode_(init_mode),
      layers_(std::move(layers)) {
  validate_widths(widths_, prior_variance_);
  if (layers_.size() != widths_.size() - 1) {
    throw Error(ErrorKind::kInvalidArchitecture, "layer count does not match widths");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weights.rows() != widths_[l + 1] || layer.weights.cols() != widths_[l] ||
        layer.biases.size() != widths_[l + 1]) {
      std::ostringstream msg;
      msg << "layer " << l << " shape does not chain with widths";
      throw Error(ErrorKind::kInvalidArchitecture, msg.str());
    }
  }
}

std::size_t MlpNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weights.values().size() + layer.biases.size();
  return n;
}

std::vector<double> MlpNetwork::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers_) {
    flat.insert(flat.end(), layer.weights.values().begin(), layer.weights.values().end());
    flat.insert(flat.end(), layer.biases.begin(), layer.biases.end());
  }
  return flat;
}

void MlpNetwork::set_flat_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw Error(ErrorKind::kDimensionMismatch, "flat parameter length differs from network");
  }
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (double& w : layer.weights.values()) w = values[k++];
    for (double& b : layer.biases) b = values[k++];
  }
}

double MlpNetwork::squared_norm() const {
  double s = 0.0;
  for (const auto& layer : layers_) {
    s += dot(layer.weights.values(), layer.weights.values());
    s += dot(layer.biases, layer.biases);
  }
  return s;
}

MlpNetwork init_network(SeededRng& rng, std::vector<std::size_t> widths, Activation activation,
                        double prior_variance, InitMode init_mode) {
  validate_widths(widths, prior_variance);
  std::vector<Layer> layers;
  layers.reserve(widths.size() - 1);
  const double bias_sd = std::sqrt(prior_variance);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double w_var = weight_variance(init_mode, l, widths[l], prior_variance);
    Layer layer{gaussian_matrix(rng, widths[l + 1], widths[l], w_var),
                std::vector<double>(widths[l + 1])};
    for (double& b : layer.biases) b = bias_sd * rng.normal();
    layers.push_back(std::move(layer));
  }
  return MlpNetwork(std::move(widths), activation, prior_variance, init_mode, std::move(layers));
}

namespace {

void activate_into(Activation act, std::span<const double> z, std::span<double> a) {
  const std::size_t n = z.size();
  switch (act) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < n; ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
      return;
    case Activation::kIdentity:
      for (std::size_t i = 0; i < n; ++i) a[i] = z[i];
      return;
    default:
      for (std::size_t i = 0; i < n; ++i) a[i] = activate(act, z[i]);
  }
}

void scale_by_derivative(Activation act, std::span<const double> z, std::span<double> d) {
  const std::size_t n = z.size();
  switch (act) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < n; ++i) d[i] = z[i] > 0.0 ? d[i] : 0.0;
      return;
    case Activation::kIdentity: return;
    default:
      for (std::size_t i = 0; i < n; ++i) d[i] *= activation_derivative(act, z[i]);
  }
}

}  // namespace

void forward_trace(const MlpNetwork& net, std::span<const double> x, ForwardTrace& trace) {
  if (x.size() != net.input_dim()) {
    std::ostringstream msg;
    msg << "forward: input has " << x.size() << " entries, network expects " << net.input_dim();
    throw Error(ErrorKind::kDimensionMismatch, msg.str());
  }
  const auto layers = net.layers();
  const std::size_t depth = layers.size();
  trace.pre.resize(depth);
  trace.post.resize(depth + 1);
  trace.post[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < depth; ++l) {
    const Layer& layer = layers[l];
    const std::size_t out = layer.weights.rows();
    const std::size_t in = layer.weights.cols();
    const std::span<const double> input = trace.post[l];
    auto& z = trace.pre[l];
    z.resize(out);
    const double* b = layer.biases.data();
    if (in == 1) {
      const double x0 = input[0];
      const double* w = layer.weights.values().data();
      for (std::size_t o = 0; o < out; ++o) z[o] = b[o] + w[o] * x0;
    } else {
      for (std::size_t o = 0; o < out; ++o) z[o] = b[o] + dot(layer.weights.row(o), input);
    }
    auto& a = trace.post[l + 1];
    a.resize(out);
    activate_into(l + 1 == depth ? Activation::kIdentity : net.activation(), z, a);
  }
}

std::vector<double> forward_vector(const MlpNetwork& net, std::span<const double> x) {
  ForwardTrace trace;
  forward_trace(net, x, trace);
  return trace.post.back();
}

double forward(const MlpNetwork& net, std::span<const double> x) {
  if (net.output_dim() != 1) {
    throw Error(ErrorKind::kDimensionMismatch, "forward: network output is not scalar");
  }
  return forward_vector(net, x)[0];
}

GradientTape GradientTape::zeros_like(const MlpNetwork& net) {
  GradientTape tape;
  for (const auto& layer : net.layers()) {
    tape.layers.push_back(Layer{DenseMatrix(layer.weights.rows(), layer.weights.cols()),
                                std::vector<double>(layer.biases.size(), 0.0)});
  }
  return tape;
}

std::vector<double> GradientTape::flat() const {
  std::vector<double> out;
  for (const auto& layer : layers) {
    out.insert(out.end(), layer.weights.values().begin(), layer.weights.values().end());
    out.insert(out.end(), layer.biases.begin(), layer.biases.end());
  }
  return out;
}

void GradientTape::set_zero() {
  for (auto& layer : layers) {
    for (double& v : layer.weights.values()) v = 0.0;
    for (double& v : layer.biases) v = 0.0;
  }
}

void accumulate_backward(const MlpNetwork& net, const ForwardTrace& trace,
                         std::span<const double> upstream, GradientTape& tape,
                         std::vector<double>& delta, std::vector<double>& delta_prev) {
  const auto layers = net.layers();
  const std::size_t depth = layers.size();
  if (upstream.size() != net.output_dim()) {
    throw Error(ErrorKind::kDimensionMismatch, "backward: upstream length differs from output");
  }
  delta.assign(upstream.begin(), upstream.end());
  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = layers[l];
    Layer& grad = tape.layers[l];
    const std::size_t out = layer.weights.rows();
    const std::size_t in = layer.weights.cols();
    const double* input = trace.post[l].data();
    const double* d = delta.data();
    double* gb = grad.biases.data();
    for (std::size_t o = 0; o < out; ++o) gb[o] += d[o];
    if (in == 1) {
      double* gw = grad.weights.values().data();
      const double x0 = input[0];
      for (std::size_t o = 0; o < out; ++o) gw[o] += d[o] * x0;
    } else {
      for (std::size_t o = 0; o < out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        double* g = grad.weights.row(o).data();
        for (std::size_t i = 0; i < in; ++i) g[i] += dv * input[i];
      }
    }
    if (l == 0) break;
    delta_prev.assign(in, 0.0);
    double* dp = delta_prev.data();
    for (std::size_t o = 0; o < out; ++o) {
      const double dv = d[o];
      if (dv == 0.0) continue;
      const double* w = layer.weights.row(o).data();
      for (std::size_t i = 0; i < in; ++i) dp[i] += dv * w[i];
    }
    scale_by_derivative(net.activation(), trace.pre[l - 1], delta_prev);
    std::swap(delta, delta_prev);
  }
}

GradientTape backward(const MlpNetwork& net, std::span<const double> x, double upstream) {
  if (net.output_dim() != 1) {
    throw Error(ErrorKind::kDimensionMismatch, "backward: network output is not scalar");
  }
  ForwardTrace trace;
  forward_trace(net, x, trace);
  GradientTape tape = GradientTape::zeros_like(net);
  std::vector<double> delta, delta_prev;
  const double up[] = {upstream};
  accumulate_backward(net, trace, up, tape, delta, delta_prev);
  return tape;
}

void apply_step(MlpNetwork& net, const GradientTape& tape, double step) {
  auto layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto w = layers[l].weights.values();
    const auto gw = tape.layers[l].weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * gw[i];
    auto& b = layers[l].biases;
    const auto& gb = tape.layers[l].biases;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * gb[i];
  }
}

}  // namespace cmde
