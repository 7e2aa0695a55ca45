#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "cmde/numerics.hpp"

namespace cmde {

enum class Activation { kRelu, kTanh, kSoftplus, kErf, kIdentity };

std::string_view to_string(Activation activation);
// Throws Error(kConfigError) naming the unknown activation.
Activation parse_activation(std::string_view name);

double activate(Activation activation, double u);
double activation_derivative(Activation activation, double u);

// kNngp: the first layer (weights and biases) and every bias are N(0, sigma_w^2);
// weights of later layers are N(0, sigma_w^2 / fan_in). The output covariance of
// such a network has a finite infinite-width limit, which gpkernels computes.
// kUnscaled: every parameter is N(0, sigma_w^2) with no fan-in scaling.
enum class InitMode { kNngp, kUnscaled };

std::string_view to_string(InitMode mode);
InitMode parse_init_mode(std::string_view name);

// Variance used to draw the weights of layer `layer_index` (0 = input layer).
double weight_variance(InitMode mode, std::size_t layer_index, std::size_t fan_in,
                       double prior_variance);

struct Layer {
  DenseMatrix weights;  // fan_out x fan_in
  std::vector<double> biases;
};

// Fully connected network. widths = {input, hidden..., output}; hidden layers
// apply the activation, the output layer is affine.
class MlpNetwork {
 public:
  MlpNetwork(std::vector<std::size_t> widths, Activation activation, double prior_variance,
             InitMode init_mode, std::vector<Layer> layers);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t input_dim() const noexcept { return widths_.front(); }
  std::size_t output_dim() const noexcept { return widths_.back(); }
  std::size_t hidden_layers() const noexcept { return widths_.size() - 2; }
  Activation activation() const noexcept { return activation_; }
  double prior_variance() const noexcept { return prior_variance_; }
  InitMode init_mode() const noexcept { return init_mode_; }

  std::span<const Layer> layers() const noexcept { return layers_; }
  std::span<Layer> layers() noexcept { return layers_; }

  std::size_t parameter_count() const;
  // Layer by layer: weights row-major, then biases.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> values);
  double squared_norm() const;

 private:
  std::vector<std::size_t> widths_;
  Activation activation_;
  double prior_variance_;
  InitMode init_mode_;
  std::vector<Layer> layers_;
};

// Throws kInvalidArchitecture for fewer than two widths, a zero width, or a
// non-positive prior variance.
void validate_widths(std::span<const std::size_t> widths, double prior_variance);

MlpNetwork init_network(SeededRng& rng, std::vector<std::size_t> widths, Activation activation,
                        double prior_variance, InitMode init_mode = InitMode::kNngp);

// Pre- and post-activation values from one forward pass; reused across calls
// to avoid reallocation in training loops.
struct ForwardTrace {
  std::vector<std::vector<double>> pre;   // pre[l]: output of layer l before activation
  std::vector<std::vector<double>> post;  // post[0] = input; post[l + 1] = activated pre[l]

  std::span<const double> output() const { return post.back(); }
};

void forward_trace(const MlpNetwork& net, std::span<const double> x, ForwardTrace& trace);
std::vector<double> forward_vector(const MlpNetwork& net, std::span<const double> x);
// Scalar output; the network must have output dimension 1.
double forward(const MlpNetwork& net, std::span<const double> x);

// Partial derivatives shaped like the network's layers.
struct GradientTape {
  std::vector<Layer> layers;

  static GradientTape zeros_like(const MlpNetwork& net);
  std::vector<double> flat() const;
  void set_zero();
};

// Adds d(upstream . output)/d(theta) for the pass recorded in `trace` to `tape`.
// `delta` and `delta_prev` are scratch buffers.
void accumulate_backward(const MlpNetwork& net, const ForwardTrace& trace,
                         std::span<const double> upstream, GradientTape& tape,
                         std::vector<double>& delta, std::vector<double>& delta_prev);

GradientTape backward(const MlpNetwork& net, std::span<const double> x, double upstream);

// theta -= step * tape
void apply_step(MlpNetwork& net, const GradientTape& tape, double step);

}  // namespace cmde
