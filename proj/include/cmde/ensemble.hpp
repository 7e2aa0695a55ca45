#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cmde/datagen.hpp"
#include "cmde/learner.hpp"

namespace cmde {

enum class TrainingMode { kJoint, kIndependent };

std::string_view to_string(TrainingMode mode);
TrainingMode parse_training_mode(std::string_view name);

struct TrainingConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double weight_decay = 1e-4;
  double variance_weight = 1.0;
  TrainingMode mode = TrainingMode::kJoint;
};

class Cmde {
 public:
  Cmde(std::vector<Baselearner> learners, TrainingConfig config);

  std::span<const Baselearner> learners() const noexcept { return learners_; }
  std::span<Baselearner> learners() noexcept { return learners_; }
  std::size_t size() const noexcept { return learners_.size(); }
  std::size_t treatments() const { return learners_.front().treatments(); }
  std::size_t input_dim() const { return learners_.front().input_dim(); }

  const TrainingConfig& config() const noexcept { return config_; }
  TrainingConfig& config() noexcept { return config_; }

 private:
  std::vector<Baselearner> learners_;
  TrainingConfig config_;
};

// Learner m is initialized from the m-th split of `rng`.
Cmde build_cmde(SeededRng& rng, std::size_t members, const CoregionalizationSpec& spec,
                std::span<const NetworkArchitecture> architectures, std::size_t input_dim,
                const std::optional<ModalityPlan>& modality_plan, TrainingConfig config);

struct RiskTerms {
  double risk = 0.0;
  double factual_mse = 0.0;    // mean over the batch of the factual squared error
  double variance_term = 0.0;  // mean over the batch of the counterfactual variance sum
  double l2 = 0.0;             // lambda * sum of squared parameters (joint) or its mean (independent)
};

// Joint:       (1/B) sum_i [(y_i - mean_m yhat_im^(t_i))^2 + w * sum_{c != t_i} Var_m yhat_im^(c)]
//              + lambda * sum_m |theta_m|^2
// Independent: (1/M) sum_m [(1/B) sum_i (y_i - yhat_im^(t_i))^2 + lambda * |theta_m|^2]
// Variances use the population convention.
RiskTerms batch_risk(const Cmde& cmde, const Dataset& data, std::span<const std::size_t> rows);

// Same value as batch_risk; fills one gradient per learner. In independent
// mode gradient m is that of learner m's own objective.
RiskTerms risk_and_gradient(const Cmde& cmde, const Dataset& data,
                            std::span<const std::size_t> rows,
                            std::vector<BaselearnerGradient>& gradients);

struct EpochRecord {
  std::size_t epoch;
  double risk;
  double factual_mse;
  double variance_term;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
};

// Plain minibatch SGD; rows are reshuffled from `rng` every epoch. Epoch values
// are batch-size-weighted averages of the batch risks seen during the epoch.
TrainingReport train(Cmde& cmde, const Dataset& data, SeededRng& rng);

// Treatment 0 is the reference arm: cate column c - 1 holds yhat^(c) - yhat^(0).
struct CateEstimate {
  DenseMatrix outcome_mean;      // N x C
  DenseMatrix outcome_variance;  // N x C
  DenseMatrix cate_mean;         // N x (C - 1)
  DenseMatrix cate_variance;     // N x (C - 1)
};

CateEstimate predict(const Cmde& cmde, const DenseMatrix& x);

// Per-learner potential outcomes, [member][row * C + c].
std::vector<std::vector<double>> member_outcomes(const Cmde& cmde, const DenseMatrix& x);

// Term-level contributions coefficient * f_k(x) averaged over the ensemble, one
// column per component of the mixing layout (N x K).
DenseMatrix component_contributions(const Cmde& cmde, const DenseMatrix& x);

}  // namespace cmde
