#include "cmde/ensemble.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>

#include "cmde/parallel.hpp"

namespace cmde {

std::string_view to_string(TrainingMode mode) {
  return mode == TrainingMode::kJoint ? "joint" : "independent";
}

TrainingMode parse_training_mode(std::string_view name) {
  if (name == "joint") return TrainingMode::kJoint;
  if (name == "independent") return TrainingMode::kIndependent;
  throw Error(ErrorKind::kConfigError, "unknown training mode '" + std::string(name) + "'");
}

Cmde::Cmde(std::vector<Baselearner> learners, TrainingConfig config)
    : learners_(std::move(learners)), config_(config) {
  if (learners_.empty()) throw Error(ErrorKind::kSpecMismatch, "ensemble needs M >= 1");
  const auto& first = learners_.front();
  for (const auto& bl : learners_) {
    if (bl.spec().variant != first.spec().variant || bl.treatments() != first.treatments() ||
        bl.input_dim() != first.input_dim() ||
        bl.coefficients().size() != first.coefficients().size()) {
      throw Error(ErrorKind::kSpecMismatch, "baselearners disagree on variant or dimensions");
    }
  }
}

Cmde build_cmde(SeededRng& rng, std::size_t members, const CoregionalizationSpec& spec,
                std::span<const NetworkArchitecture> architectures, std::size_t input_dim,
                const std::optional<ModalityPlan>& modality_plan, TrainingConfig config) {
  if (members == 0) throw Error(ErrorKind::kSpecMismatch, "ensemble needs M >= 1");
  std::vector<SeededRng> streams = rng.split(members);
  std::vector<std::optional<Baselearner>> slots(members);
  parallel_for(members, [&](std::size_t m) {
    slots[m].emplace(build_baselearner(streams[m], spec, architectures, input_dim, modality_plan));
  });
  std::vector<Baselearner> learners;
  learners.reserve(members);
  for (auto& s : slots) learners.push_back(std::move(*s));
  return Cmde(std::move(learners), config);
}

namespace {

void check_compatible(const Cmde& cmde, const Dataset& data) {
  if (data.size() == 0) throw Error(ErrorKind::kEmptyDataset, "dataset has no rows");
  if (data.dim() != cmde.input_dim()) {
    std::ostringstream msg;
    msg << "dataset has " << data.dim() << " covariates, model expects " << cmde.input_dim();
    throw Error(ErrorKind::kDimensionMismatch, msg.str());
  }
  const auto c_count = static_cast<int>(cmde.treatments());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.t[i] < 0 || data.t[i] >= c_count) {
      std::ostringstream msg;
      msg << "row " << i << " has treatment " << data.t[i] << ", model has " << c_count
          << " arms";
      throw Error(c_count == 2 ? ErrorKind::kNonBinaryTreatment : ErrorKind::kSchemaError,
                  msg.str());
    }
  }
}

// outputs[m][b * C + c] for the rows listed in `rows`.
std::vector<std::vector<double>> forward_rows(const Cmde& cmde, const DenseMatrix& x,
                                              std::span<const std::size_t> rows) {
  const std::size_t c_count = cmde.treatments();
  std::vector<std::vector<double>> out(cmde.size());
  parallel_for(cmde.size(), [&](std::size_t m) {
    const Baselearner& bl = cmde.learners()[m];
    BaselearnerWorkspace ws;
    auto& dst = out[m];
    dst.resize(rows.size() * c_count);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      evaluate(bl, x.row(rows[b]), ws);
      std::copy(ws.outputs.begin(), ws.outputs.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * c_count));
    }
  });
  return out;
}

// Adds factor * theta to a gradient shaped like `bl`.
void add_scaled_parameters(BaselearnerGradient& grad, const Baselearner& bl, double factor) {
  const auto coef = bl.coefficients();
  for (std::size_t i = 0; i < coef.size(); ++i) grad.coefficients[i] += factor * coef[i];
  const auto comps = bl.components();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    for (std::size_t m = 0; m < comps[k].encoders.size(); ++m) {
      const auto layers = comps[k].encoders[m].layers();
      auto& tape = grad.components[k][m];
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto w = layers[l].weights.values();
        auto gw = tape.layers[l].weights.values();
        for (std::size_t i = 0; i < w.size(); ++i) gw[i] += factor * w[i];
        const auto& b = layers[l].biases;
        auto& gb = tape.layers[l].biases;
        for (std::size_t i = 0; i < b.size(); ++i) gb[i] += factor * b[i];
      }
    }
  }
}

// Computes the risk from member outputs and, when `upstream` is non-null, the
// derivative of the (per-learner, in independent mode) objective with respect
// to every member output.
RiskTerms risk_from_outputs(const Cmde& cmde, const Dataset& data,
                            std::span<const std::size_t> rows,
                            const std::vector<std::vector<double>>& outputs,
                            std::vector<std::vector<double>>* upstream) {
  const auto& cfg = cmde.config();
  const std::size_t members = cmde.size();
  const std::size_t c_count = cmde.treatments();
  const double batch = static_cast<double>(rows.size());
  const double inv_m = 1.0 / static_cast<double>(members);
  if (upstream) {
    upstream->assign(members, std::vector<double>(rows.size() * c_count, 0.0));
  }
  RiskTerms terms;
  double sq_sum = 0.0;
  double var_sum = 0.0;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const std::size_t i = rows[b];
    const auto t = static_cast<std::size_t>(data.t[i]);
    const double y = data.y[i];
    if (cfg.mode == TrainingMode::kIndependent) {
      double row_sq = 0.0;
      for (std::size_t m = 0; m < members; ++m) {
        const double r = outputs[m][b * c_count + t] - y;
        row_sq += r * r;
        if (upstream) (*upstream)[m][b * c_count + t] = 2.0 * r / batch;
      }
      sq_sum += row_sq * inv_m;
      continue;
    }
    for (std::size_t c = 0; c < c_count; ++c) {
      double mean = 0.0;
      for (std::size_t m = 0; m < members; ++m) mean += outputs[m][b * c_count + c];
      mean *= inv_m;
      if (c == t) {
        const double r = mean - y;
        sq_sum += r * r;
        if (upstream) {
          for (std::size_t m = 0; m < members; ++m) {
            (*upstream)[m][b * c_count + c] = 2.0 * r * inv_m / batch;
          }
        }
        continue;
      }
      double var = 0.0;
      for (std::size_t m = 0; m < members; ++m) {
        const double d = outputs[m][b * c_count + c] - mean;
        var += d * d;
      }
      var *= inv_m;
      var_sum += var;
      if (upstream) {
        for (std::size_t m = 0; m < members; ++m) {
          const double d = outputs[m][b * c_count + c] - mean;
          (*upstream)[m][b * c_count + c] = cfg.variance_weight * 2.0 * d * inv_m / batch;
        }
      }
    }
  }
  double norm_sum = 0.0;
  for (const auto& bl : cmde.learners()) norm_sum += bl.squared_norm();
  terms.factual_mse = sq_sum / batch;
  terms.variance_term = var_sum / batch;
  if (cfg.mode == TrainingMode::kIndependent) {
    terms.l2 = cfg.weight_decay * norm_sum * inv_m;
    terms.risk = terms.factual_mse + terms.l2;
  } else {
    terms.l2 = cfg.weight_decay * norm_sum;
    terms.risk = terms.factual_mse + cfg.variance_weight * terms.variance_term + terms.l2;
  }
  return terms;
}

void check_rows(const Dataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error(ErrorKind::kEmptyDataset, "empty batch");
  for (std::size_t i : rows) {
    if (i >= data.size()) throw Error(ErrorKind::kDimensionMismatch, "batch row out of range");
  }
}

}  // namespace

RiskTerms batch_risk(const Cmde& cmde, const Dataset& data, std::span<const std::size_t> rows) {
  check_compatible(cmde, data);
  check_rows(data, rows);
  const auto outputs = forward_rows(cmde, data.x, rows);
  return risk_from_outputs(cmde, data, rows, outputs, nullptr);
}

RiskTerms risk_and_gradient(const Cmde& cmde, const Dataset& data,
                            std::span<const std::size_t> rows,
                            std::vector<BaselearnerGradient>& gradients) {
  check_compatible(cmde, data);
  check_rows(data, rows);
  const auto outputs = forward_rows(cmde, data.x, rows);
  std::vector<std::vector<double>> upstream;
  const RiskTerms terms = risk_from_outputs(cmde, data, rows, outputs, &upstream);
  const std::size_t c_count = cmde.treatments();
  if (gradients.size() != cmde.size()) {
    gradients.clear();
    for (const auto& bl : cmde.learners()) gradients.push_back(BaselearnerGradient::zeros_like(bl));
  }
  const double decay = 2.0 * cmde.config().weight_decay;
  parallel_for(cmde.size(), [&](std::size_t m) {
    const Baselearner& bl = cmde.learners()[m];
    BaselearnerGradient& grad = gradients[m];
    grad.set_zero();
    BaselearnerWorkspace ws;
    const auto& up = upstream[m];
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const std::span<const double> row_up(up.data() + b * c_count, c_count);
      bool any = false;
      for (double u : row_up) any = any || u != 0.0;
      if (!any) continue;
      evaluate(bl, data.x.row(rows[b]), ws);
      accumulate_gradient(bl, ws, row_up, grad);
    }
    if (decay != 0.0) add_scaled_parameters(grad, bl, decay);
  });
  return terms;
}

TrainingReport train(Cmde& cmde, const Dataset& data, SeededRng& rng) {
  check_compatible(cmde, data);
  const auto& cfg = cmde.config();
  if (cfg.batch_size == 0) throw Error(ErrorKind::kConfigError, "batch_size must be positive");
  if (!(cfg.learning_rate >= 0.0) || !(cfg.weight_decay >= 0.0) || !(cfg.variance_weight >= 0.0)) {
    throw Error(ErrorKind::kConfigError, "learning rate, weight decay and variance weight must be >= 0");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<BaselearnerGradient> gradients;
  TrainingReport report;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    double risk_sum = 0.0, mse_sum = 0.0, var_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> rows(order.data() + start, len);
      const RiskTerms terms = risk_and_gradient(cmde, data, rows, gradients);
      if (!std::isfinite(terms.risk)) {
        std::ostringstream msg;
        msg << "risk became non-finite in epoch " << epoch + 1;
        throw Error(ErrorKind::kDivergedTraining, msg.str());
      }
      const double w = static_cast<double>(len);
      risk_sum += w * terms.risk;
      mse_sum += w * terms.factual_mse;
      var_sum += w * terms.variance_term;
      if (cfg.learning_rate == 0.0) continue;
      parallel_for(cmde.size(), [&](std::size_t m) {
        apply_step(cmde.learners()[m], gradients[m], cfg.learning_rate);
      });
    }
    const double nn = static_cast<double>(n);
    report.epochs.push_back({epoch + 1, risk_sum / nn, mse_sum / nn, var_sum / nn});
  }
  return report;
}

std::vector<std::vector<double>> member_outcomes(const Cmde& cmde, const DenseMatrix& x) {
  if (x.cols() != cmde.input_dim()) {
    std::ostringstream msg;
    msg << "rows have " << x.cols() << " covariates, model expects " << cmde.input_dim();
    throw Error(ErrorKind::kDimensionMismatch, msg.str());
  }
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return forward_rows(cmde, x, rows);
}

CateEstimate predict(const Cmde& cmde, const DenseMatrix& x) {
  const auto outputs = member_outcomes(cmde, x);
  const std::size_t n = x.rows();
  const std::size_t c_count = cmde.treatments();
  const std::size_t members = cmde.size();
  const double inv_m = 1.0 / static_cast<double>(members);
  CateEstimate est{DenseMatrix(n, c_count), DenseMatrix(n, c_count), DenseMatrix(n, c_count - 1),
                   DenseMatrix(n, c_count - 1)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < c_count; ++c) {
      double mean = 0.0;
      for (std::size_t m = 0; m < members; ++m) mean += outputs[m][i * c_count + c];
      mean *= inv_m;
      double var = 0.0;
      for (std::size_t m = 0; m < members; ++m) {
        const double d = outputs[m][i * c_count + c] - mean;
        var += d * d;
      }
      est.outcome_mean(i, c) = mean;
      est.outcome_variance(i, c) = var * inv_m;
      if (c == 0) continue;
      double cate = 0.0;
      for (std::size_t m = 0; m < members; ++m) {
        cate += outputs[m][i * c_count + c] - outputs[m][i * c_count];
      }
      cate *= inv_m;
      double cvar = 0.0;
      for (std::size_t m = 0; m < members; ++m) {
        const double d = outputs[m][i * c_count + c] - outputs[m][i * c_count] - cate;
        cvar += d * d;
      }
      est.cate_mean(i, c - 1) = cate;
      est.cate_variance(i, c - 1) = cvar * inv_m;
    }
  }
  return est;
}

DenseMatrix component_contributions(const Cmde& cmde, const DenseMatrix& x) {
  if (x.cols() != cmde.input_dim()) {
    throw Error(ErrorKind::kDimensionMismatch, "rows do not match the model's covariates");
  }
  const auto& layout = cmde.learners().front().layout();
  const std::size_t k_count = layout.components.size();
  // Each component is scaled by the coefficient of its first term.
  std::vector<std::size_t> coef_of(k_count, 0);
  std::vector<bool> seen(k_count, false);
  for (const auto& term : layout.terms) {
    if (!seen[term.component]) {
      seen[term.component] = true;
      coef_of[term.component] = term.coefficient;
    }
  }
  const std::size_t n = x.rows();
  std::vector<DenseMatrix> per_member(cmde.size());
  parallel_for(cmde.size(), [&](std::size_t m) {
    const Baselearner& bl = cmde.learners()[m];
    BaselearnerWorkspace ws;
    DenseMatrix out(n, k_count);
    for (std::size_t i = 0; i < n; ++i) {
      evaluate(bl, x.row(i), ws);
      for (std::size_t k = 0; k < k_count; ++k) {
        out(i, k) = bl.coefficients()[coef_of[k]] * ws.component_values[k];
      }
    }
    per_member[m] = std::move(out);
  });
  DenseMatrix mean(n, k_count);
  for (const auto& pm : per_member) mean = add(mean, pm);
  return scale(mean, 1.0 / static_cast<double>(cmde.size()));
}

}  // namespace cmde
