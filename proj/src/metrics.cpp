#include "cmde/metrics.hpp"

#include <cmath>
#include <sstream>

#include "cmde/error.hpp"

namespace cmde {

namespace {

void check_lengths(std::size_t expected, std::initializer_list<std::size_t> sizes) {
  for (std::size_t s : sizes) {
    if (s != expected) {
      std::ostringstream msg;
      msg << "metric inputs have lengths " << expected << " and " << s;
      throw Error(ErrorKind::kLengthMismatch, msg.str());
    }
  }
}

double effect_mse(std::span<const double> a1, std::span<const double> a0,
                  std::span<const double> yhat1, std::span<const double> yhat0) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a1.size(); ++i) {
    const double r = (a1[i] - a0[i]) - (yhat1[i] - yhat0[i]);
    sum += r * r;
  }
  return sum / static_cast<double>(a1.size());
}

}  // namespace

double pehe(std::span<const double> mu1, std::span<const double> mu0,
            std::span<const double> yhat1, std::span<const double> yhat0) {
  if (mu1.empty() || mu0.empty()) {
    throw Error(ErrorKind::kMissingGroundTruth, "pehe needs the mu0 and mu1 columns");
  }
  check_lengths(mu1.size(), {mu0.size(), yhat1.size(), yhat0.size()});
  return effect_mse(mu1, mu0, yhat1, yhat0);
}

double empirical_pehe(std::span<const double> y1, std::span<const double> y0,
                      std::span<const double> yhat1, std::span<const double> yhat0) {
  if (y1.empty() || y0.empty()) {
    throw Error(ErrorKind::kMissingGroundTruth, "empirical pehe needs the y0 and y1 columns");
  }
  check_lengths(y1.size(), {y0.size(), yhat1.size(), yhat0.size()});
  return effect_mse(y1, y0, yhat1, yhat0);
}

std::vector<int> treatment_policy(std::span<const double> yhat1, std::span<const double> yhat0) {
  check_lengths(yhat1.size(), {yhat0.size()});
  std::vector<int> policy(yhat1.size());
  for (std::size_t i = 0; i < policy.size(); ++i) policy[i] = yhat1[i] > yhat0[i] ? 1 : 0;
  return policy;
}

double policy_risk(std::span<const double> y_factual, std::span<const int> t,
                   std::span<const int> policy) {
  check_lengths(y_factual.size(), {t.size(), policy.size()});
  double sum = 0.0;
  std::size_t matched = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (policy[i] != t[i]) continue;
    sum += y_factual[i];
    ++matched;
  }
  if (matched == 0) {
    throw Error(ErrorKind::kNoMatchedRows, "policy risk is undefined: no row follows the policy");
  }
  return 1.0 - sum / static_cast<double>(matched);
}

double ate_error(double ate_true, std::span<const double> yhat1, std::span<const double> yhat0) {
  if (yhat1.empty()) throw Error(ErrorKind::kEmptyPredictions, "ate error needs predictions");
  check_lengths(yhat1.size(), {yhat0.size()});
  double sum = 0.0;
  for (std::size_t i = 0; i < yhat1.size(); ++i) sum += yhat1[i] - yhat0[i];
  return std::abs(ate_true - sum / static_cast<double>(yhat1.size()));
}

nlohmann::ordered_json to_json(const MetricReport& report) {
  nlohmann::ordered_json doc;
  doc["metric"] = report.metric;
  doc["value"] = report.value;
  doc["n"] = report.n;
  doc["columns"] = report.columns;
  return doc;
}

}  // namespace cmde
