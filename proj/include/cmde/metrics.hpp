#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cmde {

// (1/N) sum ((mu1 - mu0) - (yhat1 - yhat0))^2. Empty ground truth throws
// kMissingGroundTruth; unequal lengths throw kLengthMismatch.
double pehe(std::span<const double> mu1, std::span<const double> mu0,
            std::span<const double> yhat1, std::span<const double> yhat0);

// pehe with observed paired outcomes in place of the means.
double empirical_pehe(std::span<const double> y1, std::span<const double> y0,
                      std::span<const double> yhat1, std::span<const double> yhat0);

// pi(x) = 1 iff yhat1 > yhat0; ties decline treatment.
std::vector<int> treatment_policy(std::span<const double> yhat1, std::span<const double> yhat0);

// 1 - mean of y over rows where policy == t; kNoMatchedRows when none match.
double policy_risk(std::span<const double> y_factual, std::span<const int> t,
                   std::span<const int> policy);

// |ate_true - mean(yhat1 - yhat0)|; kEmptyPredictions for no rows.
double ate_error(double ate_true, std::span<const double> yhat1, std::span<const double> yhat0);

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  std::vector<std::string> columns;  // ground-truth columns used
};

nlohmann::ordered_json to_json(const MetricReport& report);

}  // namespace cmde
