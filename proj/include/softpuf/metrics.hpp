#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "softpuf/error.hpp"

namespace softpuf::model {

struct MetricsReport {
  double mae = 0.0;
  double mse = 0.0;
  double r2 = 1.0;
  double mape = 0.0;  // ratio, not percent
  double sign_accuracy = 1.0;
};

inline constexpr double kMapeEpsilon = 1e-12;

// sign(0) counts as positive.
inline bool same_sign(double a, double b) { return (a >= 0.0) == (b >= 0.0); }

inline MetricsReport metrics(std::span<const double> predicted, std::span<const double> actual) {
  require(!actual.empty(), "metrics need at least one value");
  require(predicted.size() == actual.size(), "predicted/actual length mismatch");
  const auto n = static_cast<double>(actual.size());

  double mean_actual = 0.0;
  for (double a : actual) mean_actual += a;
  mean_actual /= n;

  double abs_sum = 0.0, sq_sum = 0.0, ape_sum = 0.0, ss_tot = 0.0;
  std::size_t sign_hits = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double r = predicted[i] - actual[i];
    abs_sum += std::abs(r);
    sq_sum += r * r;
    ape_sum += std::abs(r) / std::max(std::abs(actual[i]), kMapeEpsilon);
    ss_tot += (actual[i] - mean_actual) * (actual[i] - mean_actual);
    sign_hits += same_sign(predicted[i], actual[i]) ? 1 : 0;
  }

  MetricsReport m;
  m.mae = abs_sum / n;
  m.mse = sq_sum / n;
  m.mape = ape_sum / n;
  m.sign_accuracy = static_cast<double>(sign_hits) / n;
  if (ss_tot == 0.0) {
    // Constant target: a perfect fit is the only case with a defined score.
    if (sq_sum > 0.0) fail(ErrorCode::undefined_r2, "R^2 undefined for constant actual values with nonzero residuals");
    m.r2 = 1.0;
  } else {
    m.r2 = sq_sum == 0.0 ? 1.0 : 1.0 - sq_sum / ss_tot;
    if (m.r2 == 1.0 && sq_sum > 0.0) m.r2 = std::nextafter(1.0, 0.0);
  }
  return m;
}

}  // namespace softpuf::model
