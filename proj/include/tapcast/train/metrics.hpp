#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tapcast/error.hpp"

namespace tapcast::train {

struct ErrorStats {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t count = 0;
};

// Running squared/absolute error sums, added in call order.
class ErrorAccumulator {
 public:
  template <typename T>
  void add(std::span<const T> pred, std::span<const T> target) {
    if (pred.size() != target.size()) throw DimensionError("metrics: prediction/target length mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
      sq_ += e * e;
      abs_ += std::abs(e);
    }
    count_ += pred.size();
  }

  ErrorStats result() const {
    if (count_ == 0) return {};
    return {sq_ / static_cast<double>(count_), abs_ / static_cast<double>(count_), count_};
  }

 private:
  double sq_ = 0.0;
  double abs_ = 0.0;
  std::size_t count_ = 0;
};

struct HorizonMetrics {
  std::size_t horizon = 0;
  double mse = 0.0;
  double mae = 0.0;
};

struct Metrics {
  std::vector<HorizonMetrics> per_horizon;
  double avg_mse = 0.0;
  double avg_mae = 0.0;
};

// Arithmetic mean over horizons.
inline Metrics summarize(std::vector<HorizonMetrics> per_horizon) {
  Metrics m;
  m.per_horizon = std::move(per_horizon);
  if (m.per_horizon.empty()) return m;
  for (const auto& h : m.per_horizon) {
    m.avg_mse += h.mse;
    m.avg_mae += h.mae;
  }
  m.avg_mse /= static_cast<double>(m.per_horizon.size());
  m.avg_mae /= static_cast<double>(m.per_horizon.size());
  return m;
}

inline double round_to(double v, int decimals) {
  const double s = std::pow(10.0, decimals);
  return std::round(v * s) / s;
}

}  // namespace tapcast::train
