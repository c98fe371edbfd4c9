#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tbsc {

/// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

double sum(std::span<const double> xs) noexcept;
double mean(std::span<const double> xs);
/// Sample (n-1) standard deviation; 0 for fewer than two values.
double sample_sd(std::span<const double> xs);
/// Population (n) standard deviation.
double population_sd(std::span<const double> xs);

/// Quantile with linear interpolation between order statistics
/// (h = (n-1)p). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> xs, double p);

double rmse(std::span<const double> errors);
double mean_abs(std::span<const double> errors);

}  // namespace tbsc
