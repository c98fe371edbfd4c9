#include "tbsc/stats.hpp"

#include <algorithm>
#include <cmath>

#include "tbsc/error.hpp"

namespace tbsc {

void CompensatedSum::add(double x) noexcept {
  double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    carry_ += (sum_ - t) + x;
  } else {
    carry_ += (x - t) + sum_;
  }
  sum_ = t;
}

double sum(std::span<const double> xs) noexcept {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw InvalidArgument("mean of empty range");
  return sum(xs) / static_cast<double>(xs.size());
}

namespace {

double sum_sq_dev(std::span<const double> xs) {
  double m = mean(xs);
  CompensatedSum acc;
  for (double x : xs) acc.add((x - m) * (x - m));
  return acc.value();
}

}  // namespace

double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(sum_sq_dev(xs) / static_cast<double>(xs.size() - 1));
}

double population_sd(std::span<const double> xs) {
  if (xs.empty()) throw InvalidArgument("sd of empty range");
  return std::sqrt(sum_sq_dev(xs) / static_cast<double>(xs.size()));
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of empty range");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level outside [0,1]");
  double h = static_cast<double>(sorted.size() - 1) * p;
  auto lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  return quantile_sorted(xs, p);
}

double rmse(std::span<const double> errors) {
  if (errors.empty()) throw InvalidArgument("rmse of empty range");
  CompensatedSum acc;
  for (double e : errors) acc.add(e * e);
  return std::sqrt(acc.value() / static_cast<double>(errors.size()));
}

double mean_abs(std::span<const double> errors) {
  if (errors.empty()) throw InvalidArgument("mae of empty range");
  CompensatedSum acc;
  for (double e : errors) acc.add(std::abs(e));
  return acc.value() / static_cast<double>(errors.size());
}

}  // namespace tbsc
