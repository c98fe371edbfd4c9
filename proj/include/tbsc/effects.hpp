#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tbsc/estimator.hpp"
#include "tbsc/panel.hpp"

namespace tbsc {

/// Imputed untreated outcomes and gaps (observed minus predicted) at every period.
struct CounterfactualFit {
  std::vector<Date> times;
  std::vector<double> observed;
  std::vector<double> predictions;
  std::vector<double> gaps;
  EstimatorKind estimator = EstimatorKind::forest;
  std::size_t t0 = 0;

  std::size_t periods() const noexcept { return gaps.size(); }
  IndexRange pre_range() const noexcept { return {0, t0}; }
  IndexRange post_range() const noexcept { return {t0, gaps.size()}; }
};

CounterfactualFit make_counterfactual(const Panel& panel, std::vector<double> predictions,
                                      EstimatorKind estimator);

/// Throws LeakageError when the model saw any post-treatment period.
CounterfactualFit counterfactual(const Panel& panel, const FittedModel& model);

/// Mean post-treatment gap.
double ate_hat(const CounterfactualFit& fit);
/// Mean post-treatment outcome minus mean pre-treatment outcome.
double ate_naive(const Panel& panel);

struct BootstrapConfig {
  std::size_t n_boot = 10000;
  std::size_t block_length = 3;
  double level = 0.95;
  std::uint64_t seed = 0;
};

struct BootstrapResult {
  double se = 0.0;
  double ci_low = 0.0;   ///< percentile interval
  double ci_high = 0.0;
  std::vector<double> replicate_means;
};

/// Circular moving-block bootstrap of the mean of `series`. Each replicate
/// concatenates ceil(n / block_length) blocks with uniformly drawn starts,
/// truncated to n. Replicate r draws from stream r of `config.seed`.
BootstrapResult block_bootstrap_mean(std::span<const double> series, const BootstrapConfig& config);
/// Bootstrap over the post-treatment gaps.
BootstrapResult block_bootstrap_ci(const CounterfactualFit& fit, const BootstrapConfig& config);

struct FitMetrics {
  double pre_rmspe = 0, pre_mae = 0;
  double post_rmspe = 0, post_mae = 0;
  std::optional<double> ratio_rmspe;  ///< undefined when pre_rmspe == 0
  std::optional<double> ratio_mae;
  double post_std = 0;  ///< sample sd of post-period predictions
  double avg_gap_pre = 0, avg_gap_post = 0;
};

FitMetrics fit_metrics(const CounterfactualFit& fit);
/// Metrics with explicit "pre" and "post" ranges, e.g. estimation/validation.
FitMetrics fit_metrics(const CounterfactualFit& fit, IndexRange pre, IndexRange post);

struct EffectReport {
  double ate_hat = 0;
  double ate_naive = 0;
  std::vector<double> per_period_gaps;  ///< post-treatment gaps
  double boot_se = 0;
  double ci_low = 0, ci_high = 0;                 ///< percentile
  double ci_normal_low = 0, ci_normal_high = 0;   ///< ate_hat -/+ z * se
  BootstrapConfig boot;
};

EffectReport effect_report(const Panel& panel, const CounterfactualFit& fit,
                           const BootstrapConfig& boot);

/// `week_start,observed,predicted,gap`
void write_gap_csv(std::ostream& out, const CounterfactualFit& fit);
void write_gap_csv(const std::string& path, const CounterfactualFit& fit);

double normal_quantile(double p);

}  // namespace tbsc
