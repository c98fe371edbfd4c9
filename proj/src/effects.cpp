#include "tbsc/effects.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <boost/math/distributions/normal.hpp>

#include "tbsc/csv.hpp"
#include "tbsc/error.hpp"
#include "tbsc/parallel.hpp"
#include "tbsc/rng.hpp"
#include "tbsc/stats.hpp"

namespace tbsc {

CounterfactualFit make_counterfactual(const Panel& panel, std::vector<double> predictions,
                                      EstimatorKind estimator) {
  if (predictions.size() != panel.periods()) throw AlignmentError("one prediction per period expected");
  CounterfactualFit fit;
  fit.times = panel.times();
  fit.observed.assign(panel.treated().begin(), panel.treated().end());
  fit.predictions = std::move(predictions);
  fit.gaps.resize(fit.observed.size());
  for (std::size_t t = 0; t < fit.gaps.size(); ++t) fit.gaps[t] = fit.observed[t] - fit.predictions[t];
  fit.estimator = estimator;
  fit.t0 = panel.t0();
  return fit;
}

CounterfactualFit counterfactual(const Panel& panel, const FittedModel& model) {
  IndexRange trained = training_range(model);
  if (trained.end > panel.t0()) {
    throw LeakageError("model was trained on periods up to " + std::to_string(trained.end) +
                       " but treatment starts after period " + std::to_string(panel.t0()));
  }
  return make_counterfactual(panel, predict_panel(model, panel), kind_of(model));
}

double ate_hat(const CounterfactualFit& fit) {
  if (fit.t0 >= fit.periods()) throw InvalidArgument("no post-treatment periods");
  return mean(std::span(fit.gaps).subspan(fit.t0));
}

double ate_naive(const Panel& panel) {
  auto y = panel.treated();
  return mean(y.subspan(panel.t0())) - mean(y.subspan(0, panel.t0()));
}

BootstrapResult block_bootstrap_mean(std::span<const double> series, const BootstrapConfig& config) {
  const std::size_t n = series.size();
  if (config.n_boot < 1) throw InvalidArgument("n_boot must be at least 1");
  if (n == 0) throw InvalidArgument("cannot bootstrap an empty series");
  if (config.block_length < 1 || config.block_length > n) {
    throw InvalidArgument("block length must lie in [1, " + std::to_string(n) + "]");
  }
  if (!(config.level > 0.0 && config.level < 1.0)) throw InvalidArgument("level must lie in (0, 1)");

  const std::size_t blocks = (n + config.block_length - 1) / config.block_length;
  BootstrapResult out;
  out.replicate_means.resize(config.n_boot);
  parallel_for(config.n_boot, [&](std::size_t r) {
    Engine rng = make_engine(config.seed, r);
    std::uniform_int_distribution<std::size_t> start(0, n - 1);
    CompensatedSum acc;
    std::size_t taken = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
      std::size_t s = start(rng);
      for (std::size_t j = 0; j < config.block_length && taken < n; ++j, ++taken) {
        acc.add(series[(s + j) % n]);
      }
    }
    out.replicate_means[r] = acc.value() / static_cast<double>(n);
  });

  out.se = sample_sd(out.replicate_means);
  std::vector<double> sorted = out.replicate_means;
  std::sort(sorted.begin(), sorted.end());
  double tail = (1.0 - config.level) / 2.0;
  out.ci_low = quantile_sorted(sorted, tail);
  out.ci_high = quantile_sorted(sorted, 1.0 - tail);
  return out;
}

BootstrapResult block_bootstrap_ci(const CounterfactualFit& fit, const BootstrapConfig& config) {
  if (fit.t0 >= fit.periods()) throw InvalidArgument("no post-treatment periods");
  return block_bootstrap_mean(std::span(fit.gaps).subspan(fit.t0), config);
}

FitMetrics fit_metrics(const CounterfactualFit& fit, IndexRange pre, IndexRange post) {
  if (pre.empty() || post.empty() || pre.end > fit.periods() || post.end > fit.periods()) {
    throw InvalidArgument("invalid metric ranges");
  }
  std::span<const double> gaps(fit.gaps);
  auto pre_gaps = gaps.subspan(pre.begin, pre.size());
  auto post_gaps = gaps.subspan(post.begin, post.size());
  FitMetrics m;
  m.pre_rmspe = rmse(pre_gaps);
  m.pre_mae = mean_abs(pre_gaps);
  m.post_rmspe = rmse(post_gaps);
  m.post_mae = mean_abs(post_gaps);
  if (m.pre_rmspe > 0.0) m.ratio_rmspe = m.post_rmspe / m.pre_rmspe;
  if (m.pre_mae > 0.0) m.ratio_mae = m.post_mae / m.pre_mae;
  m.post_std = sample_sd(std::span(fit.predictions).subspan(post.begin, post.size()));
  m.avg_gap_pre = mean(pre_gaps);
  m.avg_gap_post = mean(post_gaps);
  return m;
}

FitMetrics fit_metrics(const CounterfactualFit& fit) {
  return fit_metrics(fit, fit.pre_range(), fit.post_range());
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

EffectReport effect_report(const Panel& panel, const CounterfactualFit& fit,
                           const BootstrapConfig& boot) {
  EffectReport r;
  r.ate_hat = ate_hat(fit);
  r.ate_naive = ate_naive(panel);
  r.per_period_gaps.assign(fit.gaps.begin() + static_cast<long>(fit.t0), fit.gaps.end());
  BootstrapResult b = block_bootstrap_ci(fit, boot);
  r.boot_se = b.se;
  r.ci_low = b.ci_low;
  r.ci_high = b.ci_high;
  double z = normal_quantile(0.5 + boot.level / 2.0);
  r.ci_normal_low = r.ate_hat - z * b.se;
  r.ci_normal_high = r.ate_hat + z * b.se;
  r.boot = boot;
  return r;
}

void write_gap_csv(std::ostream& out, const CounterfactualFit& fit) {
  csv::write_record(out, {"week_start", "observed", "predicted", "gap"});
  for (std::size_t t = 0; t < fit.periods(); ++t) {
    csv::write_record(out, {format_iso_date(fit.times[t]), csv::format_double(fit.observed[t]),
                            csv::format_double(fit.predictions[t]), csv::format_double(fit.gaps[t])});
  }
}

void write_gap_csv(const std::string& path, const CounterfactualFit& fit) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_gap_csv(out, fit);
}

}  // namespace tbsc
