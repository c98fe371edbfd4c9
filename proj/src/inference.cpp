#include "tbsc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tbsc/error.hpp"
#include "tbsc/parallel.hpp"
#include "tbsc/rng.hpp"

namespace tbsc {

// ---------------------------------------------------------------------------
// Placebos

std::uint64_t placebo_seed(std::uint64_t seed, std::string_view unit) {
  return derive_seed(seed, hash_name(unit));
}

Panel placebo_panel(const Panel& panel, const std::string& unit, bool treated_as_donor) {
  const auto& names = panel.control_names();
  if (std::find(names.begin(), names.end(), unit) == names.end()) {
    throw AlignmentError("'" + unit + "' is not a control unit");
  }
  WeeklySeries series = to_weekly_series(panel);
  std::vector<std::string> donors;
  for (const auto& name : names) {
    if (name != unit) donors.push_back(name);
  }
  if (treated_as_donor) donors.push_back(panel.treated_name());
  if (donors.empty()) throw InvalidArgument("placebo for '" + unit + "' has no donors");
  std::sort(donors.begin(), donors.end());
  return build_panel(series, unit, panel.t0(), donors);
}

PlaceboStudy run_placebos(const Panel& panel, const EstimatorSpec& spec,
                          const PlaceboOptions& options) {
  if (panel.n_controls() < 2) throw InvalidArgument("placebo study needs at least two controls");
  PlaceboStudy study;
  study.options = options;
  study.runs.resize(panel.n_controls());
  parallel_for(panel.n_controls(), [&](std::size_t j) {
    PlaceboRun& run = study.runs[j];
    run.unit = panel.control_names()[j];
    try {
      Panel p = placebo_panel(panel, run.unit, options.treated_as_donor);
      EstimatorSpec s = with_seed(spec, placebo_seed(options.seed, run.unit));
      FittedEstimator fitted = fit_estimator(p, p.pre_range(), s);
      run.fit = counterfactual(p, fitted.model);
      run.metrics = fit_metrics(*run.fit);
    } catch (const std::exception& e) {
      run.fit.reset();
      run.metrics.reset();
      run.error = e.what();
    }
  });
  return study;
}

PlaceboRankReport placebo_rank_report(const PlaceboStudy& study, const std::string& main_unit,
                                      const FitMetrics& main) {
  PlaceboRankReport report;
  report.rows.push_back({main_unit, true, false, main});
  double limit = study.options.exclusion_multiplier * main.pre_rmspe;
  double gap_post = 0.0, gap_pre = 0.0;
  std::size_t kept = 0;
  for (const auto& run : study.runs) {
    if (!run.ok()) {
      report.failures.push_back(run.unit + ": " + run.error);
      continue;
    }
    bool excluded = run.metrics->pre_rmspe > limit;
    if (excluded) {
      report.excluded.push_back(run.unit);
    } else {
      gap_post += run.metrics->avg_gap_post;
      gap_pre += run.metrics->avg_gap_pre;
      ++kept;
    }
    report.rows.push_back({run.unit, false, excluded, *run.metrics});
  }
  if (kept > 0) {
    report.placebo_mean_gap_post = gap_post / static_cast<double>(kept);
    report.placebo_mean_gap_pre = gap_pre / static_cast<double>(kept);
  }

  std::stable_sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) {
    const auto& ra = a.metrics.ratio_rmspe;
    const auto& rb = b.metrics.ratio_rmspe;
    if (ra.has_value() != rb.has_value()) return ra.has_value();
    if (ra && *ra != *rb) return *ra > *rb;
    return a.unit < b.unit;
  });
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    if (report.rows[i].is_main) report.main_rank_ratio = i + 1;
  }
  double main_gap = std::abs(main.avg_gap_post);
  report.main_rank_gap = 1;
  for (const auto& row : report.rows) {
    if (!row.is_main && std::abs(row.metrics.avg_gap_post) > main_gap) ++report.main_rank_gap;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Conformal inference

std::string_view to_string(PermutationScheme scheme) {
  return scheme == PermutationScheme::iid ? "iid" : "moving-block";
}

PermutationScheme parse_scheme(std::string_view text) {
  if (text == "iid") return PermutationScheme::iid;
  if (text == "moving-block" || text == "moving_block") return PermutationScheme::moving_block;
  throw InvalidArgument("unknown permutation scheme '" + std::string(text) + "' (iid, moving-block)");
}

double conformal_statistic(std::span<const double> residuals, double q) {
  if (residuals.empty()) throw InvalidArgument("conformal statistic of an empty residual vector");
  if (!(q >= 1.0)) throw InvalidArgument("norm order q must be at least 1");
  double s = 0.0;
  if (q == 1.0) {
    for (double u : residuals) s += std::abs(u);
    return s / std::sqrt(static_cast<double>(residuals.size()));
  }
  for (double u : residuals) s += std::pow(std::abs(u), q);
  return std::pow(s / std::sqrt(static_cast<double>(residuals.size())), 1.0 / q);
}

Histogram make_histogram(std::span<const double> values, std::size_t bins) {
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty() || bins == 0) return h;
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  h.low = *lo;
  h.high = *hi;
  double width = (h.high - h.low) / static_cast<double>(bins);
  for (double v : values) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((v - h.low) / width) : 0;
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

ConformalResult conformal_pvalue(std::span<const double> residuals, std::size_t t0,
                                 const ConformalOptions& options) {
  const std::size_t T = residuals.size();
  if (t0 < 1 || t0 >= T) throw InvalidArgument("onset must leave pre and post periods");
  const std::size_t n_post = T - t0;

  ConformalResult out;
  out.scheme = options.scheme;
  out.q = options.q;
  out.t0 = t0;
  out.residuals.assign(residuals.begin(), residuals.end());
  out.statistic = conformal_statistic(residuals.subspan(t0), options.q);

  if (options.scheme == PermutationScheme::moving_block) {
    out.n_permutations = T;
    out.permutation_statistics.resize(T);
    parallel_for(T, [&](std::size_t shift) {
      std::vector<double> block(n_post);
      for (std::size_t j = 0; j < n_post; ++j) block[j] = residuals[(t0 + j + shift) % T];
      out.permutation_statistics[shift] = conformal_statistic(block, options.q);
    });
  } else {
    if (options.n_samples < 1) throw InvalidArgument("iid scheme needs at least one permutation");
    out.seed = options.seed;
    out.n_permutations = options.n_samples;
    out.permutation_statistics.resize(options.n_samples);
    out.permutation_statistics[0] = out.statistic;
    parallel_for(options.n_samples - 1, [&](std::size_t s) {
      Engine rng = make_engine(options.seed, s);
      std::vector<std::size_t> perm(T);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<double> block(n_post);
      for (std::size_t j = 0; j < n_post; ++j) block[j] = residuals[perm[t0 + j]];
      out.permutation_statistics[s + 1] = conformal_statistic(block, options.q);
    });
  }

  std::size_t at_least = 0;
  for (double s : out.permutation_statistics) {
    if (!(s < out.statistic)) ++at_least;
  }
  out.p_value = static_cast<double>(at_least) / static_cast<double>(out.n_permutations);
  out.histogram = make_histogram(out.permutation_statistics);
  return out;
}

namespace {

std::vector<double> full_sample_residuals(const Panel& panel, const EstimatorSpec& spec,
                                          std::span<const double> null_trajectory) {
  const std::size_t T = panel.periods(), t0 = panel.t0();
  if (null_trajectory.size() != T - t0) {
    throw InvalidArgument("null trajectory has length " + std::to_string(null_trajectory.size()) +
                          ", expected " + std::to_string(T - t0));
  }
  std::vector<double> adjusted(panel.treated().begin(), panel.treated().end());
  for (std::size_t t = t0; t < T; ++t) adjusted[t] -= null_trajectory[t - t0];
  Panel p = panel.with_treated(adjusted);
  auto fitted = [&] {
    try {
      return fit_estimator(p, p.all_range(), spec);
    } catch (const Error& e) {
      throw Error(std::string("estimator could not be fit on the full sample: ") + e.what());
    }
  }();
  std::vector<double> pred = predict_panel(fitted.model, p);
  for (std::size_t t = 0; t < T; ++t) adjusted[t] -= pred[t];
  return adjusted;
}

}  // namespace

ConformalResult conformal_test(const Panel& panel, const EstimatorSpec& spec,
                               std::span<const double> null_trajectory,
                               const ConformalOptions& options) {
  auto residuals = full_sample_residuals(panel, spec, null_trajectory);
  ConformalResult out = conformal_pvalue(residuals, panel.t0(), options);
  out.null_trajectory.assign(null_trajectory.begin(), null_trajectory.end());
  return out;
}

std::vector<SpecTestRow> placebo_specification_test(const Panel& panel, const EstimatorSpec& spec,
                                                    std::size_t kappa_max,
                                                    const ConformalOptions& options) {
  if (kappa_max < 1 || kappa_max >= panel.t0()) {
    throw InvalidArgument("kappa_max must lie in [1, T0) with T0 = " + std::to_string(panel.t0()));
  }
  std::vector<SpecTestRow> rows;
  for (std::size_t kappa = 1; kappa <= kappa_max; ++kappa) {
    Panel sub = panel.truncated(panel.t0(), panel.t0() - kappa);
    std::vector<double> zero(kappa, 0.0);
    auto residuals = full_sample_residuals(sub, spec, zero);
    ConformalOptions iid = options, block = options;
    iid.scheme = PermutationScheme::iid;
    block.scheme = PermutationScheme::moving_block;
    rows.push_back({kappa, conformal_pvalue(residuals, sub.t0(), iid).p_value,
                    conformal_pvalue(residuals, sub.t0(), block).p_value});
  }
  return rows;
}

}  // namespace tbsc
