#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tbsc/effects.hpp"
#include "tbsc/estimator.hpp"
#include "tbsc/panel.hpp"

namespace tbsc {

// ---------------------------------------------------------------------------
// Placebo studies

struct PlaceboOptions {
  double exclusion_multiplier = 2.0;
  /// Put the original treated unit into each placebo's donor pool.
  bool treated_as_donor = true;
  /// Master seed; unit u fits with derive_seed(seed, hash_name(u)).
  std::uint64_t seed = 0;
};

struct PlaceboRun {
  std::string unit;
  std::optional<CounterfactualFit> fit;
  std::optional<FitMetrics> metrics;
  std::string error;  ///< non-empty when the run failed

  bool ok() const noexcept { return fit.has_value(); }
};

struct PlaceboStudy {
  std::vector<PlaceboRun> runs;  ///< one per control, in panel order
  PlaceboOptions options;
};

/// Seed used for `unit`'s fit under master `seed`.
std::uint64_t placebo_seed(std::uint64_t seed, std::string_view unit);

/// Panel with control `unit` relabelled as treated. Donors are sorted by name.
Panel placebo_panel(const Panel& panel, const std::string& unit, bool treated_as_donor);

/// Relabels each control as treated and reruns the estimator with the same
/// t0 and seed policy. A failing unit is recorded, not fatal.
PlaceboStudy run_placebos(const Panel& panel, const EstimatorSpec& spec,
                          const PlaceboOptions& options = {});

struct PlaceboRankRow {
  std::string unit;
  bool is_main = false;
  bool excluded = false;
  FitMetrics metrics;
};

struct PlaceboRankReport {
  std::vector<PlaceboRankRow> rows;  ///< by RMSPE ratio, descending (undefined last)
  std::size_t main_rank_ratio = 0;   ///< 1-based
  std::size_t main_rank_gap = 0;     ///< 1-based, by |average post gap|
  std::vector<std::string> excluded;
  std::vector<std::string> failures;
  /// Mean of avg_gap_post and avg_gap_pre over retained placebo units.
  double placebo_mean_gap_post = 0.0;
  double placebo_mean_gap_pre = 0.0;
};

/// Placebo units whose pre-period RMSPE exceeds `exclusion_multiplier` times
/// the main unit's are flagged as excluded.
PlaceboRankReport placebo_rank_report(const PlaceboStudy& study, const std::string& main_unit,
                                      const FitMetrics& main);

// ---------------------------------------------------------------------------
// Conformal permutation inference

enum class PermutationScheme { iid, moving_block };

std::string_view to_string(PermutationScheme scheme);
PermutationScheme parse_scheme(std::string_view text);

/// ((1/sqrt(n)) * sum |u_t|^q)^(1/q) over the n given residuals.
double conformal_statistic(std::span<const double> residuals, double q = 1.0);

struct ConformalOptions {
  PermutationScheme scheme = PermutationScheme::moving_block;
  std::size_t n_samples = 10000;  ///< iid only; includes the identity
  std::uint64_t seed = 0;
  double q = 1.0;
};

struct Histogram {
  double low = 0.0;
  double high = 0.0;
  std::vector<std::size_t> counts;
};

struct ConformalResult {
  double statistic = 0.0;
  double p_value = 1.0;
  PermutationScheme scheme = PermutationScheme::moving_block;
  std::size_t n_permutations = 0;
  std::uint64_t seed = 0;
  double q = 1.0;
  std::size_t t0 = 0;
  std::vector<double> null_trajectory;
  std::vector<double> residuals;               ///< length T
  std::vector<double> permutation_statistics;  ///< identity first
  Histogram histogram;
};

/// p = 1 - F(S_obs) with F(x) the share of permuted statistics strictly
/// below x. Moving-block uses all T cyclic shifts; iid uses the identity
/// plus n_samples - 1 uniformly drawn permutations. The statistic is read
/// off positions t0..T-1 of each permuted residual vector.
ConformalResult conformal_pvalue(std::span<const double> residuals, std::size_t t0,
                                 const ConformalOptions& options);

/// Tests H0: tau_t = null_trajectory[t - t0] for every post period by
/// subtracting the null from post outcomes, refitting on all T periods and
/// permuting the residuals.
ConformalResult conformal_test(const Panel& panel, const EstimatorSpec& spec,
                               std::span<const double> null_trajectory,
                               const ConformalOptions& options);

struct SpecTestRow {
  std::size_t kappa = 0;
  double p_iid = 1.0;
  double p_moving_block = 1.0;
};

/// For kappa = 1..kappa_max: drops post-treatment data, moves the onset back
/// by kappa periods and tests a zero effect under both schemes.
std::vector<SpecTestRow> placebo_specification_test(const Panel& panel, const EstimatorSpec& spec,
                                                    std::size_t kappa_max,
                                                    const ConformalOptions& options);

Histogram make_histogram(std::span<const double> values, std::size_t bins = 50);

}  // namespace tbsc
