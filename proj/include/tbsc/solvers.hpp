#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "tbsc/panel.hpp"

namespace tbsc {

/// Euclidean projection onto the probability simplex (sort-based, exact).
std::vector<double> project_to_simplex(std::span<const double> v);

/// Classic synthetic-control weights: nonnegative, summing to one.
struct ScmWeights {
  std::vector<double> omega;
  double objective = 0.0;             ///< sum of squared pre-period residuals
  std::vector<double> objective_trace;  ///< objective at the start and after each step
  IndexRange training_range;

  double predict(std::span<const double> x) const;
};

struct ScmOptions {
  double tol = 1e-8;
  std::size_t max_iter = 100000;
};

/// Projected gradient descent with backtracking on
/// sum_t (Y_t - <omega, X_t>)^2 over the simplex, started at uniform weights.
/// Stops once an accepted step improves the objective by less than `tol`.
ScmWeights fit_scm(const Panel& panel, IndexRange rows, const ScmOptions& options = {});

struct EnetOptions {
  double tol = 1e-8;
  std::size_t max_iter = 100000;
  /// Scale predictors to unit variance before fitting; coefficients are
  /// reported on the original scale.
  bool standardize = false;
};

/// Elastic-net weights with a free intercept, minimising
///   1/(2n) sum_t (Y_t - mu - <omega, X_t>)^2
///     + lambda * ((1 - alpha)/2 * |omega|_2^2 + alpha * |omega|_1).
struct EnetFit {
  double mu = 0.0;
  std::vector<double> omega;
  double lambda = 0.0;
  double alpha_mix = 1.0;
  double objective = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
  bool standardized = false;
  IndexRange training_range;

  double predict(std::span<const double> x) const;
};

/// Cyclic coordinate descent on centred data with soft-thresholding updates;
/// converged when the largest coordinate change in a sweep is below `tol`.
EnetFit fit_enet(const Panel& panel, IndexRange rows, double lambda, double alpha_mix,
                 const EnetOptions& options = {});

/// Penalised objective of (mu, omega) on `rows`, in the scale the fit used.
double enet_objective(const Panel& panel, IndexRange rows, double mu, std::span<const double> omega,
                      double lambda, double alpha_mix);

struct EnetGridPoint {
  double lambda = 0.0;
  double alpha_mix = 1.0;
};

/// Smallest lambda that zeroes every coefficient of the lasso on `rows`.
double enet_lambda_max(const Panel& panel, IndexRange rows, bool standardize = false);

/// Six log-spaced lambdas from lambda_max down to 1e-3 * lambda_max, crossed
/// with alpha_mix in {0.1, 0.5, 0.9, 1.0}: 24 points.
std::vector<EnetGridPoint> default_enet_grid(const Panel& panel, IndexRange rows,
                                             bool standardize = false);

struct EnetScore {
  EnetGridPoint point;
  double validation_rmspe = 0.0;
};

struct EnetTuning {
  EnetGridPoint chosen;
  EnetFit fit;  ///< fit on the estimation block at `chosen`
  std::vector<EnetScore> scores;
};

/// Fits every grid point on the estimation part of `range` and keeps the
/// lowest validation RMSPE (ties: larger lambda).
EnetTuning tune_enet(const Panel& panel, IndexRange range, const SplitSpec& split,
                     const std::vector<EnetGridPoint>& grid, const EnetOptions& options = {});
EnetTuning tune_enet(const Panel& panel, const SplitSpec& split,
                     const std::vector<EnetGridPoint>& grid, const EnetOptions& options = {});

}  // namespace tbsc
