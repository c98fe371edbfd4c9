#include "tbsc/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>

#include "tbsc/error.hpp"
#include "tbsc/stats.hpp"

namespace tbsc {

std::vector<double> project_to_simplex(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("cannot project an empty vector");
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::max(v[i] - theta, 0.0);
  return w;
}

namespace {

void check_range(const Panel& panel, IndexRange rows) {
  if (rows.empty() || rows.end > panel.periods()) throw InvalidArgument("invalid row range");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic control

double ScmWeights::predict(std::span<const double> x) const { return dot(omega, x); }

ScmWeights fit_scm(const Panel& panel, IndexRange rows, const ScmOptions& options) {
  check_range(panel, rows);
  const std::size_t N = panel.n_controls();
  ScmWeights out;
  out.training_range = rows;

  auto objective = [&](std::span<const double> w) {
    double s = 0.0;
    for (std::size_t t = rows.begin; t < rows.end; ++t) {
      double r = panel.treated(t) - dot(w, panel.control_row(t));
      s += r * r;
    }
    return s;
  };
  auto gradient = [&](std::span<const double> w, std::vector<double>& g) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t t = rows.begin; t < rows.end; ++t) {
      auto x = panel.control_row(t);
      double r = dot(w, x) - panel.treated(t);
      for (std::size_t i = 0; i < N; ++i) g[i] += 2.0 * r * x[i];
    }
  };

  std::vector<double> w(N, 1.0 / static_cast<double>(N));
  double f = objective(w);
  if (!std::isfinite(f)) throw NumericalError("non-finite synthetic-control objective");
  out.objective_trace.push_back(f);
  if (N == 1) {
    out.omega = {1.0};
    out.objective = f;
    return out;
  }

  // 2 * trace(X'X) bounds the gradient's Lipschitz constant
  double trace = 0.0;
  for (std::size_t t = rows.begin; t < rows.end; ++t) {
    for (double x : panel.control_row(t)) trace += x * x;
  }
  double step = trace > 0.0 ? 1.0 / (2.0 * trace) : 1.0;

  std::vector<double> g(N), trial(N);
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    gradient(w, g);
    step *= 2.0;
    double f_new = f, moved = 0.0;
    bool accepted = false;
    while (step > 1e-300) {
      for (std::size_t i = 0; i < N; ++i) trial[i] = w[i] - step * g[i];
      trial = project_to_simplex(trial);
      double model_decrease = 0.0;
      moved = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        double d = trial[i] - w[i];
        model_decrease += g[i] * d;
        moved += d * d;
      }
      f_new = objective(trial);
      if (!std::isfinite(f_new)) throw NumericalError("non-finite synthetic-control objective");
      if (f_new <= f + model_decrease + moved / (2.0 * step)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    // stationary point, or rounding made the step non-descending
    if (!accepted || moved == 0.0 || f_new > f) break;
    double improvement = f - f_new;
    w = trial;
    f = f_new;
    out.objective_trace.push_back(f);
    if (improvement < options.tol) break;
  }
  out.omega = w;
  out.objective = f;
  return out;
}

// ---------------------------------------------------------------------------
// Elastic net

double EnetFit::predict(std::span<const double> x) const { return mu + dot(omega, x); }

namespace {

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

/// Column-major centred (optionally scaled) design on a row range.
struct CentredDesign {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<double> x;  // x[j * n + i]
  std::vector<double> y;
  std::vector<double> x_mean;
  std::vector<double> scale;  // divide raw column by this
  double y_mean = 0.0;

  std::span<const double> column(std::size_t j) const { return {x.data() + j * n, n}; }
};

CentredDesign centre(const Panel& panel, IndexRange rows, bool standardize) {
  CentredDesign d;
  d.n = rows.size();
  d.p = panel.n_controls();
  d.x.resize(d.n * d.p);
  d.y.resize(d.n);
  d.x_mean.assign(d.p, 0.0);
  d.scale.assign(d.p, 1.0);
  for (std::size_t i = 0; i < d.n; ++i) d.y[i] = panel.treated(rows.begin + i);
  d.y_mean = mean(d.y);
  for (double& v : d.y) v -= d.y_mean;
  for (std::size_t j = 0; j < d.p; ++j) {
    std::vector<double> col(d.n);
    for (std::size_t i = 0; i < d.n; ++i) col[i] = panel.control(rows.begin + i, j);
    d.x_mean[j] = mean(col);
    double sd = standardize ? population_sd(col) : 1.0;
    if (standardize && sd > 0.0) d.scale[j] = sd;
    for (std::size_t i = 0; i < d.n; ++i) d.x[j * d.n + i] = (col[i] - d.x_mean[j]) / d.scale[j];
  }
  return d;
}

double penalty(std::span<const double> omega, double lambda, double alpha_mix) {
  double l2 = 0.0, l1 = 0.0;
  for (double w : omega) {
    l2 += w * w;
    l1 += std::abs(w);
  }
  return lambda * ((1.0 - alpha_mix) / 2.0 * l2 + alpha_mix * l1);
}

}  // namespace

double enet_objective(const Panel& panel, IndexRange rows, double mu, std::span<const double> omega,
                      double lambda, double alpha_mix) {
  check_range(panel, rows);
  double rss = 0.0;
  for (std::size_t t = rows.begin; t < rows.end; ++t) {
    double r = panel.treated(t) - mu - dot(omega, panel.control_row(t));
    rss += r * r;
  }
  return rss / (2.0 * static_cast<double>(rows.size())) + penalty(omega, lambda, alpha_mix);
}

EnetFit fit_enet(const Panel& panel, IndexRange rows, double lambda, double alpha_mix,
                 const EnetOptions& options) {
  check_range(panel, rows);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be >= 0");
  if (!(alpha_mix >= 0.0 && alpha_mix <= 1.0)) throw InvalidArgument("alpha_mix must lie in [0, 1]");

  CentredDesign d = centre(panel, rows, options.standardize);
  const double n = static_cast<double>(d.n);
  std::vector<double> col_sq(d.p);
  for (std::size_t j = 0; j < d.p; ++j) {
    auto c = d.column(j);
    col_sq[j] = dot(c, c) / n;
  }

  std::vector<double> w(d.p, 0.0);
  std::vector<double> r = d.y;
  const double l1 = lambda * alpha_mix;
  const double l2 = lambda * (1.0 - alpha_mix);

  EnetFit fit;
  fit.lambda = lambda;
  fit.alpha_mix = alpha_mix;
  fit.standardized = options.standardize;
  fit.training_range = rows;

  for (std::size_t sweep = 0; sweep < options.max_iter; ++sweep) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < d.p; ++j) {
      auto c = d.column(j);
      double rho = dot(c, r) / n + col_sq[j] * w[j];
      double denom = col_sq[j] + l2;
      double updated = denom > 0.0 ? soft_threshold(rho, l1) / denom : 0.0;
      double delta = updated - w[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < d.n; ++i) r[i] -= delta * c[i];
        w[j] = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    fit.sweeps = sweep + 1;
    double rss = dot(r, r);
    if (!std::isfinite(rss) || !std::isfinite(max_change)) {
      throw NumericalError("elastic net diverged (non-finite objective)");
    }
    if (max_change < options.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.omega.resize(d.p);
  double offset = 0.0;
  for (std::size_t j = 0; j < d.p; ++j) {
    fit.omega[j] = w[j] / d.scale[j];
    offset += fit.omega[j] * d.x_mean[j];
  }
  fit.mu = d.y_mean - offset;
  fit.objective = dot(r, r) / (2.0 * n) + penalty(w, lambda, alpha_mix);
  return fit;
}

double enet_lambda_max(const Panel& panel, IndexRange rows, bool standardize) {
  check_range(panel, rows);
  CentredDesign d = centre(panel, rows, standardize);
  double best = 0.0;
  for (std::size_t j = 0; j < d.p; ++j) {
    best = std::max(best, std::abs(dot(d.column(j), d.y)) / static_cast<double>(d.n));
  }
  return best;
}

std::vector<EnetGridPoint> default_enet_grid(const Panel& panel, IndexRange rows, bool standardize) {
  double top = enet_lambda_max(panel, rows, standardize);
  if (!(top > 0.0)) top = 1.0;
  std::vector<EnetGridPoint> grid;
  for (double a : {0.1, 0.5, 0.9, 1.0}) {
    for (int j = 0; j < 6; ++j) grid.push_back({top * std::pow(10.0, -0.6 * j), a});
  }
  return grid;
}

EnetTuning tune_enet(const Panel& panel, IndexRange range, const SplitSpec& split,
                     const std::vector<EnetGridPoint>& grid, const EnetOptions& options) {
  if (grid.empty()) throw InvalidArgument("elastic-net grid is empty");
  TemporalSplit parts = temporal_split(range, split);
  if (grid.size() == 1) {
    return {grid.front(),
            fit_enet(panel, parts.estimation, grid.front().lambda, grid.front().alpha_mix, options),
            {}};
  }
  EnetTuning result;
  std::optional<std::size_t> best;
  for (const auto& point : grid) {
    EnetFit fit = fit_enet(panel, parts.estimation, point.lambda, point.alpha_mix, options);
    std::vector<double> err;
    for (std::size_t t = parts.validation.begin; t < parts.validation.end; ++t) {
      err.push_back(panel.treated(t) - fit.predict(panel.control_row(t)));
    }
    result.scores.push_back({point, rmse(err)});
    const auto& s = result.scores.back();
    bool take = !best;
    if (best) {
      const auto& b = result.scores[*best];
      take = s.validation_rmspe < b.validation_rmspe ||
             (s.validation_rmspe == b.validation_rmspe && point.lambda > b.point.lambda);
    }
    if (take) {
      best = result.scores.size() - 1;
      result.chosen = point;
      result.fit = std::move(fit);
    }
  }
  return result;
}

EnetTuning tune_enet(const Panel& panel, const SplitSpec& split,
                     const std::vector<EnetGridPoint>& grid, const EnetOptions& options) {
  return tune_enet(panel, panel.pre_range(), split, grid, options);
}

}  // namespace tbsc
