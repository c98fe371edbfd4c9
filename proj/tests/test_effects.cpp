#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "tbsc/effects.hpp"
#include "tbsc/error.hpp"
#include "tbsc/parallel.hpp"
#include "tbsc/stats.hpp"

using namespace tbsc;
using tbsc::test::make_panel;

namespace {

Panel series_panel(const std::vector<double>& y, std::size_t t0) {
  std::vector<std::vector<double>> x;
  for (std::size_t t = 0; t < y.size(); ++t) x.push_back({double(t % 5)});
  return make_panel(y, x, t0);
}

CounterfactualFit zero_prediction_fit(const std::vector<double>& y, std::size_t t0) {
  Panel p = series_panel(y, t0);
  return make_counterfactual(p, std::vector<double>(y.size(), 0.0), EstimatorKind::scm);
}

}  // namespace

TEST_CASE("gaps are observed minus predicted") {
  Panel p = series_panel({1, 2, 3, 10, 12}, 3);
  auto fit = make_counterfactual(p, {1, 2, 3, 4, 5}, EstimatorKind::forest);
  CHECK(fit.gaps == std::vector<double>{0, 0, 0, 6, 7});
  CHECK(fit.t0 == 3);
  CHECK(fit.periods() == 5);
  CHECK_THROWS_AS(make_counterfactual(p, {1, 2}, EstimatorKind::forest), AlignmentError);
}

TEST_CASE("models trained on post-treatment periods are refused") {
  Panel p = tbsc::test::random_panel(30, 2, 20, 1);
  ScmWeights leaky = fit_scm(p, p.all_range());
  CHECK_THROWS_AS(counterfactual(p, FittedModel{leaky}), LeakageError);
  ScmWeights clean = fit_scm(p, p.pre_range());
  CHECK_NOTHROW(counterfactual(p, FittedModel{clean}));
  ScmWeights early = fit_scm(p, IndexRange{0, 10});
  CHECK_NOTHROW(counterfactual(p, FittedModel{early}));
}

TEST_CASE("average treatment effect estimators") {
  CHECK(ate_hat(zero_prediction_fit({9, 9, 2, 4, 6}, 2)) == doctest::Approx(4.0));
  Panel flat = series_panel({3, 3, 3, 3}, 2);
  CHECK(ate_naive(flat) == 0.0);
  Panel p = series_panel({1, 1, 3, 5}, 2);
  CHECK(ate_naive(p) == doctest::Approx(3.0));
  auto zero_gaps = make_counterfactual(p, {1, 1, 3, 5}, EstimatorKind::scm);
  CHECK(ate_hat(zero_gaps) == 0.0);
}

TEST_CASE("ate_hat equals ate_naive under the pre-mean predictor") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(10, 3);
  std::vector<double> y(40);
  for (auto& v : y) v = z(rng);
  Panel p = series_panel(y, 25);
  double pre_mean = mean(std::span(y).subspan(0, 25));
  auto fit = make_counterfactual(p, std::vector<double>(40, pre_mean), EstimatorKind::scm);
  CHECK(ate_hat(fit) == doctest::Approx(ate_naive(p)).epsilon(1e-12));
}

TEST_CASE("ate_hat is translation equivariant") {
  std::vector<double> y{1, 5, 2, 8, 3, 9, 4};
  std::vector<double> pred{1, 4, 2, 7, 2, 5, 1};
  Panel p = series_panel(y, 3);
  double base = ate_hat(make_counterfactual(p, pred, EstimatorKind::enet));
  for (double c : {2.0, -7.5}) {
    auto shifted = y;
    for (std::size_t t = 3; t < y.size(); ++t) shifted[t] += c;
    double moved = ate_hat(make_counterfactual(series_panel(shifted, 3), pred, EstimatorKind::enet));
    CHECK(moved == doctest::Approx(base + c).epsilon(1e-14));
  }
}

TEST_CASE("bootstrap of a constant gap series") {
  auto fit = zero_prediction_fit({0, 0, 0, 4, 4, 4, 4, 4}, 3);
  BootstrapConfig cfg;
  cfg.n_boot = 500;
  auto r = block_bootstrap_ci(fit, cfg);
  CHECK(r.se == 0.0);
  CHECK(r.ci_low == 4.0);
  CHECK(r.ci_high == 4.0);
}

TEST_CASE("full-length blocks reproduce the cyclic-shift enumeration") {
  std::vector<double> gaps{3, -1, 4, 1, -5, 9, 2, 6};
  BootstrapConfig cfg;
  cfg.n_boot = 300;
  cfg.block_length = gaps.size();
  auto r = block_bootstrap_mean(gaps, cfg);
  std::vector<double> shift_means;
  for (std::size_t s = 0; s < gaps.size(); ++s) {
    double acc = 0;
    for (std::size_t j = 0; j < gaps.size(); ++j) acc += gaps[(s + j) % gaps.size()];
    shift_means.push_back(acc / double(gaps.size()));
  }
  for (double m : r.replicate_means) {
    CHECK(std::find(shift_means.begin(), shift_means.end(), m) != shift_means.end());
  }
  CHECK(r.se == sample_sd(shift_means));
}

TEST_CASE("unit blocks approach the iid standard error") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0, 2);
  std::vector<double> gaps(48);
  for (auto& g : gaps) g = z(rng);
  BootstrapConfig cfg;
  cfg.n_boot = 20000;
  cfg.block_length = 1;
  cfg.seed = 3;
  auto r = block_bootstrap_mean(gaps, cfg);
  double target = population_sd(gaps) / std::sqrt(48.0);
  CHECK(std::abs(r.se / target - 1.0) < 0.05);
}

TEST_CASE("bootstrap is reproducible and thread independent") {
  std::vector<double> gaps{1, 4, 2, 8, 5, 7, 3, 3, 9, 0, 2};
  BootstrapConfig cfg;
  cfg.n_boot = 2000;
  cfg.seed = 42;
  set_thread_cap(1);
  auto a = block_bootstrap_mean(gaps, cfg);
  set_thread_cap(3);
  auto b = block_bootstrap_mean(gaps, cfg);
  set_thread_cap(0);
  CHECK(a.replicate_means == b.replicate_means);
  CHECK(a.ci_low <= mean(gaps));
  CHECK(mean(gaps) <= a.ci_high);
  cfg.seed = 43;
  CHECK(block_bootstrap_mean(gaps, cfg).replicate_means != a.replicate_means);
}

TEST_CASE("bootstrap argument checks") {
  std::vector<double> gaps{1, 2, 3};
  BootstrapConfig cfg;
  cfg.block_length = 4;
  CHECK_THROWS_AS(block_bootstrap_mean(gaps, cfg), InvalidArgument);
  cfg.block_length = 0;
  CHECK_THROWS_AS(block_bootstrap_mean(gaps, cfg), InvalidArgument);
  cfg.block_length = 1;
  cfg.n_boot = 0;
  CHECK_THROWS_AS(block_bootstrap_mean(gaps, cfg), InvalidArgument);
  cfg.n_boot = 10;
  cfg.level = 1.0;
  CHECK_THROWS_AS(block_bootstrap_mean(gaps, cfg), InvalidArgument);
}

TEST_CASE("fit metrics") {
  Panel p = series_panel({1, 2, 3, 4}, 2);
  auto perfect = make_counterfactual(p, {1, 2, 3, 4}, EstimatorKind::forest);
  auto m = fit_metrics(perfect);
  CHECK(m.pre_rmspe == 0.0);
  CHECK(m.post_mae == 0.0);
  CHECK_FALSE(m.ratio_rmspe.has_value());
  CHECK_FALSE(m.ratio_mae.has_value());

  auto fit = make_counterfactual(series_panel({2, 0, 3, 9}, 2), {1, 1, 0, 1}, EstimatorKind::forest);
  auto f = fit_metrics(fit);
  CHECK(f.pre_rmspe == doctest::Approx(1.0));
  CHECK(f.pre_mae == doctest::Approx(1.0));
  CHECK(f.post_rmspe == doctest::Approx(std::sqrt((9.0 + 64.0) / 2.0)));
  CHECK(f.post_mae == doctest::Approx(5.5));
  CHECK(*f.ratio_mae == doctest::Approx(5.5));
  CHECK(f.avg_gap_pre == doctest::Approx(0.0));
  CHECK(f.avg_gap_post == doctest::Approx(5.5));
  CHECK(f.post_std == doctest::Approx(std::sqrt(0.5)));

  auto v = fit_metrics(fit, IndexRange{0, 1}, IndexRange{1, 2});
  CHECK(v.pre_mae == doctest::Approx(1.0));
  CHECK(v.post_mae == doctest::Approx(1.0));
  CHECK_THROWS_AS(fit_metrics(fit, IndexRange{0, 0}, IndexRange{1, 2}), InvalidArgument);
}

TEST_CASE("effect report carries both interval forms") {
  std::vector<double> y{0, 0, 0, 0, 5, 7, 4, 9, 6, 8, 3, 7};
  auto fit = zero_prediction_fit(y, 4);
  Panel p = series_panel(y, 4);
  BootstrapConfig cfg;
  cfg.n_boot = 1000;
  auto r = effect_report(p, fit, cfg);
  CHECK(r.ate_hat == doctest::Approx(6.125));
  CHECK(r.per_period_gaps.size() == 8);
  CHECK(r.ci_normal_high - r.ate_hat == doctest::Approx(1.959963985 * r.boot_se));
  CHECK(r.ci_low <= r.ate_hat);
  CHECK(r.ate_hat <= r.ci_high);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-9));
}

TEST_CASE("gap CSV layout") {
  auto fit = zero_prediction_fit({1.5, 2, 3}, 2);
  std::ostringstream out;
  write_gap_csv(out, fit);
  CHECK(out.str().rfind("week_start,observed,predicted,gap\n2020-01-06,1.5,0,1.5\n", 0) == 0);
}
