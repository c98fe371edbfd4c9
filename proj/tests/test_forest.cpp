#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "tbsc/error.hpp"
#include "tbsc/forest.hpp"
#include "tbsc/parallel.hpp"
#include "tbsc/simulate.hpp"
#include "tbsc/solvers.hpp"
#include "tbsc/stats.hpp"

using namespace tbsc;
using tbsc::test::make_panel;
using tbsc::test::random_panel;

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

ForestConfig config(double alpha, std::size_t k, std::size_t m_leaf, std::optional<std::size_t> mtry = {}) {
  ForestConfig c;
  c.alpha = alpha;
  c.k = k;
  c.m_leaf = m_leaf;
  c.mtry = mtry;
  return c;
}

Panel transform_column(const Panel& p, std::size_t col, double (*f)(double)) {
  std::vector<std::vector<double>> x(p.periods());
  for (std::size_t t = 0; t < p.periods(); ++t) {
    auto row = p.control_row(t);
    x[t].assign(row.begin(), row.end());
    x[t][col] = f(x[t][col]);
  }
  return make_panel(std::vector<double>(p.treated().begin(), p.treated().end()), x, p.t0());
}

double sse(const std::vector<double>& pred, const Panel& p, IndexRange r) {
  double s = 0;
  for (std::size_t t = r.begin; t < r.end; ++t) s += std::pow(p.treated(t) - pred[t], 2);
  return s;
}

}  // namespace

TEST_CASE("one-dimensional split example") {
  Panel p = make_panel({0, 0, 10, 10, 99}, {{1}, {2}, {3}, {4}, {0}}, 4);
  Engine rng(1);
  auto rows = all_rows(4);
  Tree tree = fit_tree(p, rows, config(0.25, 1, 2), rng);
  const auto& root = tree.root();
  REQUIRE_FALSE(root.is_leaf());
  CHECK(root.direction == 0);
  CHECK(root.threshold == 2.5);
  CHECK(root.split_sse == 0.0);
  const auto& left = tree.nodes[static_cast<std::size_t>(root.left)];
  const auto& right = tree.nodes[static_cast<std::size_t>(root.right)];
  REQUIRE(left.is_leaf());
  REQUIRE(right.is_leaf());
  CHECK(left.value == 0.0);
  CHECK(right.value == 10.0);
  CHECK(left.members == std::vector<std::uint32_t>{0, 1});
  std::vector<double> q{2.0};
  CHECK(tree.predict(q) == 0.0);
}

TEST_CASE("identical control rows give a single leaf") {
  Panel p = make_panel({1, 2, 3, 6, 0}, {{1, 1}, {1, 1}, {1, 1}, {1, 1}, {1, 1}}, 4);
  Engine rng(3);
  auto rows = all_rows(4);
  Tree tree = fit_tree(p, rows, config(0.1, 1, 2), rng);
  CHECK(tree.nodes.size() == 1);
  CHECK(tree.root().value == doctest::Approx(3.0));
}

TEST_CASE("fit_tree needs at least k rows") {
  Panel p = random_panel(20, 2, 10, 1);
  Engine rng(1);
  std::vector<std::size_t> rows{0, 1, 2};
  CHECK_THROWS_AS(fit_tree(p, rows, config(0.1, 5, 10), rng), InvalidArgument);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(config(0.5, 1, 4).validate(2), InvalidArgument);
  CHECK_THROWS_AS(config(0.0, 1, 4).validate(2), InvalidArgument);
  CHECK_THROWS_AS(config(0.1, 3, 5).validate(2), InvalidArgument);
  CHECK_THROWS_AS(config(0.1, 1, 4, 3).validate(2), InvalidArgument);
  CHECK_NOTHROW(config(0.1, 1, 4, 2).validate(2));
  ForestConfig d;
  CHECK(d.effective_mtry(11) == 3);
  CHECK(d.effective_mtry(1) == 1);
  CHECK(d.effective_m_leaf() == 10);
  CHECK(d.n_trees == 500);
}

TEST_CASE("minimum child size") {
  ForestConfig c = config(0.05, 5, 10);
  CHECK(min_child_size(c, 40) == 5);
  CHECK(min_child_size(c, 200) == 10);
  CHECK(min_child_size(c, 201) == 11);
}

TEST_CASE("quadrant data is split into its four subgroups") {
  std::vector<double> y;
  std::vector<std::vector<double>> x;
  for (int rep = 0; rep < 3; ++rep) {
    for (int a = 1; a <= 6; ++a) {
      for (int b = 1; b <= 4; ++b) {
        x.push_back({double(a), double(b)});
        y.push_back(10.0 * (a > 3) + 5.0 * (b > 2));
      }
    }
  }
  y.push_back(0);
  x.push_back({0, 0});
  Panel p = make_panel(y, x, y.size() - 1);
  ForestConfig c = config(0.1, 2, 4, 2);
  Engine rng(9);
  auto rows = all_rows(p.t0());
  Tree tree = fit_tree(p, rows, c, rng);
  CHECK(tree.n_leaves() == 4);
  CHECK(tree.predict(std::vector<double>{2.0, 1.0}) == 0.0);
  CHECK(tree.predict(std::vector<double>{2.0, 4.0}) == 5.0);
  CHECK(tree.predict(std::vector<double>{5.0, 1.0}) == 10.0);
  CHECK(tree.predict(std::vector<double>{6.0, 3.0}) == 15.0);
}

TEST_CASE("tree captures an interaction that a linear fit misses") {
  SimConfig sc;
  sc.dgp = DgpKind::interaction;
  sc.t0 = 400;
  sc.t_post = 10;
  sc.seed = 2024;
  auto sim = simulate_panel(sc);
  const Panel& p = sim.panel;
  ForestConfig c = config(0.05, 5, 10, 2);
  Engine rng(1);
  auto rows = all_rows(p.t0());
  Tree tree = fit_tree(p, rows, c, rng);
  std::vector<double> tree_pred(p.periods());
  for (std::size_t t = 0; t < p.periods(); ++t) tree_pred[t] = tree.predict(p.control_row(t));
  EnetFit ols = fit_enet(p, p.pre_range(), 0.0, 1.0);
  std::vector<double> lin_pred(p.periods());
  for (std::size_t t = 0; t < p.periods(); ++t) lin_pred[t] = ols.predict(p.control_row(t));
  CHECK(sse(tree_pred, p, p.pre_range()) < sse(lin_pred, p, p.pre_range()));
}

TEST_CASE("structural invariants hold on random fixtures") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::size_t n = 2 + seed % 6, t0 = 60 + 7 * seed;
    Panel p = random_panel(t0 + 5, n, t0, seed);
    ForestConfig c = config(0.1, 2 + seed % 3, 0);
    c.m_leaf = std::max<std::size_t>(2 * c.k, 3);
    c.n_trees = 3;
    c.seed = seed;
    if (seed % 2) c.bagging = Bagging::block_bootstrap;
    auto model = fit_forest(p, p.pre_range(), c);
    for (const auto& tree : model.trees()) {
      auto problems = invariant_violations(tree, c, n);
      CHECK_MESSAGE(problems.empty(), (problems.empty() ? std::string() : problems.front()));
    }
  }
}

TEST_CASE("a one-tree forest predicts like its tree") {
  Panel p = random_panel(80, 3, 70, 4);
  ForestConfig c;
  c.n_trees = 1;
  c.seed = 17;
  auto model = fit_forest(p, p.pre_range(), c);
  for (std::size_t t = 0; t < p.periods(); ++t) {
    CHECK(model.predict(p.control_row(t)) == model.trees()[0].predict(p.control_row(t)));
  }
}

TEST_CASE("forest prediction is the compensated mean of tree predictions") {
  Panel p = random_panel(120, 4, 100, 8);
  ForestConfig c;
  c.n_trees = 37;
  c.seed = 5;
  auto model = fit_forest(p, p.pre_range(), c);
  auto all = model.predict_panel(p);
  for (std::size_t t = 0; t < p.periods(); ++t) {
    CompensatedSum s;
    for (const auto& tree : model.trees()) s.add(tree.predict(p.control_row(t)));
    CHECK(all[t] == s.value() / 37.0);
    CHECK(predict(model, p.control_row(t)) == all[t]);
  }
}

TEST_CASE("constant outcome predicts the constant everywhere") {
  Panel base = random_panel(60, 3, 50, 2);
  Panel p = base.with_treated(std::vector<double>(60, 4.25));
  ForestConfig c;
  c.n_trees = 20;
  auto model = fit_forest(p, p.pre_range(), c);
  for (double v : model.predict_panel(p)) CHECK(v == 4.25);
  CHECK(model.predict(std::vector<double>{100, -100, 3}) == 4.25);
}

TEST_CASE("with mtry = N and no bagging every tree is identical") {
  Panel p = random_panel(90, 3, 80, 6);
  ForestConfig c;
  c.mtry = 3;
  c.n_trees = 10;
  c.seed = 99;
  auto model = fit_forest(p, p.pre_range(), c);
  Engine rng(0);
  auto rows = all_rows(80);
  Tree single = fit_tree(p, rows, c, rng);
  for (std::size_t t = 0; t < p.periods(); ++t) {
    CHECK(model.predict(p.control_row(t)) == single.predict(p.control_row(t)));
  }
}

TEST_CASE("predictions stay inside the range of training outcomes") {
  Panel p = random_panel(100, 2, 90, 12);
  ForestConfig c;
  c.n_trees = 25;
  auto model = fit_forest(p, p.pre_range(), c);
  auto y = p.treated().subspan(0, 90);
  double lo = *std::min_element(y.begin(), y.end()), hi = *std::max_element(y.begin(), y.end());
  for (double a : {-50.0, 0.0, 50.0}) {
    for (double b : {-50.0, 0.0, 50.0}) {
      double v = model.predict(std::vector<double>{a, b});
      CHECK(v >= lo);
      CHECK(v <= hi);
    }
  }
}

TEST_CASE("monotone transforms of a control leave predictions unchanged") {
  for (std::uint64_t seed : {1, 2, 3}) {
    Panel p = random_panel(120, 3, 100, seed);
    Panel q = transform_column(p, 1, [](double v) { return std::exp(v) * 3.0 + 1.0; });
    ForestConfig c;
    c.n_trees = 15;
    c.seed = seed;
    c.mtry = 2;
    auto a = fit_forest(p, p.pre_range(), c).predict_panel(p);
    auto b = fit_forest(q, q.pre_range(), c).predict_panel(q);
    CHECK(a == b);
  }
}

TEST_CASE("fits are reproducible and independent of the thread cap") {
  Panel p = random_panel(150, 5, 120, 21);
  ForestConfig c;
  c.n_trees = 40;
  c.seed = 77;
  c.bagging = Bagging::block_bootstrap;
  set_thread_cap(1);
  auto a = fit_forest(p, p.pre_range(), c).predict_panel(p);
  set_thread_cap(4);
  auto b = fit_forest(p, p.pre_range(), c).predict_panel(p);
  set_thread_cap(0);
  CHECK(a == b);
  c.seed = 78;
  auto d = fit_forest(p, p.pre_range(), c).predict_panel(p);
  CHECK(a != d);
}

TEST_CASE("block bootstrap rows stay in range") {
  Engine rng(4);
  auto rows = block_bootstrap_rows(IndexRange{10, 47}, 3, rng);
  CHECK(rows.size() == 37);
  CHECK(std::is_sorted(rows.begin(), rows.end()));
  CHECK(rows.front() >= 10);
  CHECK(rows.back() < 47);
  CHECK_THROWS_AS(block_bootstrap_rows(IndexRange{0, 5}, 6, rng), InvalidArgument);
}

TEST_CASE("mtry tuning") {
  Panel p = random_panel(140, 4, 120, 30);
  ForestConfig base;
  base.n_trees = 20;
  auto single = tune_mtry(p, SplitSpec{}, base, {3});
  CHECK(single.config.mtry == 3u);
  CHECK(single.scores.empty());
  CHECK_THROWS_AS(tune_mtry(p, SplitSpec{}, base, {}), InvalidArgument);
  CHECK_THROWS_AS(tune_mtry(p, SplitSpec{}, base, {5}), InvalidArgument);
}

TEST_CASE("tuned mtry is no worse than mtry 1 on a linear DGP") {
  SimConfig sc;
  sc.dgp = DgpKind::linear;
  sc.n_controls = 10;
  sc.t0 = 200;
  sc.t_post = 5;
  sc.seed = 8;
  sc.beta = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  auto sim = simulate_panel(sc);
  ForestConfig base;
  base.n_trees = 30;
  std::vector<std::size_t> grid(10);
  std::iota(grid.begin(), grid.end(), std::size_t{1});
  auto tuned = tune_mtry(sim.panel, SplitSpec{}, base, grid);
  REQUIRE(tuned.scores.size() == 10);
  double best = tuned.scores[0].validation_rmspe;
  for (const auto& s : tuned.scores) {
    if (s.mtry == *tuned.config.mtry) best = s.validation_rmspe;
  }
  CHECK(best <= tuned.scores[0].validation_rmspe);
  for (const auto& s : tuned.scores) CHECK(best <= s.validation_rmspe);
}

TEST_CASE("permutation importance") {
  SUBCASE("unused control scores exactly zero") {
    Panel base = random_panel(100, 3, 90, 41);
    std::vector<std::vector<double>> x(100);
    for (std::size_t t = 0; t < 100; ++t) {
      auto row = base.control_row(t);
      x[t].assign(row.begin(), row.end());
      x[t][2] = 7.0;
    }
    Panel p = make_panel(std::vector<double>(base.treated().begin(), base.treated().end()), x, 90);
    ForestConfig c;
    c.n_trees = 10;
    auto model = fit_forest(p, p.pre_range(), c);
    for (const auto& tree : model.trees()) CHECK_FALSE(tree.uses_direction(2));
    auto imp = permutation_importance(model, p, p.pre_range(), 5, 1);
    CHECK(imp[2] == 0.0);
    CHECK_THROWS_AS(permutation_importance(model, p, p.pre_range(), 0, 1), InvalidArgument);
  }
  SUBCASE("the relevant control is the most important") {
    SimConfig sc;
    sc.dgp = DgpKind::linear;
    sc.process = ControlProcess::iid;
    sc.n_controls = 6;
    sc.beta = {1, 0, 0, 0, 0, 0};
    sc.noise_sd = 0.3;
    sc.t0 = 200;
    sc.seed = 3;
    auto sim = simulate_panel(sc);
    ForestConfig c;
    c.n_trees = 50;
    auto model = fit_forest(sim.panel, sim.panel.pre_range(), c);
    auto imp = permutation_importance(model, sim.panel, sim.panel.pre_range(), 50, 5);
    for (std::size_t i = 1; i < imp.size(); ++i) CHECK(imp[0] > imp[i]);
  }
  SUBCASE("duplicated relevant controls share importance") {
    SimConfig sc;
    sc.dgp = DgpKind::linear;
    sc.process = ControlProcess::iid;
    sc.n_controls = 3;
    sc.beta = {1, 0, 0};
    sc.noise_sd = 0.3;
    sc.t0 = 200;
    sc.seed = 4;
    auto sim = simulate_panel(sc);
    const Panel& single = sim.panel;
    std::vector<std::vector<double>> x(single.periods());
    for (std::size_t t = 0; t < single.periods(); ++t) {
      x[t] = {single.control(t, 0), single.control(t, 0), single.control(t, 1), single.control(t, 2)};
    }
    Panel dup = make_panel(std::vector<double>(single.treated().begin(), single.treated().end()), x,
                           single.t0());
    ForestConfig c;
    c.n_trees = 50;
    c.mtry = 2;
    auto a = permutation_importance(fit_forest(single, single.pre_range(), c), single,
                                    single.pre_range(), 50, 5);
    auto b = permutation_importance(fit_forest(dup, dup.pre_range(), c), dup, dup.pre_range(), 50, 5);
    CHECK(b[0] < a[0]);
    CHECK(b[1] < a[0]);
  }
}
