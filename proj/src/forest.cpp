#include "tbsc/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tbsc/error.hpp"
#include "tbsc/parallel.hpp"
#include "tbsc/stats.hpp"

namespace tbsc {

// ---------------------------------------------------------------------------
// Config

std::size_t ForestConfig::effective_mtry(std::size_t n_controls) const {
  if (mtry) return *mtry;
  auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_controls))));
  return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(n_controls, 1));
}

void ForestConfig::validate(std::size_t n_controls) const {
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("alpha must lie in (0, 0.5)");
  if (k < 1) throw InvalidArgument("k must be at least 1");
  if (m_leaf && *m_leaf < 2 * k) throw InvalidArgument("m_leaf must be at least 2k");
  std::size_t m = effective_mtry(n_controls);
  if (m < 1 || m > n_controls) {
    throw InvalidArgument("mtry = " + std::to_string(m) + " outside [1, " +
                          std::to_string(n_controls) + "]");
  }
  if (n_trees < 1) throw InvalidArgument("n_trees must be at least 1");
  if (bagging == Bagging::block_bootstrap && block_length < 1) {
    throw InvalidArgument("block length must be at least 1");
  }
}

std::size_t min_child_size(const ForestConfig& config, std::size_t parent_count) {
  // 1e-9 keeps e.g. 0.3 * 10 = 3.0000000000000004 from rounding up to 4
  auto share = static_cast<std::size_t>(
      std::ceil(config.alpha * static_cast<double>(parent_count) - 1e-9));
  return std::max(config.k, share);
}

// ---------------------------------------------------------------------------
// Tree

std::size_t Tree::leaf_of(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.direction)] <= n.threshold ? n.left
                                                                                        : n.right);
  }
  return i;
}

bool Tree::uses_direction(std::size_t i) const {
  return std::any_of(nodes.begin(), nodes.end(), [&](const TreeNode& n) {
    return !n.is_leaf() && static_cast<std::size_t>(n.direction) == i;
  });
}

std::size_t Tree::n_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::vector<std::string> invariant_violations(const Tree& tree, const ForestConfig& config,
                                              std::size_t n_controls) {
  std::vector<std::string> out;
  const std::size_t m_leaf = config.effective_m_leaf();
  const auto& nodes = tree.nodes;
  if (nodes.empty()) return {"tree has no nodes"};
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    std::string where = "node " + std::to_string(i) + ": ";
    if (n.is_leaf()) {
      if (n.members.size() != n.count) out.push_back(where + "member count mismatch");
      if (n.count < config.k) out.push_back(where + "leaf smaller than k");
      if (n.count >= m_leaf && !n.unsplittable) out.push_back(where + "leaf not smaller than m_leaf");
      if (!std::isfinite(n.value)) out.push_back(where + "non-finite leaf value");
      continue;
    }
    if (static_cast<std::size_t>(n.direction) >= n_controls) {
      out.push_back(where + "split direction out of range");
    }
    auto valid_child = [&](int c) {
      return c > static_cast<int>(i) && static_cast<std::size_t>(c) < nodes.size();
    };
    if (!valid_child(n.left) || !valid_child(n.right)) {
      out.push_back(where + "bad child index");
      continue;
    }
    const auto& l = nodes[static_cast<std::size_t>(n.left)];
    const auto& r = nodes[static_cast<std::size_t>(n.right)];
    if (l.count + r.count != n.count) out.push_back(where + "children do not partition parent");
    std::size_t need = min_child_size(config, n.count);
    if (l.count < need || r.count < need) out.push_back(where + "alpha-balance violated");
    if (n.count < m_leaf) out.push_back(where + "split below m_leaf");
  }
  return out;
}

namespace {

struct SplitCandidate {
  bool found = false;
  std::size_t direction = 0;
  double threshold = 0.0;
  double sse = std::numeric_limits<double>::infinity();
  std::size_t left_count = 0;
};

bool better(const SplitCandidate& a, const SplitCandidate& b) {
  if (!a.found) return false;
  if (!b.found) return true;
  if (a.sse != b.sse) return a.sse < b.sse;
  if (a.direction != b.direction) return a.direction < b.direction;
  return a.threshold < b.threshold;
}

class TreeBuilder {
 public:
  TreeBuilder(const Panel& panel, const ForestConfig& config, Engine& rng)
      : panel_(panel),
        config_(config),
        rng_(rng),
        n_controls_(panel.n_controls()),
        mtry_(config.effective_mtry(panel.n_controls())),
        m_leaf_(config.effective_m_leaf()),
        directions_(n_controls_) {}

  Tree build(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    std::sort(rows_.begin(), rows_.end());
    grow(0, rows_.size());
    return Tree{std::move(nodes_)};
  }

 private:
  int grow(std::size_t lo, std::size_t hi) {
    const std::size_t n = hi - lo;
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[static_cast<std::size_t>(id)].count = n;

    if (n < m_leaf_) {
      make_leaf(id, lo, hi, false);
      return id;
    }
    if (constant_outcome(lo, hi)) {
      make_leaf(id, lo, hi, true);
      return id;
    }
    SplitCandidate best = choose_split(lo, hi);
    if (!best.found) {
      make_leaf(id, lo, hi, true);
      return id;
    }

    auto first = rows_.begin() + static_cast<long>(lo);
    auto last = rows_.begin() + static_cast<long>(hi);
    auto mid = std::stable_partition(first, last, [&](std::size_t t) {
      return panel_.control(t, best.direction) <= best.threshold;
    });
    const std::size_t split = static_cast<std::size_t>(mid - rows_.begin());

    {
      auto& node = nodes_[static_cast<std::size_t>(id)];
      node.direction = static_cast<int>(best.direction);
      node.threshold = best.threshold;
      node.split_sse = children_sse(lo, split, hi);
    }
    int left = grow(lo, split);
    int right = grow(split, hi);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  bool constant_outcome(std::size_t lo, std::size_t hi) const {
    double y0 = panel_.treated(rows_[lo]);
    for (std::size_t j = lo + 1; j < hi; ++j) {
      if (panel_.treated(rows_[j]) != y0) return false;
    }
    return true;
  }

  void make_leaf(int id, std::size_t lo, std::size_t hi, bool unsplittable) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.members.reserve(hi - lo);
    CompensatedSum acc;
    for (std::size_t j = lo; j < hi; ++j) {
      node.members.push_back(static_cast<std::uint32_t>(rows_[j]));
      acc.add(panel_.treated(rows_[j]));
    }
    node.value = acc.value() / static_cast<double>(hi - lo);
    node.unsplittable = unsplittable && (hi - lo) >= m_leaf_;
  }

  // Two-pass sum of squares, members in period order.
  double sse_of(std::size_t lo, std::size_t hi) const {
    double s = 0.0;
    for (std::size_t j = lo; j < hi; ++j) s += panel_.treated(rows_[j]);
    double m = s / static_cast<double>(hi - lo);
    double ss = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      double d = panel_.treated(rows_[j]) - m;
      ss += d * d;
    }
    return ss;
  }

  double children_sse(std::size_t lo, std::size_t mid, std::size_t hi) const {
    return sse_of(lo, mid) + sse_of(mid, hi);
  }

  SplitCandidate choose_split(std::size_t lo, std::size_t hi) {
    std::iota(directions_.begin(), directions_.end(), std::size_t{0});
    for (std::size_t i = 0; i < mtry_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_controls_ - 1);
      std::swap(directions_[i], directions_[pick(rng_)]);
    }
    SplitCandidate best;
    for (std::size_t i = 0; i < mtry_; ++i) {
      SplitCandidate c = best_in_direction(directions_[i], lo, hi);
      if (better(c, best)) best = c;
    }
    if (!best.found) {
      for (std::size_t i = mtry_; i < n_controls_; ++i) {
        SplitCandidate c = best_in_direction(directions_[i], lo, hi);
        if (better(c, best)) best = c;
      }
    }
    return best;
  }

  SplitCandidate best_in_direction(std::size_t d, std::size_t lo, std::size_t hi) {
    const std::size_t n = hi - lo;
    const std::size_t min_child = min_child_size(config_, n);
    SplitCandidate best;
    if (2 * min_child > n) return best;

    buf_.clear();
    double ysum = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      double y = panel_.treated(rows_[j]);
      buf_.push_back({panel_.control(rows_[j], d), y});
      ysum += y;
    }
    std::sort(buf_.begin(), buf_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    // centering keeps the prefix-sum form well conditioned
    const double ybar = ysum / static_cast<double>(n);
    double total = 0.0, total_sq = 0.0;
    for (auto& p : buf_) {
      p.second -= ybar;
      total += p.second;
      total_sq += p.second * p.second;
    }

    // Prefix sums rank candidates; those within rounding distance of the
    // minimum are settled on the exact two-pass value so that ties follow
    // the documented order and not the summation order.
    fast_.assign(n, std::numeric_limits<double>::infinity());
    double best_fast = std::numeric_limits<double>::infinity();
    double left = 0.0, left_sq = 0.0;
    for (std::size_t j = 1; j < n; ++j) {
      double y = buf_[j - 1].second;
      left += y;
      left_sq += y * y;
      if (j < min_child || n - j < min_child) continue;
      if (!(buf_[j - 1].first < buf_[j].first)) continue;
      double nl = static_cast<double>(j), nr = static_cast<double>(n - j);
      double right = total - left, right_sq = total_sq - left_sq;
      fast_[j] = (left_sq - left * left / nl) + (right_sq - right * right / nr);
      best_fast = std::min(best_fast, fast_[j]);
    }
    if (!std::isfinite(best_fast)) return best;
    const double slack = 64.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * total_sq;
    for (std::size_t j = 1; j < n; ++j) {
      if (!(fast_[j] <= best_fast + slack)) continue;
      double a = buf_[j - 1].first, b = buf_[j].first;
      double z = a + (b - a) / 2.0;
      if (!(z < b)) z = a;
      double exact = split_sse_at(d, z, lo, hi);
      if (exact < best.sse) best = {true, d, z, exact, j};
    }
    return best;
  }

  // children_sse of the partition at (d, z), without moving rows.
  double split_sse_at(std::size_t d, double z, std::size_t lo, std::size_t hi) const {
    double s[2] = {0.0, 0.0};
    std::size_t c[2] = {0, 0};
    for (std::size_t j = lo; j < hi; ++j) {
      int side = panel_.control(rows_[j], d) <= z ? 0 : 1;
      s[side] += panel_.treated(rows_[j]);
      ++c[side];
    }
    double m[2] = {s[0] / static_cast<double>(c[0]), s[1] / static_cast<double>(c[1])};
    double ss[2] = {0.0, 0.0};
    for (std::size_t j = lo; j < hi; ++j) {
      int side = panel_.control(rows_[j], d) <= z ? 0 : 1;
      double e = panel_.treated(rows_[j]) - m[side];
      ss[side] += e * e;
    }
    return ss[0] + ss[1];
  }

  const Panel& panel_;
  const ForestConfig& config_;
  Engine& rng_;
  std::size_t n_controls_;
  std::size_t mtry_;
  std::size_t m_leaf_;
  std::vector<std::size_t> directions_;
  std::vector<std::size_t> rows_;
  std::vector<std::pair<double, double>> buf_;
  std::vector<double> fast_;
  std::vector<TreeNode> nodes_;
};

void check_rows(const Panel& panel, std::span<const std::size_t> rows, const ForestConfig& config) {
  if (rows.size() < config.k) {
    throw InvalidArgument("need at least k = " + std::to_string(config.k) + " rows, got " +
                          std::to_string(rows.size()));
  }
  for (std::size_t t : rows) {
    if (t >= panel.periods()) throw InvalidArgument("row index outside the panel");
  }
}

}  // namespace

Tree fit_tree(const Panel& panel, std::span<const std::size_t> rows, const ForestConfig& config,
              Engine& rng) {
  config.validate(panel.n_controls());
  check_rows(panel, rows, config);
  TreeBuilder builder(panel, config, rng);
  return builder.build({rows.begin(), rows.end()});
}

// ---------------------------------------------------------------------------
// Forest

ForestModel::ForestModel(std::vector<Tree> trees, ForestConfig config, IndexRange training_range,
                         std::size_t n_controls)
    : trees_(std::move(trees)),
      config_(std::move(config)),
      training_range_(training_range),
      n_controls_(n_controls) {
  if (trees_.empty()) throw InvalidArgument("forest has no trees");
}

double ForestModel::predict(std::span<const double> x) const {
  if (x.size() != n_controls_) throw InvalidArgument("query has wrong number of controls");
  CompensatedSum acc;
  for (const auto& tree : trees_) acc.add(tree.predict(x));
  return acc.value() / static_cast<double>(trees_.size());
}

std::vector<double> ForestModel::predict_panel(const Panel& panel) const {
  std::vector<double> out(panel.periods());
  parallel_for(panel.periods(), [&](std::size_t t) { out[t] = predict(panel.control_row(t)); });
  return out;
}

double predict(const ForestModel& model, std::span<const double> x) { return model.predict(x); }

std::vector<std::size_t> block_bootstrap_rows(IndexRange range, std::size_t block_length,
                                              Engine& rng) {
  const std::size_t n = range.size();
  if (block_length < 1 || block_length > n) {
    throw InvalidArgument("block length must lie in [1, " + std::to_string(n) + "]");
  }
  std::size_t blocks = (n + block_length - 1) / block_length;
  std::uniform_int_distribution<std::size_t> start(0, n - 1);
  std::vector<std::size_t> rows;
  rows.reserve(blocks * block_length);
  for (std::size_t b = 0; b < blocks; ++b) {
    std::size_t s = start(rng);
    for (std::size_t j = 0; j < block_length; ++j) rows.push_back(range.begin + (s + j) % n);
  }
  rows.resize(n);
  std::sort(rows.begin(), rows.end());
  return rows;
}

ForestModel fit_forest(const Panel& panel, IndexRange rows, const ForestConfig& config) {
  config.validate(panel.n_controls());
  if (rows.empty() || rows.end > panel.periods()) throw InvalidArgument("invalid training range");
  if (rows.size() < config.k) {
    throw InvalidArgument("need at least k = " + std::to_string(config.k) + " rows, got " +
                          std::to_string(rows.size()));
  }
  std::vector<std::size_t> all(rows.size());
  std::iota(all.begin(), all.end(), rows.begin);

  std::vector<Tree> trees(config.n_trees);
  parallel_for(config.n_trees, [&](std::size_t b) {
    Engine rng = make_engine(config.seed, b);
    if (config.bagging == Bagging::block_bootstrap) {
      auto sample = block_bootstrap_rows(rows, config.block_length, rng);
      trees[b] = fit_tree(panel, sample, config, rng);
    } else {
      trees[b] = fit_tree(panel, all, config, rng);
    }
  });
  return ForestModel(std::move(trees), config, rows, panel.n_controls());
}

// ---------------------------------------------------------------------------
// Tuning and importance

namespace {

double rmspe_on(const ForestModel& model, const Panel& panel, IndexRange range) {
  std::vector<double> err;
  err.reserve(range.size());
  for (std::size_t t = range.begin; t < range.end; ++t) {
    err.push_back(panel.treated(t) - model.predict(panel.control_row(t)));
  }
  return rmse(err);
}

}  // namespace

MtryTuning tune_mtry(const Panel& panel, IndexRange range, const SplitSpec& split,
                     const ForestConfig& base, const std::vector<std::size_t>& grid) {
  if (grid.empty()) throw InvalidArgument("mtry grid is empty");
  for (std::size_t m : grid) {
    if (m < 1 || m > panel.n_controls()) {
      throw InvalidArgument("mtry grid value " + std::to_string(m) + " outside [1, N]");
    }
  }
  MtryTuning result{base, {}};
  if (grid.size() == 1) {
    result.config.mtry = grid.front();
    return result;
  }
  TemporalSplit parts = temporal_split(range, split);
  std::optional<MtryScore> best;
  for (std::size_t m : grid) {
    ForestConfig cfg = base;
    cfg.mtry = m;
    ForestModel model = fit_forest(panel, parts.estimation, cfg);
    MtryScore score{m, rmspe_on(model, panel, parts.validation)};
    result.scores.push_back(score);
    if (!best || score.validation_rmspe < best->validation_rmspe ||
        (score.validation_rmspe == best->validation_rmspe && m < best->mtry)) {
      best = score;
    }
  }
  result.config.mtry = best->mtry;
  return result;
}

MtryTuning tune_mtry(const Panel& panel, const SplitSpec& split, const ForestConfig& base,
                     const std::vector<std::size_t>& grid) {
  return tune_mtry(panel, panel.pre_range(), split, base, grid);
}

std::vector<double> permutation_importance(const ForestModel& model, const Panel& panel,
                                           IndexRange rows, std::size_t n_repeats,
                                           std::uint64_t seed) {
  if (n_repeats < 1) throw InvalidArgument("n_repeats must be at least 1");
  if (rows.empty() || rows.end > panel.periods()) throw InvalidArgument("invalid row range");
  if (panel.n_controls() != model.n_controls()) throw InvalidArgument("panel/model mismatch");

  const double baseline = rmspe_on(model, panel, rows);
  const std::size_t N = panel.n_controls();
  std::vector<double> importance(N, 0.0);
  parallel_for(N, [&](std::size_t i) {
    std::vector<double> column;
    for (std::size_t t = rows.begin; t < rows.end; ++t) column.push_back(panel.control(t, i));
    std::vector<double> x(N), err(rows.size());
    CompensatedSum acc;
    for (std::size_t r = 0; r < n_repeats; ++r) {
      Engine rng = make_engine(derive_seed(seed, i), r);
      std::vector<double> shuffled = column;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        std::size_t t = rows.begin + j;
        auto row = panel.control_row(t);
        std::copy(row.begin(), row.end(), x.begin());
        x[i] = shuffled[j];
        err[j] = panel.treated(t) - model.predict(x);
      }
      acc.add(rmse(err) - baseline);
    }
    importance[i] = acc.value() / static_cast<double>(n_repeats);
  });
  return importance;
}

}  // namespace tbsc
