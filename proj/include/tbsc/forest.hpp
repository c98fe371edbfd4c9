#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tbsc/panel.hpp"
#include "tbsc/rng.hpp"

namespace tbsc {

enum class Bagging { none, block_bootstrap };

/// Hyperparameters of an (alpha, k, m)-forest.
///
/// Trees obey four rules: every leaf holds fewer than `m_leaf` training
/// periods, no leaf holds fewer than `k`, each split leaves at least a share
/// `alpha` of the parent's periods on both sides, and every direction can be
/// chosen at every node with probability at least mtry / N.
struct ForestConfig {
  double alpha = 0.05;
  std::size_t k = 5;
  /// Strict upper bound on leaf size. Unset: nodes are split for as long as
  /// an admissible split exists, which is the same as m_leaf = 2k.
  std::optional<std::size_t> m_leaf;
  /// Candidate directions per node. Unset: round(sqrt(N)).
  std::optional<std::size_t> mtry;
  std::size_t n_trees = 500;
  std::uint64_t seed = 0;
  Bagging bagging = Bagging::none;
  std::size_t block_length = 3;

  std::size_t effective_m_leaf() const { return m_leaf.value_or(2 * k); }
  std::size_t effective_mtry(std::size_t n_controls) const;
  /// Throws InvalidArgument when a constraint is violated.
  void validate(std::size_t n_controls) const;
};

/// Smallest admissible child for a parent holding `parent_count` periods:
/// max(k, ceil(alpha * parent_count)).
std::size_t min_child_size(const ForestConfig& config, std::size_t parent_count);

struct TreeNode {
  int direction = -1;  ///< split control index; negative for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t count = 0;        ///< training periods reaching the node
  double value = 0.0;           ///< leaf: mean treated outcome of members
  double split_sse = 0.0;       ///< internal: within-children sum of squares
  std::vector<std::uint32_t> members;  ///< leaf: 0-based period indices
  /// Leaf that reached m_leaf but had constant outcomes or no admissible split.
  bool unsplittable = false;

  bool is_leaf() const noexcept { return direction < 0; }
};

/// Binary tree stored as a flat node array; node 0 is the root. A point goes
/// left iff x[direction] <= threshold.
struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& root() const { return nodes.front(); }
  std::size_t leaf_of(std::span<const double> x) const;
  double predict(std::span<const double> x) const { return nodes[leaf_of(x)].value; }
  bool uses_direction(std::size_t i) const;
  std::size_t n_leaves() const;
};

/// Structural checks (leaf sizes, alpha balance, member bookkeeping).
/// Returns one message per violation.
std::vector<std::string> invariant_violations(const Tree& tree, const ForestConfig& config,
                                              std::size_t n_controls);

class ForestModel {
 public:
  ForestModel(std::vector<Tree> trees, ForestConfig config, IndexRange training_range,
              std::size_t n_controls);

  const std::vector<Tree>& trees() const noexcept { return trees_; }
  const ForestConfig& config() const noexcept { return config_; }
  IndexRange training_range() const noexcept { return training_range_; }
  std::size_t n_controls() const noexcept { return n_controls_; }

  /// Mean of the trees' leaf values, compensated summation.
  double predict(std::span<const double> x) const;
  /// Predictions at every period of `panel`, parallel across periods.
  std::vector<double> predict_panel(const Panel& panel) const;

 private:
  std::vector<Tree> trees_;
  ForestConfig config_;
  IndexRange training_range_;
  std::size_t n_controls_;
};

/// Grows one tree on `rows` (0-based periods, repeats allowed). At each node
/// `mtry` directions are drawn without replacement and the split minimising
/// the children's summed squared deviations of the treated outcome is taken
/// among midpoints of consecutive distinct values, subject to the alpha and k
/// constraints. Ties go to the lower direction, then the lower threshold.
/// If no sampled direction admits a split, the remaining directions are
/// searched as well.
Tree fit_tree(const Panel& panel, std::span<const std::size_t> rows, const ForestConfig& config,
              Engine& rng);

/// B trees, tree b drawing from stream b of `config.seed`.
ForestModel fit_forest(const Panel& panel, IndexRange rows, const ForestConfig& config);

double predict(const ForestModel& model, std::span<const double> x);

/// Circular moving-block resample of `range`, sorted by period.
std::vector<std::size_t> block_bootstrap_rows(IndexRange range, std::size_t block_length,
                                              Engine& rng);

struct MtryScore {
  std::size_t mtry = 0;
  double validation_rmspe = 0.0;
};

struct MtryTuning {
  ForestConfig config;
  std::vector<MtryScore> scores;  ///< empty for a singleton grid
};

/// Fits one forest per grid value on the estimation part of `range`, scores
/// RMSPE on the validation part, keeps the best (ties: smaller mtry).
MtryTuning tune_mtry(const Panel& panel, IndexRange range, const SplitSpec& split,
                     const ForestConfig& base, const std::vector<std::size_t>& grid);
/// Tunes over the pre-treatment periods.
MtryTuning tune_mtry(const Panel& panel, const SplitSpec& split, const ForestConfig& base,
                     const std::vector<std::size_t>& grid);

/// For each control: mean over repeats of the RMSPE increase on `rows`
/// after shuffling that control's values among `rows`.
std::vector<double> permutation_importance(const ForestModel& model, const Panel& panel,
                                           IndexRange rows, std::size_t n_repeats,
                                           std::uint64_t seed);

}  // namespace tbsc
