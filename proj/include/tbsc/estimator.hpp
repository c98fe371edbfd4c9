#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tbsc/forest.hpp"
#include "tbsc/panel.hpp"
#include "tbsc/solvers.hpp"

namespace tbsc {

enum class EstimatorKind { forest, scm, enet };

std::string_view to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(std::string_view text);

struct ForestSpec {
  ForestConfig config;
  bool tune = false;
  std::vector<std::size_t> mtry_grid;  ///< empty: 1..N
  SplitSpec split;
};

struct ScmSpec {
  ScmOptions options;
};

struct EnetSpec {
  double lambda = 0.1;
  double alpha_mix = 0.5;
  bool tune = false;
  std::vector<EnetGridPoint> grid;  ///< empty: default_enet_grid
  SplitSpec split;
  EnetOptions options;
};

using EstimatorSpec = std::variant<ForestSpec, ScmSpec, EnetSpec>;
using FittedModel = std::variant<ForestModel, ScmWeights, EnetFit>;

struct FittedEstimator {
  FittedModel model;
  std::optional<MtryTuning> mtry_tuning;
  std::optional<EnetTuning> enet_tuning;
};

EstimatorKind kind_of(const EstimatorSpec& spec);
EstimatorKind kind_of(const FittedModel& model);
IndexRange training_range(const FittedModel& model);

/// Fits on `rows`. Tuning, when requested, splits `rows` temporally and the
/// final model is refit on all of `rows` with the chosen hyperparameters.
FittedEstimator fit_estimator(const Panel& panel, IndexRange rows, const EstimatorSpec& spec);

/// Spec with tuning switched off and the tuned hyperparameters pinned.
EstimatorSpec freeze(const EstimatorSpec& spec, const FittedEstimator& fitted);

/// Replaces the forest seed (other estimators are deterministic).
EstimatorSpec with_seed(const EstimatorSpec& spec, std::uint64_t seed);

double predict(const FittedModel& model, std::span<const double> x);
std::vector<double> predict_panel(const FittedModel& model, const Panel& panel);

}  // namespace tbsc
