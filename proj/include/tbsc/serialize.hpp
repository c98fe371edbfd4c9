#pragma once

#include <json.hpp>

#include "tbsc/effects.hpp"
#include "tbsc/estimator.hpp"
#include "tbsc/forest.hpp"
#include "tbsc/inference.hpp"
#include "tbsc/solvers.hpp"

namespace tbsc {

using Json = nlohmann::json;

inline constexpr int kForestFormatVersion = 1;

Json to_json(const ForestConfig& config);
ForestConfig forest_config_from_json(const Json& j);

/// Versioned document; trees are nested node objects.
Json to_json(const ForestModel& model);
/// Rejects unknown versions and any structural invariant violation.
ForestModel forest_from_json(const Json& j);

Json to_json(const ScmWeights& weights);
Json to_json(const EnetFit& fit);
Json to_json(const FittedModel& model);
Json to_json(const MtryTuning& tuning);
Json to_json(const EnetTuning& tuning);
Json to_json(const FitMetrics& metrics);
Json to_json(const BootstrapConfig& config);
Json to_json(const EffectReport& report);
Json to_json(const ConformalResult& result);
Json to_json(const IndexRange& range);

}  // namespace tbsc
