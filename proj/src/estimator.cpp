#include "tbsc/estimator.hpp"

#include <numeric>

#include "tbsc/error.hpp"

namespace tbsc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::forest: return "forest";
    case EstimatorKind::scm: return "scm";
    case EstimatorKind::enet: return "enet";
  }
  return "unknown";
}

EstimatorKind parse_estimator_kind(std::string_view text) {
  if (text == "forest") return EstimatorKind::forest;
  if (text == "scm") return EstimatorKind::scm;
  if (text == "enet") return EstimatorKind::enet;
  throw InvalidArgument("unknown estimator '" + std::string(text) + "' (forest, scm, enet)");
}

EstimatorKind kind_of(const EstimatorSpec& spec) {
  return std::visit(overloaded{[](const ForestSpec&) { return EstimatorKind::forest; },
                               [](const ScmSpec&) { return EstimatorKind::scm; },
                               [](const EnetSpec&) { return EstimatorKind::enet; }},
                    spec);
}

EstimatorKind kind_of(const FittedModel& model) {
  return std::visit(overloaded{[](const ForestModel&) { return EstimatorKind::forest; },
                               [](const ScmWeights&) { return EstimatorKind::scm; },
                               [](const EnetFit&) { return EstimatorKind::enet; }},
                    model);
}

IndexRange training_range(const FittedModel& model) {
  return std::visit(overloaded{[](const ForestModel& m) { return m.training_range(); },
                               [](const ScmWeights& m) { return m.training_range; },
                               [](const EnetFit& m) { return m.training_range; }},
                    model);
}

FittedEstimator fit_estimator(const Panel& panel, IndexRange rows, const EstimatorSpec& spec) {
  return std::visit(
      overloaded{
          [&](const ForestSpec& s) -> FittedEstimator {
            ForestConfig cfg = s.config;
            std::optional<MtryTuning> tuning;
            if (s.tune) {
              std::vector<std::size_t> grid = s.mtry_grid;
              if (grid.empty()) {
                grid.resize(panel.n_controls());
                std::iota(grid.begin(), grid.end(), std::size_t{1});
              }
              tuning = tune_mtry(panel, rows, s.split, cfg, grid);
              cfg = tuning->config;
            }
            return {fit_forest(panel, rows, cfg), std::move(tuning), std::nullopt};
          },
          [&](const ScmSpec& s) -> FittedEstimator {
            return {fit_scm(panel, rows, s.options), std::nullopt, std::nullopt};
          },
          [&](const EnetSpec& s) -> FittedEstimator {
            double lambda = s.lambda, alpha = s.alpha_mix;
            std::optional<EnetTuning> tuning;
            if (s.tune) {
              TemporalSplit parts = temporal_split(rows, s.split);
              auto grid = s.grid.empty()
                              ? default_enet_grid(panel, parts.estimation, s.options.standardize)
                              : s.grid;
              tuning = tune_enet(panel, rows, s.split, grid, s.options);
              lambda = tuning->chosen.lambda;
              alpha = tuning->chosen.alpha_mix;
            }
            return {fit_enet(panel, rows, lambda, alpha, s.options), std::nullopt, std::move(tuning)};
          }},
      spec);
}

EstimatorSpec freeze(const EstimatorSpec& spec, const FittedEstimator& fitted) {
  EstimatorSpec out = spec;
  if (auto* f = std::get_if<ForestSpec>(&out)) {
    if (const auto* m = std::get_if<ForestModel>(&fitted.model)) f->config = m->config();
    f->tune = false;
  } else if (auto* e = std::get_if<EnetSpec>(&out)) {
    if (const auto* m = std::get_if<EnetFit>(&fitted.model)) {
      e->lambda = m->lambda;
      e->alpha_mix = m->alpha_mix;
    }
    e->tune = false;
  }
  return out;
}

EstimatorSpec with_seed(const EstimatorSpec& spec, std::uint64_t seed) {
  EstimatorSpec out = spec;
  if (auto* f = std::get_if<ForestSpec>(&out)) f->config.seed = seed;
  return out;
}

double predict(const FittedModel& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

std::vector<double> predict_panel(const FittedModel& model, const Panel& panel) {
  if (const auto* forest = std::get_if<ForestModel>(&model)) return forest->predict_panel(panel);
  std::vector<double> out(panel.periods());
  for (std::size_t t = 0; t < panel.periods(); ++t) out[t] = predict(model, panel.control_row(t));
  return out;
}

}  // namespace tbsc
