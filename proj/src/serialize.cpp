#include "tbsc/serialize.hpp"

#include <cmath>
#include <string>

#include "tbsc/error.hpp"

namespace tbsc {

Json to_json(const IndexRange& range) { return {{"begin", range.begin}, {"end", range.end}}; }

Json to_json(const ForestConfig& c) {
  Json j;
  j["alpha"] = c.alpha;
  j["k"] = c.k;
  j["m_leaf"] = c.m_leaf ? Json(*c.m_leaf) : Json(nullptr);
  j["mtry"] = c.mtry ? Json(*c.mtry) : Json(nullptr);
  j["n_trees"] = c.n_trees;
  j["seed"] = c.seed;
  j["bagging"] = c.bagging == Bagging::none ? "none" : "block-bootstrap";
  j["block_length"] = c.block_length;
  return j;
}

ForestConfig forest_config_from_json(const Json& j) {
  ForestConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.k = j.value("k", c.k);
  if (j.contains("m_leaf") && !j["m_leaf"].is_null()) c.m_leaf = j["m_leaf"].get<std::size_t>();
  if (j.contains("mtry") && !j["mtry"].is_null()) c.mtry = j["mtry"].get<std::size_t>();
  c.n_trees = j.value("n_trees", c.n_trees);
  c.seed = j.value("seed", c.seed);
  std::string bagging = j.value("bagging", std::string("none"));
  if (bagging == "none") {
    c.bagging = Bagging::none;
  } else if (bagging == "block-bootstrap") {
    c.bagging = Bagging::block_bootstrap;
  } else {
    throw InvalidArgument("unknown bagging mode '" + bagging + "'");
  }
  c.block_length = j.value("block_length", c.block_length);
  return c;
}

namespace {

Json node_to_json(const Tree& tree, std::size_t i) {
  const auto& n = tree.nodes[i];
  Json j;
  j["count"] = n.count;
  if (n.is_leaf()) {
    j["value"] = n.value;
    j["members"] = n.members;
    if (n.unsplittable) j["unsplittable"] = true;
    return j;
  }
  j["direction"] = n.direction;
  j["threshold"] = n.threshold;
  j["split_sse"] = n.split_sse;
  j["left"] = node_to_json(tree, static_cast<std::size_t>(n.left));
  j["right"] = node_to_json(tree, static_cast<std::size_t>(n.right));
  return j;
}

int node_from_json(const Json& j, Tree& tree) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  TreeNode node;
  node.count = j.at("count").get<std::size_t>();
  if (j.contains("direction")) {
    node.direction = j.at("direction").get<int>();
    if (node.direction < 0) throw InvalidArgument("negative split direction");
    node.threshold = j.at("threshold").get<double>();
    node.split_sse = j.value("split_sse", 0.0);
    if (!std::isfinite(node.threshold)) throw InvalidArgument("non-finite split threshold");
    node.left = node_from_json(j.at("left"), tree);
    node.right = node_from_json(j.at("right"), tree);
  } else {
    node.value = j.at("value").get<double>();
    node.members = j.at("members").get<std::vector<std::uint32_t>>();
    node.unsplittable = j.value("unsplittable", false);
  }
  tree.nodes[static_cast<std::size_t>(id)] = std::move(node);
  return id;
}

}  // namespace

Json to_json(const ForestModel& model) {
  Json j;
  j["format"] = "tbsc-forest";
  j["version"] = kForestFormatVersion;
  j["config"] = to_json(model.config());
  j["n_controls"] = model.n_controls();
  j["training_range"] = to_json(model.training_range());
  Json trees = Json::array();
  for (const auto& tree : model.trees()) trees.push_back(node_to_json(tree, 0));
  j["trees"] = std::move(trees);
  return j;
}

ForestModel forest_from_json(const Json& j) {
  try {
    if (j.value("format", std::string()) != "tbsc-forest") {
      throw InvalidArgument("not a forest document");
    }
    int version = j.at("version").get<int>();
    if (version != kForestFormatVersion) {
      throw InvalidArgument("unsupported forest format version " + std::to_string(version));
    }
    ForestConfig config = forest_config_from_json(j.at("config"));
    auto n_controls = j.at("n_controls").get<std::size_t>();
    config.validate(n_controls);
    IndexRange range{j.at("training_range").at("begin").get<std::size_t>(),
                     j.at("training_range").at("end").get<std::size_t>()};
    if (range.empty()) throw InvalidArgument("empty training range");

    std::vector<Tree> trees;
    for (const auto& jt : j.at("trees")) {
      Tree tree;
      node_from_json(jt, tree);
      auto problems = invariant_violations(tree, config, n_controls);
      if (!problems.empty()) {
        throw InvalidArgument("tree " + std::to_string(trees.size()) + ": " + problems.front());
      }
      for (const auto& node : tree.nodes) {
        for (auto t : node.members) {
          if (!range.contains(t)) throw InvalidArgument("leaf member outside the training range");
        }
      }
      trees.push_back(std::move(tree));
    }
    if (trees.size() != config.n_trees) throw InvalidArgument("tree count differs from n_trees");
    return ForestModel(std::move(trees), config, range, n_controls);
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("malformed forest document: ") + e.what());
  }
}

Json to_json(const ScmWeights& w) {
  return {{"estimator", "scm"},
          {"omega", w.omega},
          {"objective", w.objective},
          {"objective_trace_length", w.objective_trace.size()},
          {"training_range", to_json(w.training_range)}};
}

Json to_json(const EnetFit& f) {
  return {{"estimator", "enet"},
          {"mu", f.mu},
          {"omega", f.omega},
          {"lambda", f.lambda},
          {"alpha_mix", f.alpha_mix},
          {"objective", f.objective},
          {"objective_trace_length", f.sweeps},
          {"converged", f.converged},
          {"standardized", f.standardized},
          {"training_range", to_json(f.training_range)}};
}

Json to_json(const FittedModel& model) {
  return std::visit([](const auto& m) { return to_json(m); }, model);
}

Json to_json(const MtryTuning& tuning) {
  Json scores = Json::array();
  for (const auto& s : tuning.scores) {
    scores.push_back({{"mtry", s.mtry}, {"validation_rmspe", s.validation_rmspe}});
  }
  return {{"chosen_mtry", tuning.config.mtry.value_or(0)}, {"scores", scores}};
}

Json to_json(const EnetTuning& tuning) {
  Json scores = Json::array();
  for (const auto& s : tuning.scores) {
    scores.push_back({{"lambda", s.point.lambda},
                      {"alpha_mix", s.point.alpha_mix},
                      {"validation_rmspe", s.validation_rmspe}});
  }
  return {{"chosen", {{"lambda", tuning.chosen.lambda}, {"alpha_mix", tuning.chosen.alpha_mix}}},
          {"scores", scores}};
}

Json to_json(const FitMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"pre_rmspe", m.pre_rmspe},       {"pre_mae", m.pre_mae},
          {"post_rmspe", m.post_rmspe},     {"post_mae", m.post_mae},
          {"ratio_rmspe", opt(m.ratio_rmspe)}, {"ratio_mae", opt(m.ratio_mae)},
          {"post_std", m.post_std},         {"avg_gap_pre", m.avg_gap_pre},
          {"avg_gap_post", m.avg_gap_post}};
}

Json to_json(const BootstrapConfig& c) {
  return {{"n_boot", c.n_boot}, {"block_length", c.block_length}, {"level", c.level}, {"seed", c.seed}};
}

Json to_json(const EffectReport& r) {
  return {{"ate_hat", r.ate_hat},
          {"ate_naive", r.ate_naive},
          {"per_period_gaps", r.per_period_gaps},
          {"boot_se", r.boot_se},
          {"ci_percentile", {r.ci_low, r.ci_high}},
          {"ci_normal", {r.ci_normal_low, r.ci_normal_high}},
          {"bootstrap", to_json(r.boot)}};
}

Json to_json(const ConformalResult& r) {
  Json j = {{"statistic", r.statistic},
            {"p_value", r.p_value},
            {"scheme", std::string(to_string(r.scheme))},
            {"n_permutations", r.n_permutations},
            {"q", r.q},
            {"t0", r.t0},
            {"null_trajectory", r.null_trajectory},
            {"histogram",
             {{"low", r.histogram.low},
              {"high", r.histogram.high},
              {"bins", r.histogram.counts.size()},
              {"counts", r.histogram.counts}}}};
  if (r.scheme == PermutationScheme::iid) j["seed"] = r.seed;
  return j;
}

}  // namespace tbsc
