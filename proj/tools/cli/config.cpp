#include "cli/config.hpp"

#include <charconv>
#include <fstream>
#include <set>

#include "tbsc/date.hpp"
#include "tbsc/rng.hpp"

namespace tbsc::cli {

namespace {

// One field list per section drives both reading and writing.

struct Writer {
  Json& j;
  template <class T>
  void operator()(const char* key, const T& value) {
    j[key] = value;
  }
  template <class T>
  void operator()(const char* key, const std::optional<T>& value) {
    j[key] = value ? Json(*value) : Json(nullptr);
  }
};

struct Reader {
  const Json& j;
  std::string section;
  std::set<std::string> known;

  template <class T>
  void operator()(const char* key, T& value) {
    known.insert(key);
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
      read(*it, value);
    } catch (const Json::exception&) {
      throw UsageError("config key '" + section + key + "' has the wrong type");
    }
  }

  template <class T>
  static void read(const Json& v, T& value) {
    value = v.get<T>();
  }
  template <class T>
  static void read(const Json& v, std::optional<T>& value) {
    if (v.is_null()) {
      value.reset();
    } else {
      value = v.get<T>();
    }
  }

  void finish() const {
    for (const auto& item : j.items()) {
      if (!known.count(item.key())) {
        throw UsageError("unknown config key '" + section + item.key() + "'");
      }
    }
  }
};

template <class V>
void fields(V& v, DataOptions& o) {
  v("input", o.input);
  v("panel", o.panel);
  v("date_col", o.date_col);
  v("unit_col", o.unit_col);
  v("count_col", o.count_col);
  v("start", o.start);
  v("end", o.end);
  v("merge", o.merge);
  v("keep_partial_week", o.keep_partial_week);
  v("summary", o.summary);
}

template <class V>
void fields(V& v, PanelOptions& o) {
  v("treated", o.treated);
  v("t0", o.t0);
  v("controls", o.controls);
}

template <class V>
void fields(V& v, ForestOptions& o) {
  v("alpha", o.alpha);
  v("k", o.k);
  v("m_leaf", o.m_leaf);
  v("mtry", o.mtry);
  v("n_trees", o.n_trees);
  v("bagging", o.bagging);
  v("block_length", o.block_length);
  v("tune", o.tune);
  v("mtry_grid", o.mtry_grid);
}

template <class V>
void fields(V& v, EnetCliOptions& o) {
  v("lambda", o.lambda);
  v("alpha_mix", o.alpha_mix);
  v("tune", o.tune);
  v("standardize", o.standardize);
  v("tol", o.tol);
  v("max_iter", o.max_iter);
}

template <class V>
void fields(V& v, ScmCliOptions& o) {
  v("tol", o.tol);
  v("max_iter", o.max_iter);
}

template <class V>
void fields(V& v, BootstrapOptions& o) {
  v("n_boot", o.n_boot);
  v("block_length", o.block_length);
  v("level", o.level);
}

template <class V>
void fields(V& v, PlaceboCliOptions& o) {
  v("exclude_multiplier", o.exclude_multiplier);
  v("treated_as_donor", o.treated_as_donor);
}

template <class V>
void fields(V& v, ConformalCliOptions& o) {
  v("scheme", o.scheme);
  v("n_samples", o.n_samples);
  v("q", o.q);
  v("null", o.null_trajectory);
  v("spec_test", o.spec_test);
  v("kappa_max", o.kappa_max);
}

template <class V>
void fields(V& v, SimulateOptions& o) {
  v("dgp", o.dgp);
  v("process", o.process);
  v("t0", o.t0);
  v("t_post", o.t_post);
  v("n_controls", o.n_controls);
  v("beta", o.beta);
  v("tau", o.tau);
  v("noise_sd", o.noise_sd);
  v("control_mean", o.control_mean);
  v("control_sd", o.control_sd);
  v("ar_coef", o.ar_coef);
  v("start", o.start);
}

template <class V>
void top_fields(V& v, RunConfig& c) {
  v("command", c.command);
  v("seed", c.seed);
  v("threads", c.threads);
  v("output_dir", c.output_dir);
  v("estimator", c.estimator);
  v("estimation_fraction", c.estimation_fraction);
  v("holdout", c.holdout);
}

template <class S>
Json write_section(const S& section) {
  Json j = Json::object();
  Writer w{j};
  fields(w, const_cast<S&>(section));
  return j;
}

template <class S>
void read_section(const Json& root, const char* key, S& section) {
  auto it = root.find(key);
  if (it == root.end()) return;
  if (!it->is_object()) throw UsageError(std::string("config key '") + key + "' must be an object");
  Reader r{*it, std::string(key) + ".", {}};
  fields(r, section);
  r.finish();
}

std::optional<std::size_t> parse_index(const std::string& text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

Date parse_date_option(const std::string& flag, const std::string& text) {
  auto d = parse_iso_date(text);
  if (!d) throw UsageError(flag + ": not an ISO date (YYYY-MM-DD): '" + text + "'");
  return *d;
}

}  // namespace

Json to_json(const RunConfig& config) {
  Json j = Json::object();
  Writer w{j};
  top_fields(w, const_cast<RunConfig&>(config));
  j["data"] = write_section(config.data);
  j["panel"] = write_section(config.panel);
  j["forest"] = write_section(config.forest);
  j["enet"] = write_section(config.enet);
  j["scm"] = write_section(config.scm);
  j["bootstrap"] = write_section(config.bootstrap);
  j["placebo"] = write_section(config.placebo);
  j["conformal"] = write_section(config.conformal);
  j["simulate"] = write_section(config.simulate);
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  RunConfig c;
  Reader r{j, "", {}};
  top_fields(r, c);
  for (const char* key :
       {"data", "panel", "forest", "enet", "scm", "bootstrap", "placebo", "conformal", "simulate"}) {
    r.known.insert(key);
  }
  r.finish();
  read_section(j, "data", c.data);
  read_section(j, "panel", c.panel);
  read_section(j, "forest", c.forest);
  read_section(j, "enet", c.enet);
  read_section(j, "scm", c.scm);
  read_section(j, "bootstrap", c.bootstrap);
  read_section(j, "placebo", c.placebo);
  read_section(j, "conformal", c.conformal);
  read_section(j, "simulate", c.simulate);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::uint64_t stream_seed(const RunConfig& config, Stream stream) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(stream));
}

EstimatorSpec estimator_spec(const RunConfig& config, EstimatorKind kind) {
  SplitSpec split{config.estimation_fraction};
  switch (kind) {
    case EstimatorKind::forest: {
      ForestSpec s;
      const auto& f = config.forest;
      s.config.alpha = f.alpha;
      s.config.k = f.k;
      s.config.m_leaf = f.m_leaf;
      s.config.mtry = f.mtry;
      s.config.n_trees = f.n_trees;
      s.config.seed = stream_seed(config, Stream::forest);
      if (f.bagging == "none") {
        s.config.bagging = Bagging::none;
      } else if (f.bagging == "block-bootstrap") {
        s.config.bagging = Bagging::block_bootstrap;
      } else {
        throw UsageError("--bagging must be none or block-bootstrap, got '" + f.bagging + "'");
      }
      s.config.block_length = f.block_length;
      s.tune = f.tune;
      s.mtry_grid = f.mtry_grid;
      s.split = split;
      return s;
    }
    case EstimatorKind::scm: {
      ScmSpec s;
      s.options.tol = config.scm.tol;
      s.options.max_iter = config.scm.max_iter;
      return s;
    }
    case EstimatorKind::enet: {
      EnetSpec s;
      s.lambda = config.enet.lambda;
      s.alpha_mix = config.enet.alpha_mix;
      s.tune = config.enet.tune;
      s.split = split;
      s.options.tol = config.enet.tol;
      s.options.max_iter = config.enet.max_iter;
      s.options.standardize = config.enet.standardize;
      return s;
    }
  }
  throw UsageError("unknown estimator");
}

EstimatorSpec estimator_spec(const RunConfig& config) {
  EstimatorKind kind;
  try {
    kind = parse_estimator_kind(config.estimator);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return estimator_spec(config, kind);
}

BootstrapConfig bootstrap_config(const RunConfig& config) {
  BootstrapConfig b;
  b.n_boot = config.bootstrap.n_boot;
  b.block_length = config.bootstrap.block_length;
  b.level = config.bootstrap.level;
  b.seed = stream_seed(config, Stream::bootstrap);
  return b;
}

ConformalOptions conformal_options(const RunConfig& config) {
  ConformalOptions o;
  try {
    o.scheme = parse_scheme(config.conformal.scheme);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  o.n_samples = config.conformal.n_samples;
  o.q = config.conformal.q;
  o.seed = stream_seed(config, Stream::conformal);
  return o;
}

SimConfig sim_config(const RunConfig& config) {
  const auto& s = config.simulate;
  SimConfig c;
  try {
    c.dgp = parse_dgp(s.dgp);
    c.process = parse_control_process(s.process);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  c.t0 = s.t0;
  c.t_post = s.t_post;
  c.n_controls = s.n_controls;
  c.beta = s.beta;
  c.tau = s.tau;
  c.noise_sd = s.noise_sd;
  c.control_mean = s.control_mean;
  c.control_sd = s.control_sd;
  c.ar_coef = s.ar_coef;
  c.seed = stream_seed(config, Stream::simulate);
  c.start = parse_date_option("--start", s.start);
  return c;
}

AggregateOptions aggregate_options(const RunConfig& config) {
  const auto& d = config.data;
  AggregateOptions o;
  if (!d.start.empty()) o.start = parse_date_option("--start", d.start);
  if (!d.end.empty()) o.end = parse_date_option("--end", d.end);
  o.trailing = d.keep_partial_week ? PartialWeek::keep : PartialWeek::drop;
  for (const auto& rule : d.merge) {
    auto eq = rule.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == rule.size()) {
      throw UsageError("--merge expects SOURCE+SOURCE=TARGET, got '" + rule + "'");
    }
    std::string target = rule.substr(eq + 1);
    std::string sources = rule.substr(0, eq);
    std::size_t pos = 0;
    while (pos <= sources.size()) {
      auto plus = sources.find('+', pos);
      if (plus == std::string::npos) plus = sources.size();
      std::string name = sources.substr(pos, plus - pos);
      if (name.empty()) throw UsageError("--merge has an empty source name in '" + rule + "'");
      o.merge[name] = target;
      pos = plus + 1;
    }
  }
  return o;
}

WeeklySeries load_series(const RunConfig& config) {
  if (!config.data.panel.empty()) return read_weekly_csv(config.data.panel);
  if (config.data.input.empty()) throw UsageError("no data: pass --panel or --input");
  EventSchema schema{config.data.date_col, config.data.unit_col, config.data.count_col};
  auto options = aggregate_options(config);
  return aggregate_weekly(ingest_csv(config.data.input, schema), options);
}

Panel load_panel(const RunConfig& config) {
  if (config.panel.treated.empty()) throw UsageError("--treated is required");
  if (config.panel.t0.empty()) throw UsageError("--t0 is required (onset date or period index)");
  WeeklySeries series = load_series(config);
  std::size_t t0 = 0;
  if (auto onset = parse_iso_date(config.panel.t0)) {
    t0 = t0_from_onset(series.week_start, *onset);
  } else if (auto index = parse_index(config.panel.t0)) {
    t0 = *index;
  } else {
    throw UsageError("--t0 must be an ISO date or a period index, got '" + config.panel.t0 + "'");
  }
  return build_panel(series, config.panel.treated, t0, config.panel.controls);
}

}  // namespace tbsc::cli
