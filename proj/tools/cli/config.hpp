#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tbsc/effects.hpp"
#include "tbsc/error.hpp"
#include "tbsc/estimator.hpp"
#include "tbsc/inference.hpp"
#include "tbsc/panel.hpp"
#include "tbsc/serialize.hpp"
#include "tbsc/simulate.hpp"

namespace tbsc::cli {

/// Bad flags, missing inputs or a malformed config file (exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

struct DataOptions {
  std::string input;  ///< raw event CSV
  std::string panel;  ///< weekly panel CSV written by `ingest`
  std::string date_col = "date";
  std::string unit_col = "unit";
  std::string count_col = "count";  ///< empty: each row is one event
  std::string start;
  std::string end;
  std::vector<std::string> merge;  ///< "A+B=C"
  bool keep_partial_week = false;
  bool summary = false;  ///< ingest: print and write per-unit summary statistics
};

struct PanelOptions {
  std::string treated;
  std::string t0;  ///< onset date (ISO) or 0-based period index
  std::vector<std::string> controls;  ///< empty: every other unit
};

struct ForestOptions {
  double alpha = 0.05;
  std::size_t k = 5;
  std::optional<std::size_t> m_leaf;
  std::optional<std::size_t> mtry;
  std::size_t n_trees = 500;
  std::string bagging = "none";
  std::size_t block_length = 3;
  bool tune = false;
  std::vector<std::size_t> mtry_grid;
};

struct EnetCliOptions {
  double lambda = 0.1;
  double alpha_mix = 0.5;
  bool tune = false;
  bool standardize = false;
  double tol = 1e-8;
  std::size_t max_iter = 100000;
};

struct ScmCliOptions {
  double tol = 1e-8;
  std::size_t max_iter = 100000;
};

struct BootstrapOptions {
  std::size_t n_boot = 10000;
  std::size_t block_length = 3;
  double level = 0.95;
};

struct PlaceboCliOptions {
  double exclude_multiplier = 2.0;
  bool treated_as_donor = true;
};

struct ConformalCliOptions {
  std::string scheme = "moving-block";
  std::size_t n_samples = 10000;
  double q = 1.0;
  std::string null_trajectory = "zero";  ///< "zero" or a constant effect
  bool spec_test = false;
  std::size_t kappa_max = 10;
};

struct SimulateOptions {
  std::string dgp = "interaction";
  std::string process = "ar1";
  std::size_t t0 = 100;
  std::size_t t_post = 50;
  std::size_t n_controls = 2;
  std::vector<double> beta;
  double tau = 0.0;
  double noise_sd = 1.0;
  double control_mean = 5.0;
  double control_sd = 1.0;
  double ar_coef = 0.5;
  std::string start = "2000-01-03";
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  ///< 0: TBSC_THREADS or hardware concurrency
  std::string output_dir = ".";
  DataOptions data;
  PanelOptions panel;
  std::string estimator = "forest";
  double estimation_fraction = 0.8;
  ForestOptions forest;
  EnetCliOptions enet;
  ScmCliOptions scm;
  BootstrapOptions bootstrap;
  PlaceboCliOptions placebo;
  ConformalCliOptions conformal;
  double holdout = 0.1;
  SimulateOptions simulate;
};

Json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::string& path);

// Independent random streams derived from the master seed.
enum class Stream : std::uint64_t { forest = 1, bootstrap = 2, conformal = 3, placebo = 4, simulate = 5 };
std::uint64_t stream_seed(const RunConfig& config, Stream stream);

EstimatorSpec estimator_spec(const RunConfig& config, EstimatorKind kind);
EstimatorSpec estimator_spec(const RunConfig& config);
BootstrapConfig bootstrap_config(const RunConfig& config);
ConformalOptions conformal_options(const RunConfig& config);
SimConfig sim_config(const RunConfig& config);
AggregateOptions aggregate_options(const RunConfig& config);

/// Weekly series from --panel, or aggregated from --input.
WeeklySeries load_series(const RunConfig& config);
/// Panel for the treated unit with T0 resolved from the onset date or index.
Panel load_panel(const RunConfig& config);

}  // namespace tbsc::cli
