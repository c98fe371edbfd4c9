#include "cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "tbsc/csv.hpp"
#include "tbsc/date.hpp"
#include "tbsc/parallel.hpp"

namespace tbsc::cli {

namespace fs = std::filesystem;

namespace {

std::string fixed(double x, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

std::string fixed(const std::optional<double>& x, int digits = 3) {
  return x ? fixed(*x, digits) : std::string("undefined");
}

std::string num(double x) { return csv::format_double(x); }
std::string num(const std::optional<double>& x) { return x ? num(*x) : std::string(); }

fs::path output_path(const RunConfig& config, const std::string& name) {
  return fs::path(config.output_dir) / name;
}

void prepare_output(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + config.output_dir + "': " + ec.message());
}

std::ofstream open_output(const RunConfig& config, const std::string& name) {
  auto path = output_path(config, name);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const RunConfig& config, const std::string& name, const Json& j) {
  auto out = open_output(config, name);
  out << j.dump(2) << '\n';
}

void echo_config(const RunConfig& config) {
  prepare_output(config);
  write_json(config, "config_echo.json", to_json(config));
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        line += row[c] + std::string(width[c] - row[c].size(), ' ');
      } else {
        line += "  " + std::string(width[c] - row[c].size(), ' ') + row[c];
      }
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
}

Json model_summary(const FittedModel& model) {
  if (const auto* forest = std::get_if<ForestModel>(&model)) {
    double leaves = 0;
    for (const auto& tree : forest->trees()) leaves += static_cast<double>(tree.n_leaves());
    const auto& c = forest->config();
    Json j = {{"estimator", "forest"},
              {"config", to_json(c)},
              {"effective_m_leaf", c.effective_m_leaf()},
              {"effective_mtry", c.effective_mtry(forest->n_controls())},
              {"mean_leaves", leaves / static_cast<double>(forest->trees().size())},
              {"training_range", to_json(forest->training_range())}};
    return j;
  }
  return to_json(model);
}

Json tuning_json(const FittedEstimator& fitted) {
  if (fitted.mtry_tuning) return to_json(*fitted.mtry_tuning);
  if (fitted.enet_tuning) return to_json(*fitted.enet_tuning);
  return nullptr;
}

void print_tuning(std::ostream& out, const FittedEstimator& fitted) {
  if (fitted.mtry_tuning && !fitted.mtry_tuning->scores.empty()) {
    std::vector<std::vector<std::string>> rows{{"mtry", "validation RMSPE"}};
    for (const auto& s : fitted.mtry_tuning->scores) {
      rows.push_back({std::to_string(s.mtry), fixed(s.validation_rmspe, 4)});
    }
    out << "mtry grid search:\n";
    print_table(out, rows);
    out << "chosen mtry: " << fitted.mtry_tuning->config.mtry.value_or(0) << "\n\n";
  }
  if (fitted.enet_tuning) {
    std::vector<std::vector<std::string>> rows{{"lambda", "alpha_mix", "validation RMSPE"}};
    for (const auto& s : fitted.enet_tuning->scores) {
      rows.push_back({fixed(s.point.lambda, 6), fixed(s.point.alpha_mix, 2), fixed(s.validation_rmspe, 4)});
    }
    out << "elastic-net grid search:\n";
    print_table(out, rows);
    out << "chosen lambda: " << num(fitted.enet_tuning->chosen.lambda)
        << ", alpha_mix: " << num(fitted.enet_tuning->chosen.alpha_mix) << "\n\n";
  }
}

void print_weights(std::ostream& out, const Panel& panel, const FittedModel& model) {
  const std::vector<double>* omega = nullptr;
  if (const auto* scm = std::get_if<ScmWeights>(&model)) {
    omega = &scm->omega;
    out << "synthetic control weights:\n";
  } else if (const auto* enet = std::get_if<EnetFit>(&model)) {
    omega = &enet->omega;
    out << "elastic-net coefficients (intercept " << fixed(enet->mu, 4) << "):\n";
  }
  if (!omega) return;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < omega->size(); ++i) {
    rows.push_back({"  " + panel.control_names()[i], fixed((*omega)[i], 6)});
  }
  print_table(out, rows);
  out << '\n';
}

Json panel_json(const Panel& panel) {
  return {{"treated", panel.treated_name()},
          {"controls", panel.control_names()},
          {"periods", panel.periods()},
          {"t0", panel.t0()},
          {"pre_periods", panel.t0()},
          {"post_periods", panel.periods() - panel.t0()},
          {"first_period", format_iso_date(panel.times().front())},
          {"onset", format_iso_date(panel.times()[panel.t0()])}};
}

std::vector<double> null_trajectory(const RunConfig& config, std::size_t length) {
  const std::string& spec = config.conformal.null_trajectory;
  if (spec == "zero") return std::vector<double>(length, 0.0);
  double value = 0;
  if (!csv::parse_double(spec, value)) {
    throw UsageError("--null must be 'zero' or a constant effect, got '" + spec + "'");
  }
  return std::vector<double>(length, value);
}

std::vector<std::string> metric_fields(const FitMetrics& m) {
  return {num(m.pre_rmspe), num(m.post_rmspe), num(m.ratio_rmspe), num(m.pre_mae),
          num(m.post_mae),  num(m.ratio_mae),  num(m.avg_gap_pre),  num(m.avg_gap_post)};
}

std::string file_stem(const std::string& unit) {
  std::string stem = unit;
  for (char& ch : stem) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return stem.empty() ? std::string("unit") : stem;
}

const std::vector<std::string> kMetricHeader = {"pre_rmspe", "post_rmspe",  "ratio_rmspe",
                                                "pre_mae",   "post_mae",    "ratio_mae",
                                                "avg_gap_pre", "avg_gap_post"};

}  // namespace

int cmd_ingest(const RunConfig& config, std::ostream& out) {
  if (config.data.input.empty()) throw UsageError("ingest: --input is required");
  EventSchema schema{config.data.date_col, config.data.unit_col, config.data.count_col};
  auto options = aggregate_options(config);
  RawEventTable raw = ingest_csv(config.data.input, schema);
  WeeklySeries series = aggregate_weekly(raw, options);

  echo_config(config);
  write_weekly_csv(output_path(config, "panel.csv").string(), series);

  out << "read " << raw.records_read() << " records for " << raw.units().size() << " raw units\n";
  out << "panel: " << series.units.size() << " units x " << series.weeks() << " weeks, "
      << format_iso_date(series.week_start.front()) << " to "
      << format_iso_date(series.week_start.back()) << " (week starts)\n";
  out << "wrote " << output_path(config, "panel.csv").string() << '\n';

  if (config.data.summary) {
    auto stats = summary_stats(series);
    auto file = open_output(config, "summary_stats.csv");
    csv::write_record(file, {"unit", "mean", "sd", "min", "q1", "median", "q3", "max"});
    std::vector<std::vector<std::string>> rows{
        {"Country", "Mean", "Sd.", "Min", "Q1", "Median", "Q3", "Max"}};
    for (const auto& s : stats) {
      csv::write_record(file, {s.unit, num(s.mean), num(s.sd), num(s.min), num(s.q1), num(s.median),
                               num(s.q3), num(s.max)});
      rows.push_back({s.unit, fixed(s.mean, 2), fixed(s.sd, 2), fixed(s.min, 0), fixed(s.q1, 2),
                      fixed(s.median, 2), fixed(s.q3, 2), fixed(s.max, 0)});
    }
    out << '\n';
    print_table(out, rows);
  }
  return 0;
}

int cmd_fit(const RunConfig& config, std::ostream& out) {
  Panel panel = load_panel(config);
  EstimatorSpec spec = estimator_spec(config);
  BootstrapConfig boot = bootstrap_config(config);
  echo_config(config);

  FittedEstimator fitted = fit_estimator(panel, panel.pre_range(), spec);
  CounterfactualFit fit = counterfactual(panel, fitted.model);
  EffectReport effect = effect_report(panel, fit, boot);
  FitMetrics metrics = fit_metrics(fit);

  Json report = {{"estimator", std::string(to_string(kind_of(spec)))},
                 {"panel", panel_json(panel)},
                 {"seed", config.seed},
                 {"effect", to_json(effect)},
                 {"metrics", to_json(metrics)},
                 {"model", model_summary(fitted.model)},
                 {"tuning", tuning_json(fitted)}};
  write_json(config, "report.json", report);
  write_json(config, "model.json", to_json(fitted.model));
  write_gap_csv(output_path(config, "gaps.csv").string(), fit);

  out << "estimator: " << to_string(kind_of(spec)) << '\n';
  out << "treated:   " << panel.treated_name() << " (" << panel.t0() << " pre, "
      << panel.periods() - panel.t0() << " post periods; onset "
      << format_iso_date(panel.times()[panel.t0()]) << ")\n\n";
  print_tuning(out, fitted);
  print_weights(out, panel, fitted.model);
  const int pct = static_cast<int>(std::lround(boot.level * 100));
  out << "ATE estimate:   " << fixed(effect.ate_hat) << '\n';
  out << "naive ATE:      " << fixed(effect.ate_naive) << '\n';
  out << "bootstrap se:   " << fixed(effect.boot_se) << " (block length " << boot.block_length
      << ", " << boot.n_boot << " replicates)\n";
  out << pct << "% CI:         [" << fixed(effect.ci_low) << ", " << fixed(effect.ci_high)
      << "] percentile, [" << fixed(effect.ci_normal_low) << ", " << fixed(effect.ci_normal_high)
      << "] normal\n\n";
  print_table(out, {{"", "RMSPE", "MAE"},
                    {"pre", fixed(metrics.pre_rmspe), fixed(metrics.pre_mae)},
                    {"post", fixed(metrics.post_rmspe), fixed(metrics.post_mae)},
                    {"post/pre", fixed(metrics.ratio_rmspe), fixed(metrics.ratio_mae)}});
  out << "post prediction sd: " << fixed(metrics.post_std) << '\n';
  out << "wrote report.json, model.json, gaps.csv to " << config.output_dir << '\n';
  return 0;
}

int cmd_placebo(const RunConfig& config, std::ostream& out) {
  Panel panel = load_panel(config);
  EstimatorSpec spec = estimator_spec(config);
  echo_config(config);

  FittedEstimator fitted = fit_estimator(panel, panel.pre_range(), spec);
  CounterfactualFit main_fit = counterfactual(panel, fitted.model);
  FitMetrics main_metrics = fit_metrics(main_fit);

  PlaceboOptions options;
  options.exclusion_multiplier = config.placebo.exclude_multiplier;
  options.treated_as_donor = config.placebo.treated_as_donor;
  options.seed = stream_seed(config, Stream::placebo);
  PlaceboStudy study = run_placebos(panel, spec, options);
  PlaceboRankReport ranks = placebo_rank_report(study, panel.treated_name(), main_metrics);

  {
    auto file = open_output(config, "placebo_summary.csv");
    std::vector<std::string> header{"rank", "unit", "role", "excluded"};
    header.insert(header.end(), kMetricHeader.begin(), kMetricHeader.end());
    csv::write_record(file, header);
    for (std::size_t i = 0; i < ranks.rows.size(); ++i) {
      const auto& row = ranks.rows[i];
      std::vector<std::string> fields{std::to_string(i + 1), row.unit, row.is_main ? "treated" : "placebo",
                                      row.excluded ? "1" : "0"};
      auto m = metric_fields(row.metrics);
      fields.insert(fields.end(), m.begin(), m.end());
      csv::write_record(file, fields);
    }
  }
  {
    auto file = open_output(config, "placebo_gaps.csv");
    csv::write_record(file, {"unit", "role", "week_start", "observed", "predicted", "gap"});
    auto emit = [&](const std::string& unit, const char* role, const CounterfactualFit& fit) {
      for (std::size_t t = 0; t < fit.periods(); ++t) {
        csv::write_record(file, {unit, role, format_iso_date(fit.times[t]), num(fit.observed[t]),
                                 num(fit.predictions[t]), num(fit.gaps[t])});
      }
    };
    emit(panel.treated_name(), "treated", main_fit);
    for (const auto& run : study.runs) {
      if (run.ok()) emit(run.unit, "placebo", *run.fit);
    }
  }
  {
    auto dir = output_path(config, "placebo_gaps");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "'");
    write_gap_csv((dir / (file_stem(panel.treated_name()) + ".csv")).string(), main_fit);
    for (const auto& run : study.runs) {
      if (run.ok()) write_gap_csv((dir / (file_stem(run.unit) + ".csv")).string(), *run.fit);
    }
  }
  Json failures = Json::array();
  for (const auto& run : study.runs) {
    if (!run.ok()) failures.push_back({{"unit", run.unit}, {"error", run.error}});
  }
  write_json(config, "placebo.json",
             {{"panel", panel_json(panel)},
              {"main_rank_ratio", ranks.main_rank_ratio},
              {"main_rank_gap", ranks.main_rank_gap},
              {"units_ranked", ranks.rows.size()},
              {"excluded", ranks.excluded},
              {"failures", failures},
              {"placebo_mean_gap_pre", ranks.placebo_mean_gap_pre},
              {"placebo_mean_gap_post", ranks.placebo_mean_gap_post},
              {"exclude_multiplier", options.exclusion_multiplier},
              {"treated_as_donor", options.treated_as_donor}});

  std::vector<std::vector<std::string>> rows{
      {"rank", "unit", "pre RMSPE", "post RMSPE", "ratio", "avg post gap", ""}};
  for (std::size_t i = 0; i < ranks.rows.size(); ++i) {
    const auto& row = ranks.rows[i];
    std::string note = row.is_main ? "treated" : (row.excluded ? "excluded" : "");
    rows.push_back({std::to_string(i + 1), row.unit, fixed(row.metrics.pre_rmspe),
                    fixed(row.metrics.post_rmspe), fixed(row.metrics.ratio_rmspe),
                    fixed(row.metrics.avg_gap_post), note});
  }
  print_table(out, rows);
  out << "\ntreated unit rank: " << ranks.main_rank_ratio << " of " << ranks.rows.size()
      << " by RMSPE ratio, " << ranks.main_rank_gap << " by average post gap\n";
  out << "placebo mean gap: " << fixed(ranks.placebo_mean_gap_pre) << " pre, "
      << fixed(ranks.placebo_mean_gap_post) << " post\n";
  if (!ranks.excluded.empty()) {
    out << "excluded (pre RMSPE above " << num(options.exclusion_multiplier) << "x treated):";
    for (const auto& u : ranks.excluded) out << ' ' << u;
    out << '\n';
  }
  for (const auto& run : study.runs) {
    if (!run.ok()) out << "failed: " << run.unit << ": " << run.error << '\n';
  }
  return 0;
}

int cmd_conformal(const RunConfig& config, std::ostream& out) {
  Panel panel = load_panel(config);
  EstimatorSpec spec = estimator_spec(config);
  ConformalOptions options = conformal_options(config);
  auto null = null_trajectory(config, panel.periods() - panel.t0());
  echo_config(config);

  ConformalResult result = conformal_test(panel, spec, null, options);
  Json j = to_json(result);
  j["panel"] = panel_json(panel);
  j["estimator"] = std::string(to_string(kind_of(spec)));
  write_json(config, "conformal.json", j);
  {
    auto file = open_output(config, "conformal_permutations.csv");
    csv::write_record(file, {"permutation", "statistic"});
    for (std::size_t i = 0; i < result.permutation_statistics.size(); ++i) {
      csv::write_record(file, {std::to_string(i), num(result.permutation_statistics[i])});
    }
  }

  out << "estimator: " << to_string(kind_of(spec)) << ", scheme: " << to_string(result.scheme)
      << ", q = " << num(result.q) << '\n';
  out << "null: " << config.conformal.null_trajectory << " over " << null.size() << " post periods\n";
  out << "statistic: " << fixed(result.statistic, 4) << '\n';
  out << "p-value:   " << fixed(result.p_value, 4) << " (" << result.n_permutations
      << " permutations)\n";

  if (config.conformal.spec_test) {
    auto rows = placebo_specification_test(panel, spec, config.conformal.kappa_max, options);
    auto file = open_output(config, "placebo_spec_test.csv");
    csv::write_record(file, {"kappa", "p_iid", "p_moving_block"});
    std::vector<std::vector<std::string>> table{{"kappa", "iid", "moving block"}};
    for (const auto& r : rows) {
      csv::write_record(file, {std::to_string(r.kappa), num(r.p_iid), num(r.p_moving_block)});
      table.push_back({std::to_string(r.kappa), fixed(r.p_iid), fixed(r.p_moving_block)});
    }
    out << "\nplacebo specification test (pre-treatment periods only):\n";
    print_table(out, table);
  }
  return 0;
}

int cmd_compare(const RunConfig& config, std::ostream& out) {
  Panel panel = load_panel(config);
  std::vector<EstimatorKind> kinds{EstimatorKind::forest, EstimatorKind::scm, EstimatorKind::enet};
  std::vector<EstimatorSpec> specs;
  for (auto kind : kinds) specs.push_back(estimator_spec(config, kind));
  TemporalSplit holdout = holdout_split(panel, config.holdout);
  echo_config(config);

  const char* not_implemented = "not implemented (no algorithm given; see Athey et al.)";
  Json j = {{"panel", panel_json(panel)},
            {"holdout",
             {{"fraction", config.holdout},
              {"estimation", to_json(holdout.estimation)},
              {"validation", to_json(holdout.validation)}}}};
  Json main_rows = Json::array(), holdout_rows = Json::array();

  auto main_file = open_output(config, "compare_main.csv");
  csv::write_record(main_file, {"estimator", "pre_mae", "pre_rmspe", "post_std", "avg_gap_post",
                                "post_mae", "post_rmspe", "note"});
  auto holdout_file = open_output(config, "compare_holdout.csv");
  csv::write_record(holdout_file, {"estimator", "estimation_mae", "estimation_rmspe",
                                   "validation_mae", "validation_rmspe", "note"});

  std::vector<std::vector<std::string>> main_table{
      {"estimator", "pre MAE", "pre RMSPE", "post sd", "avg post gap"}};
  std::vector<std::vector<std::string>> holdout_table{
      {"estimator", "estimation MAE", "estimation RMSPE", "validation MAE", "validation RMSPE"}};

  for (std::size_t e = 0; e < kinds.size(); ++e) {
    std::string name(to_string(kinds[e]));
    FittedEstimator fitted = fit_estimator(panel, panel.pre_range(), specs[e]);
    FitMetrics m = fit_metrics(counterfactual(panel, fitted.model));
    csv::write_record(main_file, {name, num(m.pre_mae), num(m.pre_rmspe), num(m.post_std),
                                  num(m.avg_gap_post), num(m.post_mae), num(m.post_rmspe), ""});
    main_table.push_back({name, fixed(m.pre_mae), fixed(m.pre_rmspe), fixed(m.post_std),
                          fixed(m.avg_gap_post)});
    main_rows.push_back({{"estimator", name}, {"metrics", to_json(m)}, {"tuning", tuning_json(fitted)}});

    FittedEstimator held = fit_estimator(panel, holdout.estimation, specs[e]);
    FitMetrics v = fit_metrics(counterfactual(panel, held.model), holdout.estimation, holdout.validation);
    csv::write_record(holdout_file, {name, num(v.pre_mae), num(v.pre_rmspe), num(v.post_mae),
                                     num(v.post_rmspe), ""});
    holdout_table.push_back({name, fixed(v.pre_mae), fixed(v.pre_rmspe), fixed(v.post_mae),
                             fixed(v.post_rmspe)});
    holdout_rows.push_back({{"estimator", name},
                            {"estimation_mae", v.pre_mae},
                            {"estimation_rmspe", v.pre_rmspe},
                            {"validation_mae", v.post_mae},
                            {"validation_rmspe", v.post_rmspe}});
  }
  csv::write_record(main_file, {"matrix-completion", "", "", "", "", "", "", not_implemented});
  csv::write_record(holdout_file, {"matrix-completion", "", "", "", "", not_implemented});
  main_table.push_back({"matrix-completion", "-", "-", "-", "-"});
  holdout_table.push_back({"matrix-completion", "-", "-", "-", "-"});
  j["main"] = main_rows;
  j["validation"] = holdout_rows;
  j["matrix_completion"] = not_implemented;
  write_json(config, "compare.json", j);

  out << "main sample (" << panel.t0() << " pre, " << panel.periods() - panel.t0()
      << " post periods):\n";
  print_table(out, main_table);
  out << "\nhold-out validation (last " << holdout.validation.size() << " pre-treatment periods):\n";
  print_table(out, holdout_table);
  out << "\nmatrix-completion: " << not_implemented << '\n';
  return 0;
}

int cmd_simulate(const RunConfig& config, std::ostream& out) {
  SimConfig sim = sim_config(config);
  SimulatedPanel s = simulate_panel(sim);
  echo_config(config);
  write_panel_csv(output_path(config, "panel.csv").string(), s.panel);
  const Panel& p = s.panel;
  Json truth = {{"dgp", std::string(to_string(sim.dgp))},
                {"process", std::string(to_string(sim.process))},
                {"beta", effective_beta(sim)},
                {"tau", s.tau},
                {"treated", p.treated_name()},
                {"controls", p.control_names()},
                {"t0", p.t0()},
                {"periods", p.periods()},
                {"onset", format_iso_date(p.times()[p.t0()])},
                {"noise_sd", sim.noise_sd},
                {"seed", sim.seed},
                {"f_values", s.f_values},
                {"y0", s.y0}};
  write_json(config, "truth.json", truth);
  out << "simulated " << to_string(sim.dgp) << " panel: " << p.n_controls() << " controls, "
      << p.t0() << " pre + " << p.periods() - p.t0() << " post periods, tau = " << num(s.tau) << '\n';
  out << "onset " << format_iso_date(p.times()[p.t0()]) << "; fit with --treated " << p.treated_name()
      << " --t0 " << format_iso_date(p.times()[p.t0()]) << '\n';
  return 0;
}

namespace {

void add_data_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--panel", c.data.panel, "weekly panel CSV (from ingest or simulate)");
  sub->add_option("--input", c.data.input, "raw event CSV, aggregated on the fly");
  sub->add_option("--date-col", c.data.date_col, "date column of the event CSV")->capture_default_str();
  sub->add_option("--unit-col", c.data.unit_col, "unit column of the event CSV")->capture_default_str();
  sub->add_option("--count-col", c.data.count_col, "count column; empty counts one event per row")
      ->capture_default_str();
  sub->add_option("--start", c.data.start, "first week start (ISO date)");
  sub->add_option("--end", c.data.end, "last day of the window (ISO date)");
  sub->add_option("--merge", c.data.merge, "merge units: A+B=C (repeatable)");
  sub->add_flag("--keep-partial-week,!--drop-partial-week", c.data.keep_partial_week,
                "keep a trailing week with fewer than seven days");
}

void add_panel_options(CLI::App* sub, RunConfig& c) {
  add_data_options(sub, c);
  sub->add_option("--treated", c.panel.treated, "treated unit");
  sub->add_option("--t0", c.panel.t0, "treatment onset date or number of pre-treatment periods");
  sub->add_option("--controls", c.panel.controls, "control units (default: all others)");
}

void add_model_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--alpha", c.forest.alpha, "forest split balance")->capture_default_str();
  sub->add_option("-k,--min-leaf", c.forest.k, "forest minimum leaf size")->capture_default_str();
  sub->add_option_function<std::size_t>(
      "--m-leaf", [&c](const std::size_t& v) { c.forest.m_leaf = v; },
      "forest leaf size bound (default 2k)");
  sub->add_option_function<std::size_t>(
      "--mtry", [&c](const std::size_t& v) { c.forest.mtry = v; },
      "directions tried per split (default round(sqrt(N)))");
  sub->add_option("--trees", c.forest.n_trees, "number of trees")->capture_default_str();
  sub->add_option("--bagging", c.forest.bagging, "none or block-bootstrap")->capture_default_str();
  sub->add_option("--bag-block-length", c.forest.block_length, "block length for bagging")
      ->capture_default_str();
  sub->add_option("--mtry-grid", c.forest.mtry_grid, "mtry values for --tune (default 1..N)");
  sub->add_option("--lambda", c.enet.lambda, "elastic-net penalty")->capture_default_str();
  sub->add_option("--alpha-mix", c.enet.alpha_mix, "elastic-net l1 share")->capture_default_str();
  sub->add_flag("--standardize,!--no-standardize", c.enet.standardize,
                "standardize predictors inside the elastic net");
  sub->add_option("--scm-tol", c.scm.tol, "synthetic control tolerance")->capture_default_str();
  sub->add_flag_callback(
      "--tune", [&c] { c.forest.tune = c.enet.tune = true; },
      "grid-search hyperparameters on a temporal split of the pre-period");
  sub->add_option("--estimation-fraction", c.estimation_fraction,
                  "share of the pre-period used for estimation when tuning")
      ->capture_default_str();
}

void add_estimator_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--estimator", c.estimator, "forest, scm or enet")->capture_default_str();
  add_model_options(sub, c);
}

std::string prescan_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  return path;
}

int run_app(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::string config_path = prescan_config(args);
  RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);

  CLI::App app{"Tree-based synthetic control", "tbsc"};
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--config", config_path, "JSON run config; flags override it");
  app.add_option("--seed", c.seed, "master seed")->capture_default_str();
  app.add_option("--threads", c.threads, "worker thread cap (default TBSC_THREADS or all cores)");
  app.add_option("--output-dir", c.output_dir, "directory for all artifacts")->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "aggregate an event CSV into a weekly panel");
  add_data_options(ingest, c);
  ingest->add_flag("--summary", c.data.summary, "print and write per-unit summary statistics");

  auto* fit = app.add_subcommand("fit", "fit an estimator and report the treatment effect");
  add_panel_options(fit, c);
  add_estimator_options(fit, c);
  fit->add_option("--n-boot", c.bootstrap.n_boot, "bootstrap replicates")->capture_default_str();
  fit->add_option("--block-length", c.bootstrap.block_length, "bootstrap block length")
      ->capture_default_str();
  fit->add_option("--level", c.bootstrap.level, "confidence level")->capture_default_str();

  auto* placebo = app.add_subcommand("placebo", "rerun the estimator with each control as treated");
  add_panel_options(placebo, c);
  add_estimator_options(placebo, c);
  placebo->add_option("--exclude-multiplier", c.placebo.exclude_multiplier,
                      "exclude placebos whose pre RMSPE exceeds this multiple of the treated one")
      ->capture_default_str();
  placebo->add_flag("--treated-as-donor,!--no-treated-as-donor", c.placebo.treated_as_donor,
                    "use the treated unit as a donor in placebo runs");

  auto* conformal = app.add_subcommand("conformal", "conformal permutation test");
  add_panel_options(conformal, c);
  add_estimator_options(conformal, c);
  conformal->add_option("--scheme", c.conformal.scheme, "iid or moving-block")->capture_default_str();
  conformal->add_option("--n-samples", c.conformal.n_samples, "iid permutations (incl. identity)")
      ->capture_default_str();
  conformal->add_option("--q", c.conformal.q, "statistic exponent")->capture_default_str();
  conformal->add_option("--null", c.conformal.null_trajectory, "zero or a constant effect")
      ->capture_default_str();
  conformal->add_flag("--spec-test", c.conformal.spec_test,
                      "also run the pre-treatment placebo specification test");
  conformal->add_option("--kappa-max", c.conformal.kappa_max, "largest placebo horizon")
      ->capture_default_str();

  auto* compare = app.add_subcommand("compare", "compare forest, scm and enet");
  add_panel_options(compare, c);
  add_model_options(compare, c);
  compare->add_option("--holdout", c.holdout, "share of the pre-period held out for validation")
      ->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "write a synthetic panel with known truth");
  auto& s = c.simulate;
  simulate->add_option("--dgp", s.dgp, "linear or interaction")->capture_default_str();
  simulate->add_option("--process", s.process, "iid or ar1 controls")->capture_default_str();
  simulate->add_option("--t0", s.t0, "pre-treatment periods")->capture_default_str();
  simulate->add_option("--t-post", s.t_post, "post-treatment periods")->capture_default_str();
  simulate->add_option("--n-controls", s.n_controls, "number of controls")->capture_default_str();
  simulate->add_option("--beta", s.beta, "regression coefficients");
  simulate->add_option("--tau", s.tau, "constant treatment effect")->capture_default_str();
  simulate->add_option("--noise-sd", s.noise_sd, "outcome noise sd")->capture_default_str();
  simulate->add_option("--control-mean", s.control_mean, "control mean")->capture_default_str();
  simulate->add_option("--control-sd", s.control_sd, "control innovation sd")->capture_default_str();
  simulate->add_option("--ar-coef", s.ar_coef, "AR(1) coefficient")->capture_default_str();
  simulate->add_option("--start", s.start, "first week start")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  if (c.threads > 0) set_thread_cap(c.threads);
  auto* chosen = app.get_subcommands().front();
  c.command = chosen->get_name();
  if (chosen == ingest) return cmd_ingest(c, out);
  if (chosen == fit) return cmd_fit(c, out);
  if (chosen == placebo) return cmd_placebo(c, out);
  if (chosen == conformal) return cmd_conformal(c, out);
  if (chosen == compare) return cmd_compare(c, out);
  return cmd_simulate(c, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run_app(args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace tbsc::cli
