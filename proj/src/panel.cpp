#include "tbsc/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "tbsc/csv.hpp"
#include "tbsc/error.hpp"
#include "tbsc/stats.hpp"

namespace tbsc {

// ---------------------------------------------------------------------------
// RawEventTable

void RawEventTable::add(Date date, const std::string& unit, std::uint64_t count) {
  counts_[{date, unit}] += count;
  ++records_;
}

std::uint64_t RawEventTable::count(Date date, const std::string& unit) const {
  auto it = counts_.find({date, unit});
  return it == counts_.end() ? 0 : it->second;
}

std::vector<std::string> RawEventTable::units() const {
  std::set<std::string> names;
  for (const auto& [key, c] : counts_) names.insert(key.second);
  return {names.begin(), names.end()};
}

Date RawEventTable::min_date() const {
  if (counts_.empty()) throw InvalidArgument("empty event table");
  return counts_.begin()->first.first;
}

Date RawEventTable::max_date() const {
  if (counts_.empty()) throw InvalidArgument("empty event table");
  return counts_.rbegin()->first.first;
}

std::vector<EventRow> RawEventTable::rows() const {
  std::vector<EventRow> out;
  out.reserve(counts_.size());
  for (const auto& [key, c] : counts_) out.push_back({key.first, key.second, c});
  return out;
}

namespace {

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaError(name);
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

RawEventTable ingest_csv(const std::string& path, const EventSchema& schema) {
  csv::Table table = csv::read_file(path);
  std::size_t date_idx = column_index(table.header, schema.date);
  std::size_t unit_idx = column_index(table.header, schema.unit);
  std::optional<std::size_t> count_idx;
  if (!schema.count.empty()) count_idx = column_index(table.header, schema.count);

  RawEventTable raw;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    std::size_t line = table.line_numbers[r];
    std::size_t needed = std::max({date_idx, unit_idx, count_idx.value_or(0)});
    if (row.size() <= needed) throw ParseError(line, "too few fields");
    auto date = parse_iso_date(row[date_idx]);
    if (!date) throw ParseError(line, "unparseable date '" + row[date_idx] + "'");
    std::uint64_t count = 1;
    if (count_idx) {
      const std::string& text = row[*count_idx];
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), count);
      if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError(line, "count must be a nonnegative integer, got '" + text + "'");
      }
    }
    if (row[unit_idx].empty()) throw ParseError(line, "empty unit identifier");
    raw.add(*date, row[unit_idx], count);
  }
  return raw;
}

// ---------------------------------------------------------------------------
// Weekly aggregation

const std::vector<double>& WeeklySeries::series(const std::string& unit) const {
  auto it = std::find(units.begin(), units.end(), unit);
  if (it == units.end()) throw AlignmentError("unknown unit '" + unit + "'");
  return values[static_cast<std::size_t>(it - units.begin())];
}

WeeklySeries aggregate_weekly(const RawEventTable& raw, const AggregateOptions& options) {
  if (raw.empty()) throw InvalidArgument("cannot aggregate an empty event table");
  Date start = options.start.value_or(raw.min_date());
  Date end = options.end.value_or(raw.max_date());
  if (start > raw.min_date()) {
    throw InvalidArgument("start date " + format_iso_date(start) + " is after the first event " +
                          format_iso_date(raw.min_date()));
  }
  if (end < start) throw InvalidArgument("window end precedes start");

  long days = days_between(start, end) + 1;
  long full_weeks = days / 7;
  long weeks = full_weeks + ((days % 7 != 0 && options.trailing == PartialWeek::keep) ? 1 : 0);
  if (weeks <= 0) throw InvalidArgument("window shorter than one week");

  auto target = [&](const std::string& unit) -> const std::string& {
    auto it = options.merge.find(unit);
    return it == options.merge.end() ? unit : it->second;
  };

  std::set<std::string> unit_set;
  for (const auto& u : raw.units()) unit_set.insert(target(u));

  WeeklySeries out;
  out.units.assign(unit_set.begin(), unit_set.end());
  out.values.assign(out.units.size(), std::vector<double>(static_cast<std::size_t>(weeks), 0.0));
  for (long w = 0; w < weeks; ++w) out.week_start.push_back(add_days(start, 7 * w));

  // integer accumulation, so the result is independent of row order
  std::vector<std::vector<std::uint64_t>> acc(out.units.size(),
                                              std::vector<std::uint64_t>(out.week_start.size(), 0));
  for (const auto& row : raw.rows()) {
    long offset = days_between(start, row.date);
    if (offset < 0 || row.date > end) continue;
    long w = offset / 7;
    if (w >= weeks) continue;
    auto u = std::lower_bound(out.units.begin(), out.units.end(), target(row.unit)) - out.units.begin();
    acc[static_cast<std::size_t>(u)][static_cast<std::size_t>(w)] += row.count;
  }
  for (std::size_t u = 0; u < acc.size(); ++u) {
    for (std::size_t w = 0; w < acc[u].size(); ++w) out.values[u][w] = static_cast<double>(acc[u][w]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel

Panel::Panel(std::vector<Date> times, std::string treated_name, std::vector<double> treated,
             std::vector<std::string> control_names, std::vector<double> controls_row_major,
             std::size_t t0)
    : times_(std::move(times)),
      treated_name_(std::move(treated_name)),
      treated_(std::move(treated)),
      control_names_(std::move(control_names)),
      controls_(std::move(controls_row_major)),
      t0_(t0) {
  const std::size_t T = times_.size();
  if (treated_.size() != T) throw AlignmentError("treated series length differs from time index");
  if (control_names_.empty()) throw InvalidArgument("panel needs at least one control");
  if (controls_.size() != T * control_names_.size()) {
    throw AlignmentError("control matrix is not T x N");
  }
  if (t0_ < 1 || t0_ >= T) {
    throw InvalidArgument("t0 = " + std::to_string(t0_) + " outside [1, T) with T = " +
                          std::to_string(T));
  }
  std::set<std::string> names(control_names_.begin(), control_names_.end());
  if (names.size() != control_names_.size()) throw InvalidArgument("duplicate control names");
  if (names.count(treated_name_)) {
    throw InvalidArgument("treated unit '" + treated_name_ + "' is also a control");
  }
  for (double y : treated_) {
    if (!std::isfinite(y)) throw InvalidArgument("treated series has missing or non-finite values");
  }
  for (double x : controls_) {
    if (!std::isfinite(x)) throw InvalidArgument("controls have missing or non-finite values");
  }
}

std::vector<double> Panel::control_column(std::size_t i) const {
  std::vector<double> col(periods());
  for (std::size_t t = 0; t < periods(); ++t) col[t] = control(t, i);
  return col;
}

Panel Panel::with_treated(std::vector<double> treated) const {
  return Panel(times_, treated_name_, std::move(treated), control_names_, controls_, t0_);
}

Panel Panel::truncated(std::size_t periods, std::size_t t0) const {
  if (periods > this->periods()) throw InvalidArgument("cannot extend a panel by truncation");
  std::vector<Date> times(times_.begin(), times_.begin() + static_cast<long>(periods));
  std::vector<double> y(treated_.begin(), treated_.begin() + static_cast<long>(periods));
  std::vector<double> x(controls_.begin(),
                        controls_.begin() + static_cast<long>(periods * n_controls()));
  return Panel(std::move(times), treated_name_, std::move(y), control_names_, std::move(x), t0);
}

Panel build_panel(const WeeklySeries& series, const std::string& treated_name, std::size_t t0,
                  const std::vector<std::string>& controls) {
  const std::size_t T = series.weeks();
  if (series.values.size() != series.units.size()) throw AlignmentError("units/values mismatch");
  for (std::size_t u = 0; u < series.units.size(); ++u) {
    if (series.values[u].size() != T) {
      throw AlignmentError("series '" + series.units[u] + "' has length " +
                           std::to_string(series.values[u].size()) + ", expected " +
                           std::to_string(T));
    }
  }
  const auto& y = series.series(treated_name);

  std::vector<std::string> names = controls;
  if (names.empty()) {
    for (const auto& u : series.units) {
      if (u != treated_name) names.push_back(u);
    }
  }
  std::vector<const std::vector<double>*> cols;
  for (const auto& name : names) cols.push_back(&series.series(name));

  std::vector<double> x(T * names.size());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < names.size(); ++i) x[t * names.size() + i] = (*cols[i])[t];
  }
  return Panel(series.week_start, treated_name, y, std::move(names), std::move(x), t0);
}

std::size_t t0_from_onset(const std::vector<Date>& week_start, Date onset) {
  return static_cast<std::size_t>(
      std::lower_bound(week_start.begin(), week_start.end(), onset) - week_start.begin());
}

// ---------------------------------------------------------------------------
// Splits

TemporalSplit temporal_split(IndexRange range, const SplitSpec& spec) {
  if (!(spec.estimation_fraction > 0.0 && spec.estimation_fraction < 1.0)) {
    throw InvalidArgument("estimation fraction must lie in (0, 1)");
  }
  const std::size_t n = range.size();
  if (n < 2) throw InvalidArgument("temporal split needs at least two periods");
  auto est = static_cast<std::size_t>(std::llround(spec.estimation_fraction * static_cast<double>(n)));
  est = std::clamp<std::size_t>(est, 1, n - 1);
  return {{range.begin, range.begin + est}, {range.begin + est, range.end}};
}

TemporalSplit temporal_split(const Panel& panel, const SplitSpec& spec) {
  return temporal_split(panel.pre_range(), spec);
}

TemporalSplit holdout_split(const Panel& panel, double holdout_fraction) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw InvalidArgument("hold-out fraction must lie in (0, 1)");
  }
  const std::size_t n = panel.t0();
  if (n < 2) throw InvalidArgument("hold-out split needs at least two pre-treatment periods");
  // guard against 0.1 * 100 landing a hair above 10
  auto held = static_cast<std::size_t>(std::ceil(holdout_fraction * static_cast<double>(n) - 1e-9));
  held = std::clamp<std::size_t>(held, 1, n - 1);
  return {{0, n - held}, {n - held, n}};
}

// ---------------------------------------------------------------------------
// Summary statistics

UnitSummary summarize(const std::string& unit, std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  UnitSummary s;
  s.unit = unit;
  s.mean = mean(values);
  s.sd = sample_sd(values);
  s.min = sorted.front();
  s.q1 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q3 = quantile_sorted(sorted, 0.75);
  s.max = sorted.back();
  return s;
}

std::vector<UnitSummary> summary_stats(const Panel& panel) {
  std::vector<UnitSummary> out;
  out.push_back(summarize(panel.treated_name(), panel.treated()));
  for (std::size_t i = 0; i < panel.n_controls(); ++i) {
    out.push_back(summarize(panel.control_names()[i], panel.control_column(i)));
  }
  return out;
}

std::vector<UnitSummary> summary_stats(const WeeklySeries& series) {
  std::vector<UnitSummary> out;
  for (std::size_t u = 0; u < series.units.size(); ++u) {
    out.push_back(summarize(series.units[u], series.values[u]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel CSV

void write_weekly_csv(std::ostream& out, const WeeklySeries& series) {
  std::vector<std::string> header{"week_start"};
  header.insert(header.end(), series.units.begin(), series.units.end());
  csv::write_record(out, header);
  for (std::size_t w = 0; w < series.weeks(); ++w) {
    std::vector<std::string> fields{format_iso_date(series.week_start[w])};
    for (const auto& col : series.values) fields.push_back(csv::format_double(col[w]));
    csv::write_record(out, fields);
  }
}

void write_weekly_csv(const std::string& path, const WeeklySeries& series) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_weekly_csv(out, series);
}

WeeklySeries to_weekly_series(const Panel& panel) {
  WeeklySeries s;
  s.week_start = panel.times();
  s.units.push_back(panel.treated_name());
  s.values.emplace_back(panel.treated().begin(), panel.treated().end());
  for (std::size_t i = 0; i < panel.n_controls(); ++i) {
    s.units.push_back(panel.control_names()[i]);
    s.values.push_back(panel.control_column(i));
  }
  return s;
}

void write_panel_csv(std::ostream& out, const Panel& panel) {
  write_weekly_csv(out, to_weekly_series(panel));
}

void write_panel_csv(const std::string& path, const Panel& panel) {
  write_weekly_csv(path, to_weekly_series(panel));
}

WeeklySeries read_weekly_csv(std::istream& in) {
  WeeklySeries s;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = csv::split_record(line);
    if (!have_header) {
      if (fields.empty() || fields[0] != "week_start") throw SchemaError("week_start");
      if (fields.size() < 2) throw ParseError(line_no, "panel CSV has no unit columns");
      s.units.assign(fields.begin() + 1, fields.end());
      s.values.assign(s.units.size(), {});
      have_header = true;
      continue;
    }
    if (fields.size() != s.units.size() + 1) {
      throw ParseError(line_no, "expected " + std::to_string(s.units.size() + 1) + " fields, got " +
                                    std::to_string(fields.size()));
    }
    auto date = parse_iso_date(fields[0]);
    if (!date) throw ParseError(line_no, "unparseable date '" + fields[0] + "'");
    if (!s.week_start.empty() && *date <= s.week_start.back()) {
      throw ParseError(line_no, "week_start not strictly increasing");
    }
    s.week_start.push_back(*date);
    for (std::size_t u = 0; u < s.units.size(); ++u) {
      double v = 0;
      if (!csv::parse_double(fields[u + 1], v)) {
        throw ParseError(line_no, "non-numeric value '" + fields[u + 1] + "'");
      }
      s.values[u].push_back(v);
    }
  }
  if (!have_header) throw ParseError(line_no, "empty panel CSV");
  return s;
}

WeeklySeries read_weekly_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_weekly_csv(in);
}

}  // namespace tbsc
