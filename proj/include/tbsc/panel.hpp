#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tbsc/date.hpp"

namespace tbsc {

// ---------------------------------------------------------------------------
// Raw daily event counts

struct EventRow {
  Date date;
  std::string unit;
  std::uint64_t count = 0;
};

/// Daily event counts keyed by (date, unit). Duplicate keys are summed.
class RawEventTable {
 public:
  void add(Date date, const std::string& unit, std::uint64_t count);

  bool empty() const noexcept { return counts_.empty(); }
  std::size_t size() const noexcept { return counts_.size(); }
  /// Number of input records folded into the table.
  std::size_t records_read() const noexcept { return records_; }
  std::uint64_t count(Date date, const std::string& unit) const;
  std::vector<std::string> units() const;
  Date min_date() const;
  Date max_date() const;
  /// Rows ordered by (date, unit).
  std::vector<EventRow> rows() const;

 private:
  std::map<std::pair<Date, std::string>, std::uint64_t> counts_;
  std::size_t records_ = 0;
};

/// Column names of the raw event CSV. An empty `count` column name means
/// every record is a single event.
struct EventSchema {
  std::string date = "date";
  std::string unit = "unit";
  std::string count = "count";
};

/// Throws SchemaError for a missing column, ParseError (with the line number)
/// for a bad date or count, IoError when the file cannot be read.
RawEventTable ingest_csv(const std::string& path, const EventSchema& schema = {});

// ---------------------------------------------------------------------------
// Weekly aggregation

enum class PartialWeek { drop, keep };

struct AggregateOptions {
  std::optional<Date> start;  ///< default: first date in the table
  std::optional<Date> end;    ///< inclusive window end; default: last date in the table
  /// raw unit -> panel unit; several raw units may share a target.
  std::map<std::string, std::string> merge;
  PartialWeek trailing = PartialWeek::drop;
};

/// Aligned weekly series, one per unit, all of equal length.
struct WeeklySeries {
  std::vector<Date> week_start;
  std::vector<std::string> units;
  std::vector<std::vector<double>> values;  ///< values[u][w]

  std::size_t weeks() const noexcept { return week_start.size(); }
  const std::vector<double>& series(const std::string& unit) const;
};

/// Week w (0-based) covers days [start + 7w, start + 7w + 7). Missing
/// (date, unit) combinations count as zero events.
WeeklySeries aggregate_weekly(const RawEventTable& raw, const AggregateOptions& options = {});

// ---------------------------------------------------------------------------
// Panel

/// Half-open range [begin, end) of 0-based period indices.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return end <= begin; }
  bool contains(std::size_t t) const noexcept { return t >= begin && t < end; }
  bool operator==(const IndexRange&) const = default;
};

/// One treated series and N control series over T periods; the first t0
/// periods are pre-treatment. Immutable once built.
class Panel {
 public:
  Panel(std::vector<Date> times, std::string treated_name, std::vector<double> treated,
        std::vector<std::string> control_names, std::vector<double> controls_row_major,
        std::size_t t0);

  std::size_t periods() const noexcept { return times_.size(); }
  std::size_t n_controls() const noexcept { return control_names_.size(); }
  std::size_t t0() const noexcept { return t0_; }
  IndexRange pre_range() const noexcept { return {0, t0_}; }
  IndexRange post_range() const noexcept { return {t0_, periods()}; }
  IndexRange all_range() const noexcept { return {0, periods()}; }

  const std::vector<Date>& times() const noexcept { return times_; }
  const std::string& treated_name() const noexcept { return treated_name_; }
  std::span<const double> treated() const noexcept { return treated_; }
  double treated(std::size_t t) const { return treated_[t]; }
  const std::vector<std::string>& control_names() const noexcept { return control_names_; }
  /// Control outcomes X_t at period t.
  std::span<const double> control_row(std::size_t t) const {
    return {controls_.data() + t * n_controls(), n_controls()};
  }
  double control(std::size_t t, std::size_t i) const { return controls_[t * n_controls() + i]; }
  std::vector<double> control_column(std::size_t i) const;

  /// Same panel with the treated outcome replaced.
  Panel with_treated(std::vector<double> treated) const;
  /// First `periods` periods, with onset `t0`.
  Panel truncated(std::size_t periods, std::size_t t0) const;

 private:
  std::vector<Date> times_;
  std::string treated_name_;
  std::vector<double> treated_;
  std::vector<std::string> control_names_;
  std::vector<double> controls_;
  std::size_t t0_;
};

/// `controls` fixes the control order; empty means every other unit in
/// series order. Throws AlignmentError for unknown units or ragged series.
Panel build_panel(const WeeklySeries& series, const std::string& treated_name, std::size_t t0,
                  const std::vector<std::string>& controls = {});

/// Number of weeks starting strictly before `onset`.
std::size_t t0_from_onset(const std::vector<Date>& week_start, Date onset);

// ---------------------------------------------------------------------------
// Temporal splits

struct SplitSpec {
  double estimation_fraction = 0.8;
};

struct TemporalSplit {
  IndexRange estimation;
  IndexRange validation;
};

/// Contiguous prefix/suffix of `range`; the prefix holds
/// round(fraction * size) periods, clamped so both parts are non-empty.
TemporalSplit temporal_split(IndexRange range, const SplitSpec& spec);
TemporalSplit temporal_split(const Panel& panel, const SplitSpec& spec);

/// Reserves the last ceil(holdout_fraction * T0) pre-treatment periods.
TemporalSplit holdout_split(const Panel& panel, double holdout_fraction);

// ---------------------------------------------------------------------------
// Summary statistics

struct UnitSummary {
  std::string unit;
  double mean = 0, sd = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

UnitSummary summarize(const std::string& unit, std::span<const double> values);
/// Treated unit first, then controls in panel order.
std::vector<UnitSummary> summary_stats(const Panel& panel);
std::vector<UnitSummary> summary_stats(const WeeklySeries& series);

// ---------------------------------------------------------------------------
// Panel CSV: `week_start` then one column per unit, shortest round-trip decimals.

void write_weekly_csv(std::ostream& out, const WeeklySeries& series);
void write_weekly_csv(const std::string& path, const WeeklySeries& series);
/// Treated column first, controls in panel order.
void write_panel_csv(std::ostream& out, const Panel& panel);
void write_panel_csv(const std::string& path, const Panel& panel);
WeeklySeries read_weekly_csv(std::istream& in);
WeeklySeries read_weekly_csv(const std::string& path);
WeeklySeries to_weekly_series(const Panel& panel);

}  // namespace tbsc
