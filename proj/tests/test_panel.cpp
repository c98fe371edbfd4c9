#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "tbsc/error.hpp"
#include "tbsc/panel.hpp"

using namespace tbsc;
using tbsc::test::TempDir;

namespace {

Date d(const char* s) { return *parse_iso_date(s); }

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kMiddleEast[] = {"Israel",  "Palestine", "Bahrain", "Egypt",        "Iraq",
                             "Jordan",  "Kuwait",    "Lebanon", "Oman",         "Qatar",
                             "Saudi Arabia", "Turkey", "Yemen"};

/// One event per unit per day from 2015-12-28 to 2018-11-03.
RawEventTable middle_east_extract() {
  RawEventTable raw;
  for (Date day = d("2015-12-28"); day <= d("2018-11-03"); day = add_days(day, 1)) {
    for (const char* unit : kMiddleEast) raw.add(day, unit, 1);
  }
  return raw;
}

}  // namespace

TEST_CASE("duplicate (date, unit) rows are summed") {
  TempDir dir;
  write_file(dir.file("e.csv"),
             "date,unit,count\n2020-01-01,A,2\n2020-01-01,A,3\n2020-01-02,B,1\n");
  auto raw = ingest_csv(dir.file("e.csv"));
  CHECK(raw.records_read() == 3);
  CHECK(raw.size() == 2);
  CHECK(raw.count(d("2020-01-01"), "A") == 5);
  CHECK(raw.count(d("2020-01-02"), "B") == 1);
  CHECK(raw.count(d("2020-01-02"), "A") == 0);
}

TEST_CASE("missing column raises a schema error naming it") {
  TempDir dir;
  write_file(dir.file("e.csv"), "date,country,count\n2020-01-01,A,2\n");
  try {
    ingest_csv(dir.file("e.csv"));
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.column() == "unit");
  }
}

TEST_CASE("bad rows abort with their line number") {
  TempDir dir;
  write_file(dir.file("e.csv"), "date,unit,count\n2020-01-01,A,2\n2020-13-01,A,1\n");
  try {
    ingest_csv(dir.file("e.csv"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  write_file(dir.file("n.csv"), "date,unit,count\n2020-01-01,A,-2\n");
  CHECK_THROWS_AS(ingest_csv(dir.file("n.csv")), ParseError);
  CHECK_THROWS_AS(ingest_csv(dir.file("absent.csv")), IoError);
}

TEST_CASE("custom column names, quoting, BOM and one event per row") {
  TempDir dir;
  write_file(dir.file("e.csv"),
             "\xEF\xBB\xBF"
             "event_date,country,fatalities\r\n2020-01-01,\"Israel, North\",9\r\n"
             "2020-01-01,\"Israel, North\",4\r\n");
  EventSchema schema{"event_date", "country", ""};
  auto raw = ingest_csv(dir.file("e.csv"), schema);
  CHECK(raw.count(d("2020-01-01"), "Israel, North") == 2);
}

TEST_CASE("14 days of one event give two weeks of 7") {
  RawEventTable raw;
  for (int i = 0; i < 14; ++i) raw.add(add_days(d("2021-03-01"), i), "A", 1);
  auto s = aggregate_weekly(raw);
  REQUIRE(s.weeks() == 2);
  CHECK(s.series("A") == std::vector<double>{7, 7});
  CHECK(s.week_start[1] == d("2021-03-08"));
}

TEST_CASE("missing combinations count as zero and merges sum units") {
  RawEventTable raw;
  raw.add(d("2021-03-01"), "Israel", 2);
  raw.add(d("2021-03-02"), "Palestine", 3);
  raw.add(d("2021-03-09"), "Jordan", 1);
  raw.add(d("2021-03-14"), "Jordan", 1);
  AggregateOptions opt;
  opt.merge = {{"Israel", "Israel-Palestine"}, {"Palestine", "Israel-Palestine"}};
  auto s = aggregate_weekly(raw, opt);
  CHECK(s.units == std::vector<std::string>{"Israel-Palestine", "Jordan"});
  CHECK(s.series("Israel-Palestine") == std::vector<double>{5, 0});
  CHECK(s.series("Jordan") == std::vector<double>{0, 2});
}

TEST_CASE("start after the first event and empty tables are rejected") {
  RawEventTable raw;
  CHECK_THROWS_AS(aggregate_weekly(raw), InvalidArgument);
  raw.add(d("2021-03-01"), "A", 1);
  AggregateOptions opt;
  opt.start = d("2021-03-02");
  CHECK_THROWS_AS(aggregate_weekly(raw, opt), InvalidArgument);
}

TEST_CASE("the 2015-12-28 to 2018-11-03 window gives 101 pre weeks and 47 or 48 post weeks") {
  auto raw = middle_east_extract();
  CHECK(raw.units().size() == 13);
  AggregateOptions opt;
  opt.start = d("2015-12-28");
  opt.merge = {{"Israel", "Israel-Palestine"}, {"Palestine", "Israel-Palestine"}};

  auto dropped = aggregate_weekly(raw, opt);
  CHECK(dropped.units.size() == 12);
  std::size_t t0 = t0_from_onset(dropped.week_start, d("2017-12-04"));
  CHECK(t0 == 101);
  CHECK(dropped.weeks() - t0 == 47);

  opt.trailing = PartialWeek::keep;
  auto kept = aggregate_weekly(raw, opt);
  CHECK(kept.weeks() - t0 == 48);
  CHECK(kept.series("Jordan").back() == 6.0);

  Panel p = build_panel(kept, "Israel-Palestine", t0);
  CHECK(p.n_controls() == 11);
  CHECK(p.periods() == 149);
  CHECK(p.t0() == 101);
  CHECK(p.treated(0) == 14.0);
}

TEST_CASE("weekly sums conserve events apart from a dropped partial week") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(0, 9), unit(0, 3);
  RawEventTable raw;
  std::uint64_t total = 0;
  Date first = d("2022-01-03");
  for (int i = 0; i < 400; ++i) {
    Date day = add_days(first, i % 60);
    auto c = static_cast<std::uint64_t>(count(rng));
    raw.add(day, "u" + std::to_string(unit(rng)), c);
    if (i % 60 < 56) total += c;
  }
  raw.add(first, "u0", 0);
  auto s = aggregate_weekly(raw);
  CHECK(s.weeks() == 8);
  double weekly = 0;
  for (const auto& v : s.values) weekly = std::accumulate(v.begin(), v.end(), weekly);
  CHECK(weekly == static_cast<double>(total));
}

TEST_CASE("aggregation ignores input row order") {
  TempDir dir;
  std::vector<std::string> lines;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    lines.push_back(format_iso_date(add_days(d("2022-01-03"), static_cast<long>(rng() % 35))) + ",u" +
                    std::to_string(rng() % 3) + "," + std::to_string(rng() % 5));
  }
  auto write = [&](const std::string& name) {
    std::string text = "date,unit,count\n";
    for (const auto& l : lines) text += l + "\n";
    write_file(dir.file(name), text);
  };
  write("a.csv");
  std::shuffle(lines.begin(), lines.end(), rng);
  write("b.csv");
  auto a = aggregate_weekly(ingest_csv(dir.file("a.csv")));
  auto b = aggregate_weekly(ingest_csv(dir.file("b.csv")));
  CHECK(a.values == b.values);
  CHECK(a.week_start == b.week_start);
}

TEST_CASE("build_panel constructs and validates") {
  WeeklySeries s;
  s.week_start = tbsc::test::weekly_dates(10);
  s.units = {"a", "b", "c"};
  s.values = {std::vector<double>(10, 1.0), std::vector<double>(10, 2.0), std::vector<double>(10, 3.0)};
  Panel p = build_panel(s, "b", 7);
  CHECK(p.n_controls() == 2);
  CHECK(p.periods() == 10);
  CHECK(p.t0() == 7);
  CHECK(p.control_names() == std::vector<std::string>{"a", "c"});
  CHECK(build_panel(s, "b", 7, {"c", "a"}).control(0, 0) == 3.0);

  CHECK_THROWS_AS(build_panel(s, "b", 10), InvalidArgument);
  CHECK_THROWS_AS(build_panel(s, "b", 0), InvalidArgument);
  CHECK_THROWS_AS(build_panel(s, "zzz", 5), AlignmentError);
  s.values[2].pop_back();
  CHECK_THROWS_AS(build_panel(s, "b", 5), AlignmentError);
}

TEST_CASE("panel invariants are enforced") {
  auto dates = tbsc::test::weekly_dates(3);
  CHECK_THROWS_AS(Panel(dates, "y", {1, 2, 3}, {"a", "a"}, {1, 1, 2, 2, 3, 3}, 1), InvalidArgument);
  CHECK_THROWS_AS(Panel(dates, "y", {1, 2, 3}, {"y"}, {1, 2, 3}, 1), InvalidArgument);
  CHECK_THROWS_AS(Panel(dates, "y", {1, NAN, 3}, {"a"}, {1, 2, 3}, 1), InvalidArgument);
  CHECK_THROWS_AS(Panel(dates, "y", {1, 2, 3}, {"a"}, {1, INFINITY, 3}, 1), InvalidArgument);
  CHECK_THROWS_AS(Panel(dates, "y", {1, 2, 3}, {"a"}, {1, 2}, 1), AlignmentError);
}

TEST_CASE("temporal splits round to the nearest period and partition the range") {
  auto a = temporal_split(IndexRange{0, 101}, SplitSpec{0.8});
  CHECK(a.estimation == IndexRange{0, 81});
  CHECK(a.validation == IndexRange{81, 101});
  auto b = temporal_split(IndexRange{0, 2}, SplitSpec{0.8});
  CHECK(b.estimation == IndexRange{0, 1});
  CHECK(b.validation == IndexRange{1, 2});
  CHECK_THROWS_AS(temporal_split(IndexRange{0, 1}, SplitSpec{0.8}), InvalidArgument);
  CHECK_THROWS_AS(temporal_split(IndexRange{0, 10}, SplitSpec{1.0}), InvalidArgument);

  for (std::size_t n = 2; n < 300; ++n) {
    for (double f : {0.05, 0.5, 0.8, 0.95}) {
      auto s = temporal_split(IndexRange{0, n}, SplitSpec{f});
      CHECK(s.estimation.begin == 0);
      CHECK(s.estimation.end == s.validation.begin);
      CHECK(s.validation.end == n);
      CHECK(!s.estimation.empty());
      CHECK(!s.validation.empty());
    }
  }
}

TEST_CASE("hold-out reserves the last tenth of the pre-period") {
  std::vector<double> y(149, 1.0);
  std::vector<std::vector<double>> x(149, {1.0});
  Panel p = tbsc::test::make_panel(y, x, 101);
  auto h = holdout_split(p, 0.1);
  CHECK(h.estimation == IndexRange{0, 90});
  CHECK(h.validation == IndexRange{90, 101});
  auto s = temporal_split(p, SplitSpec{0.8});
  CHECK(s.validation == IndexRange{81, 101});
}

TEST_CASE("summary statistics") {
  auto s = summarize("x", std::vector<double>{1, 2, 3, 4});
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.q1 == doctest::Approx(1.75));
  CHECK(s.q3 == doctest::Approx(3.25));
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  auto c = summarize("c", std::vector<double>{5, 5, 5, 5});
  CHECK(c.mean == 5);
  CHECK(c.sd == 0);
  CHECK(c.min == 5);
  CHECK(c.q1 == 5);
  CHECK(c.max == 5);

  Panel p = tbsc::test::make_panel({1, 2, 3, 4}, {{5}, {5}, {5}, {5}}, 2);
  auto rows = summary_stats(p);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].unit == "treated");
  CHECK(rows[0].median == doctest::Approx(2.5));
  CHECK(rows[1].sd == 0);
}

TEST_CASE("panel CSV round-trips bit-exactly") {
  Panel p = tbsc::test::random_panel(40, 3, 30, 5);
  std::stringstream buf;
  write_panel_csv(buf, p);
  auto series = read_weekly_csv(buf);
  Panel q = build_panel(series, "treated", 30);
  CHECK(q.times() == p.times());
  CHECK(q.control_names() == p.control_names());
  for (std::size_t t = 0; t < p.periods(); ++t) {
    CHECK(q.treated(t) == p.treated(t));
    for (std::size_t i = 0; i < 3; ++i) CHECK(q.control(t, i) == p.control(t, i));
  }
  std::stringstream again;
  write_panel_csv(again, q);
  CHECK(again.str() == buf.str());
}

TEST_CASE("malformed panel CSVs are rejected") {
  std::stringstream a("when,x\n2020-01-06,1\n");
  CHECK_THROWS_AS(read_weekly_csv(a), SchemaError);
  std::stringstream b("week_start,x\n2020-01-06,abc\n");
  CHECK_THROWS_AS(read_weekly_csv(b), ParseError);
  std::stringstream c("week_start,x\n2020-01-13,1\n2020-01-06,2\n");
  CHECK_THROWS_AS(read_weekly_csv(c), ParseError);
}
