#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tbsc::csv {

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> split_record(std::string_view line);

/// Reads a whole file: first record is the header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};
Table read_file(const std::string& path);

std::string quote_if_needed(std::string_view field);
void write_record(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double x);
/// Strict parse of a full field as double.
bool parse_double(std::string_view text, double& out);

}  // namespace tbsc::csv
