#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace tbsc {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD; nullopt for anything else, including invalid calendar
/// dates such as 2018-02-30.
std::optional<Date> parse_iso_date(std::string_view text);
Date parse_iso_date_or_throw(std::string_view text);
std::string format_iso_date(Date d);

inline Date add_days(Date d, long days) { return d + std::chrono::days{days}; }
inline long days_between(Date from, Date to) { return (to - from).count(); }

}  // namespace tbsc
