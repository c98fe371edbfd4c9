#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tbsc/date.hpp"
#include "tbsc/panel.hpp"

namespace tbsc::test {

inline std::vector<Date> weekly_dates(std::size_t n, Date start = Date{std::chrono::year{2020} / 1 / 6}) {
  std::vector<Date> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(add_days(start, static_cast<long>(7 * i)));
  return out;
}

/// x holds one row per period.
inline Panel make_panel(const std::vector<double>& y, const std::vector<std::vector<double>>& x,
                        std::size_t t0) {
  std::size_t n = x.empty() ? 0 : x.front().size();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("c" + std::to_string(i + 1));
  std::vector<double> flat;
  for (const auto& row : x) flat.insert(flat.end(), row.begin(), row.end());
  return Panel(weekly_dates(y.size()), "treated", y, names, flat, t0);
}

/// Continuous random controls and a noisy nonlinear outcome.
inline Panel random_panel(std::size_t t, std::size_t n, std::size_t t0, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> y(t);
  std::vector<std::vector<double>> x(t, std::vector<double>(n));
  for (std::size_t s = 0; s < t; ++s) {
    for (auto& v : x[s]) v = z(rng);
    y[s] = x[s][0] + (n > 1 ? x[s][0] * x[s][1] : 0.0) + 0.3 * z(rng);
  }
  return make_panel(y, x, t0);
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tbsc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace tbsc::test
