#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "tbsc/panel.hpp"

namespace tbsc {

/// Regression function of the treated unit on the controls.
enum class DgpKind {
  linear,       ///< f(x) = sum_i beta_i x_i
  interaction,  ///< f(x) = beta_1 x_1 + beta_2 x_2 + beta_3 x_1 x_2
};

/// Law of motion of each control series.
enum class ControlProcess { iid, ar1 };

std::string_view to_string(DgpKind kind);
DgpKind parse_dgp(std::string_view text);
std::string_view to_string(ControlProcess process);
ControlProcess parse_control_process(std::string_view text);

/// All noise is uniform (bounded) with the stated standard deviation.
struct SimConfig {
  DgpKind dgp = DgpKind::interaction;
  ControlProcess process = ControlProcess::ar1;
  std::size_t t0 = 100;
  std::size_t t_post = 50;
  std::size_t n_controls = 2;
  /// Missing entries are zero; empty picks (1, 1, 0.5) for interaction and
  /// 1/N each for linear.
  std::vector<double> beta;
  double tau = 0.0;            ///< constant effect added to post outcomes
  double noise_sd = 1.0;       ///< outcome noise
  double control_mean = 5.0;
  double control_sd = 1.0;     ///< innovation sd of each control
  double ar_coef = 0.5;
  std::uint64_t seed = 0;
  Date start = Date{std::chrono::year{2000} / 1 / 3};
};

struct SimulatedPanel {
  Panel panel;
  std::vector<double> f_values;  ///< f(X_t)
  std::vector<double> y0;        ///< untreated outcome f(X_t) + noise
  double tau = 0.0;
};

std::vector<double> effective_beta(const SimConfig& config);
double true_regression(const SimConfig& config, std::span<const double> x);

/// Treated unit is named "treated", controls "c1".."cN"; weekly dates from
/// `start`. Deterministic in `seed`.
SimulatedPanel simulate_panel(const SimConfig& config);

}  // namespace tbsc
