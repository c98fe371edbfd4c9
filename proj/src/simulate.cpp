#include "tbsc/simulate.hpp"

#include <cmath>
#include <random>
#include <string>

#include "tbsc/error.hpp"
#include "tbsc/rng.hpp"

namespace tbsc {

std::string_view to_string(DgpKind kind) {
  return kind == DgpKind::linear ? "linear" : "interaction";
}

DgpKind parse_dgp(std::string_view text) {
  if (text == "linear") return DgpKind::linear;
  if (text == "interaction") return DgpKind::interaction;
  throw InvalidArgument("unknown DGP '" + std::string(text) + "' (linear, interaction)");
}

std::string_view to_string(ControlProcess process) {
  return process == ControlProcess::iid ? "iid" : "ar1";
}

ControlProcess parse_control_process(std::string_view text) {
  if (text == "iid") return ControlProcess::iid;
  if (text == "ar1") return ControlProcess::ar1;
  throw InvalidArgument("unknown control process '" + std::string(text) + "' (iid, ar1)");
}

std::vector<double> effective_beta(const SimConfig& config) {
  std::vector<double> beta = config.beta;
  if (beta.empty()) {
    if (config.dgp == DgpKind::interaction) {
      beta = {1.0, 1.0, 0.5};
    } else {
      beta.assign(config.n_controls, 1.0 / static_cast<double>(config.n_controls));
    }
  }
  std::size_t want = config.dgp == DgpKind::interaction ? 3 : config.n_controls;
  beta.resize(want, 0.0);
  return beta;
}

double true_regression(const SimConfig& config, std::span<const double> x) {
  auto beta = effective_beta(config);
  if (config.dgp == DgpKind::interaction) {
    return beta[0] * x[0] + beta[1] * x[1] + beta[2] * x[0] * x[1];
  }
  double f = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) f += beta[i] * x[i];
  return f;
}

SimulatedPanel simulate_panel(const SimConfig& config) {
  if (config.n_controls < 1) throw InvalidArgument("need at least one control");
  if (config.dgp == DgpKind::interaction && config.n_controls < 2) {
    throw InvalidArgument("interaction DGP needs at least two controls");
  }
  if (config.t0 < 1 || config.t_post < 1) throw InvalidArgument("need pre and post periods");
  if (config.process == ControlProcess::ar1 && !(std::abs(config.ar_coef) < 1.0)) {
    throw InvalidArgument("AR coefficient must lie in (-1, 1)");
  }

  const std::size_t T = config.t0 + config.t_post;
  const std::size_t N = config.n_controls;
  Engine rng = make_engine(config.seed, 0);
  // uniform on [-sqrt(3), sqrt(3)] has unit variance
  std::uniform_real_distribution<double> unit(-std::sqrt(3.0), std::sqrt(3.0));

  std::vector<double> x(T * N);
  const double phi = config.process == ControlProcess::ar1 ? config.ar_coef : 0.0;
  // stationary sd of the AR(1) innovations scaled so each control has sd control_sd
  const double innovation = config.control_sd * std::sqrt(1.0 - phi * phi);
  for (std::size_t i = 0; i < N; ++i) {
    double dev = config.control_sd * unit(rng);
    for (std::size_t burn = 0; burn < 50; ++burn) dev = phi * dev + innovation * unit(rng);
    for (std::size_t t = 0; t < T; ++t) {
      dev = phi * dev + innovation * unit(rng);
      x[t * N + i] = config.control_mean + dev;
    }
  }

  std::vector<double> y(T), f(T), y0(T);
  for (std::size_t t = 0; t < T; ++t) {
    f[t] = true_regression(config, std::span<const double>(x.data() + t * N, N));
    y0[t] = f[t] + config.noise_sd * unit(rng);
    y[t] = y0[t] + (t >= config.t0 ? config.tau : 0.0);
  }

  std::vector<Date> times(T);
  for (std::size_t t = 0; t < T; ++t) times[t] = add_days(config.start, 7 * static_cast<long>(t));
  std::vector<std::string> names(N);
  for (std::size_t i = 0; i < N; ++i) names[i] = "c" + std::to_string(i + 1);
  return SimulatedPanel{
      Panel(std::move(times), "treated", std::move(y), std::move(names), std::move(x), config.t0),
      std::move(f), std::move(y0), config.tau};
}

}  // namespace tbsc
