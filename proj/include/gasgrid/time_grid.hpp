#pragma once

#include <cmath>
#include <string>

#include "gasgrid/errors.hpp"

namespace gasgrid {

/// Uniform scheduling/simulation grids over the extended horizon.
///
/// The billing horizon (typically 24 h) is a prefix of the extended horizon
/// (typically 30 h); periodicity constraints tie the last extended time point
/// back to the first. Objectives integrate over the billing horizon only.
struct TimeGrid {
  double horizon_s = 24.0 * 3600.0;
  double extended_s = 30.0 * 3600.0;
  double opt_step_s = 30.0 * 60.0;
  double sim_step_s = 10.0 * 60.0;

  /// Validates divisibility: opt step tiles both horizons, sim step tiles the
  /// opt step. Throws ConfigError otherwise.
  void validate() const {
    if (horizon_s <= 0 || extended_s < horizon_s)
      throw ConfigError("time grid: need 0 < horizon <= extended horizon");
    if (opt_step_s <= 0 || sim_step_s <= 0)
      throw ConfigError("time grid: steps must be positive");
    if (!divides(opt_step_s, extended_s) || !divides(opt_step_s, horizon_s))
      throw ConfigError("time grid: opt step must divide horizon and extended horizon");
    if (!divides(sim_step_s, opt_step_s))
      throw ConfigError("time grid: sim step must divide opt step");
  }

  /// Number of optimization intervals over the extended horizon.
  int n_opt() const { return static_cast<int>(std::llround(extended_s / opt_step_s)); }
  /// Number of optimization time points (interval edges), n_opt() + 1.
  int n_opt_points() const { return n_opt() + 1; }
  /// Number of optimization intervals inside the billing horizon.
  int n_opt_billed() const { return static_cast<int>(std::llround(horizon_s / opt_step_s)); }
  /// Number of simulation steps over the extended horizon.
  int n_sim() const { return static_cast<int>(std::llround(extended_s / sim_step_s)); }
  /// Simulation steps per optimization interval.
  int sim_per_opt() const { return static_cast<int>(std::llround(opt_step_s / sim_step_s)); }

  /// Time in seconds of optimization point `i`, i in [0, n_opt()].
  double t_opt(int i) const { return i * opt_step_s; }
  /// Time in seconds of simulation point `i`, i in [0, n_sim()].
  double t_sim(int i) const { return i * sim_step_s; }

 private:
  static bool divides(double step, double span) {
    const double k = span / step;
    return std::abs(k - std::llround(k)) < 1e-9;
  }
};

}  // namespace gasgrid
