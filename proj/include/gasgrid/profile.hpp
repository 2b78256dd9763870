#pragma once

#include <cmath>
#include <vector>

#include "gasgrid/errors.hpp"

namespace gasgrid {

/// Periodic piecewise-linear time series. Sample k sits at k * step_s; the
/// series has period size() * step_s and interpolates the last sample back to
/// the first, so any query time is valid.
struct Profile {
  std::vector<double> values;
  double step_s = 3600.0;

  bool empty() const { return values.empty(); }
  std::size_t size() const { return values.size(); }
  double period_s() const { return static_cast<double>(values.size()) * step_s; }

  static Profile constant(double v) { return Profile{{v}, 3600.0}; }

  /// Multiplies every sample in place.
  Profile& scale(double f) {
    for (double& v : values) v *= f;
    return *this;
  }
};

/// Piecewise-linear evaluation with wrap-around. A single-sample profile is
/// constant. Throws DomainError on an empty profile.
inline double sample_profile(const Profile& p, double t_seconds) {
  if (p.values.empty()) throw DomainError("sample_profile: empty profile");
  const std::size_t n = p.values.size();
  if (n == 1) return p.values[0];
  if (p.step_s <= 0) throw DomainError("sample_profile: step must be positive");
  double u = std::fmod(t_seconds / p.step_s, static_cast<double>(n));
  if (u < 0) u += static_cast<double>(n);
  const std::size_t k = static_cast<std::size_t>(u) % n;
  const double frac = u - std::floor(u);
  const double a = p.values[k];
  const double b = p.values[(k + 1) % n];
  return a + frac * (b - a);
}

}  // namespace gasgrid
