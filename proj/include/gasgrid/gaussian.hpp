#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "gasgrid/errors.hpp"

namespace gasgrid {

/// Standard normal CDF.
inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse standard normal CDF on (0, 1). Rational initial guess refined by
/// two Halley steps against erfc, accurate to ~1e-14 across the open interval.
/// Throws DomainError outside (0, 1).
inline double inv_std_normal(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("inv_std_normal: p must lie in (0, 1)");

  // Acklam's rational approximation: central and tail branches.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement on Phi(x) - p = 0.
  for (int it = 0; it < 2; ++it) {
    const double e = std_normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

/// Quantile of the aggregate fluctuation Omega = 1' * omega at level 1 - eps:
/// Q = inv_std_normal(1 - eps) * sqrt(1' Sigma 1). Sigma must be square with
/// a nonnegative total sum (PSD implies this). Throws DomainError otherwise.
inline double omega_quantile(const Eigen::MatrixXd& sigma, double eps) {
  if (sigma.rows() != sigma.cols()) throw DomainError("omega_quantile: Sigma must be square");
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("omega_quantile: eps must lie in (0, 1)");
  const double total = sigma.sum();
  if (total < -1e-12 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
    throw DomainError("omega_quantile: 1' Sigma 1 is negative; Sigma is not PSD");
  return inv_std_normal(1.0 - eps) * std::sqrt(std::max(0.0, total));
}

/// Standard deviation of a line-flow deviation under the affine reserve
/// policy: flow deviation = v' omega with v = m - (m' beta_bus) * 1, where m
/// is the line's PTDF row and beta_bus aggregates participation per bus.
inline double line_flow_std(const Eigen::VectorXd& m, const Eigen::MatrixXd& sigma,
                            const Eigen::VectorXd& beta_bus) {
  if (m.size() != beta_bus.size() || sigma.rows() != m.size() || sigma.cols() != m.size())
    throw DomainError("line_flow_std: dimension mismatch");
  const Eigen::VectorXd v =
      m - Eigen::VectorXd::Constant(m.size(), m.dot(beta_bus));
  const double var = v.dot(sigma * v);
  return std::sqrt(std::max(0.0, var));
}

}  // namespace gasgrid
