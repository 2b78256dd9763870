#pragma once

#include <Eigen/Dense>

#include "gasgrid/errors.hpp"
#include "gasgrid/network.hpp"

namespace gasgrid {

/// Power transfer distribution factors: flows = M * injections, with the
/// slack bus absorbing the imbalance. Column slack_bus is identically zero.
struct PtdfMatrix {
  Eigen::MatrixXd m;  // n_lines x n_buses
  int slack_bus = 0;
};

inline PtdfMatrix compute_ptdf(const PowerNetwork& net) {
  const int nb = static_cast<int>(net.buses.size());
  const int nl = static_cast<int>(net.lines.size());
  if (net.slack_bus < 0 || net.slack_bus >= nb) throw DomainError("slack bus out of range");

  Eigen::MatrixXd b_full = Eigen::MatrixXd::Zero(nb, nb);
  for (const auto& ln : net.lines) {
    b_full(ln.from, ln.from) += ln.susceptance;
    b_full(ln.to, ln.to) += ln.susceptance;
    b_full(ln.from, ln.to) -= ln.susceptance;
    b_full(ln.to, ln.from) -= ln.susceptance;
  }

  // Reduced admittance: drop the slack row and column.
  std::vector<int> keep;
  keep.reserve(nb - 1);
  for (int i = 0; i < nb; ++i)
    if (i != net.slack_bus) keep.push_back(i);
  const int nr = static_cast<int>(keep.size());
  Eigen::MatrixXd b_red(nr, nr);
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nr; ++j) b_red(i, j) = b_full(keep[i], keep[j]);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(b_red);
  if (nr > 0 && !lu.isInvertible())
    throw SingularityError("reduced susceptance matrix is singular (disconnected network?)");

  // theta(k) = angle response to a unit injection at bus k (slack fixed at 0).
  PtdfMatrix out;
  out.slack_bus = net.slack_bus;
  out.m = Eigen::MatrixXd::Zero(nl, nb);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(nb, nb);
  if (nr > 0) {
    Eigen::MatrixXd theta_red = lu.solve(Eigen::MatrixXd::Identity(nr, nr));
    for (int i = 0; i < nr; ++i)
      for (int k = 0; k < nr; ++k) theta(keep[i], keep[k]) = theta_red(i, k);
  }
  for (int l = 0; l < nl; ++l) {
    const auto& ln = net.lines[l];
    for (int k = 0; k < nb; ++k)
      out.m(l, k) = ln.susceptance * (theta(ln.from, k) - theta(ln.to, k));
  }
  return out;
}

/// DC flows for one injection vector (sums to anything; slack absorbs).
inline Eigen::VectorXd dc_flows(const PtdfMatrix& ptdf, const Eigen::VectorXd& injections) {
  if (injections.size() != ptdf.m.cols()) throw DomainError("injection vector size mismatch");
  return ptdf.m * injections;
}

}  // namespace gasgrid
