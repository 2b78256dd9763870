#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "gasgrid/errors.hpp"
#include "gasgrid/network.hpp"

namespace gasgrid {

/// Uniform spatial split of one pipe: `segments` cells of equal length `dx`,
/// with density and flux nodes at the segments + 1 cell boundaries. Node 0 is
/// the pipe inlet, node `segments` the outlet.
struct PipeSegmentation {
  int segments = 0;
  double dx = 0.0;  // m
};

/// Smallest uniform split whose cells do not exceed dx_max.
inline PipeSegmentation discretize_pipe(const Pipe& pipe, double dx_max) {
  if (!(dx_max > 0)) throw DomainError("discretize_pipe: dx_max must be positive");
  if (!(pipe.length > 0)) throw DomainError("discretize_pipe: pipe length must be positive");
  const int k = std::max(1, static_cast<int>(std::ceil(pipe.length / dx_max - 1e-12)));
  return {k, pipe.length / k};
}

/// Network-wide segmentation with a flat node numbering: pipe p owns the
/// contiguous node range node(p, 0) .. node(p, segments(p)), pipes in order.
struct GasSegmentation {
  std::vector<PipeSegmentation> pipes;
  std::vector<int> node_off;
  int n_nodes = 0;

  int node(int pipe, int m) const { return node_off[static_cast<std::size_t>(pipe)] + m; }
  int segments(int pipe) const { return pipes[static_cast<std::size_t>(pipe)].segments; }
  double dx(int pipe) const { return pipes[static_cast<std::size_t>(pipe)].dx; }
};

inline GasSegmentation segment_network(const GasNetwork& net, double dx_max = 10e3) {
  GasSegmentation seg;
  seg.pipes.reserve(net.pipes.size());
  for (const auto& p : net.pipes) {
    seg.node_off.push_back(seg.n_nodes);
    seg.pipes.push_back(discretize_pipe(p, dx_max));
    seg.n_nodes += seg.pipes.back().segments + 1;
  }
  return seg;
}

/// Stored gas mass of one density snapshot (kg): per-cell trapezoid,
/// sum over pipes of X dx (rho_m + rho_{m+1}) / 2. `rho_nodes` is the flat
/// node vector in segmentation order, kg/m^3.
inline double linepack(const GasNetwork& net, const GasSegmentation& seg,
                       const Eigen::VectorXd& rho_nodes) {
  if (rho_nodes.size() != seg.n_nodes)
    throw LayoutError("linepack: density vector does not match segmentation nodes");
  double total = 0;
  for (std::size_t p = 0; p < net.pipes.size(); ++p) {
    const int pi = static_cast<int>(p);
    double cells = 0;
    for (int m = 0; m < seg.segments(pi); ++m)
      cells += 0.5 * (rho_nodes[seg.node(pi, m)] + rho_nodes[seg.node(pi, m + 1)]);
    total += net.pipes[p].area * seg.dx(pi) * cells;
  }
  return total;
}

}  // namespace gasgrid
