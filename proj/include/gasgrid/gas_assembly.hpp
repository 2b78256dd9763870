#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gasgrid/errors.hpp"
#include "gasgrid/network.hpp"
#include "gasgrid/nlp.hpp"
#include "gasgrid/profile.hpp"
#include "gasgrid/segmentation.hpp"
#include "gasgrid/simulator.hpp"
#include "gasgrid/time_grid.hpp"

namespace gasgrid {

struct GasOptions {
  double flux_smoothing = 1e-2;    // kg/m^2/s, |phi| smoothing in the friction term
  double mdot_smoothing = 1e-2;    // kg/s, |m_dot| smoothing in compressor power
  double compression_price = 0.0;  // $/J on billed compressor energy
  double rho_floor = 1.0;          // kg/m^3, positivity floor where no bound applies
};

/// Extra withdrawal variable wired into one junction's mass balance. The
/// variable must already exist in the NLP (the coupling layer allocates its
/// own withdrawal variables, scaled like w, then points taps at them).
struct GasTap {
  int junction = -1;
  std::function<int(int)> var;  // interval -> variable index
};

/// One state copy of the gas problem. `extra_withdrawal` (n_junc x n_steps,
/// kg/s, positive consumes) and `taps` both add into nodal balances.
struct GasScenarioInput {
  std::string label;
  Eigen::MatrixXd extra_withdrawal;
  std::vector<GasTap> taps;
  bool nominal = false;
};

/// Exogenous withdrawal envelopes at gas-generator junctions, kg/s per
/// optimization interval: row i of each matrix belongs to junction[i].
struct RobustBounds {
  std::vector<int> junction;
  Eigen::MatrixXd d_max, d_nom, d_min;
};

/// Variable layout of the gas problem. Controls (alpha, w) are shared across
/// all state copies; each scenario owns junction densities plus pipe node
/// densities and fluxes. States live on time points 0..n_steps, controls on
/// intervals 0..n_steps-1; the wrap interval of a periodic trajectory is
/// interval 0 again, so control periodicity needs no rows.
struct GasLayout {
  int n_junc = 0, n_node = 0, n_comp = 0, n_inj = 0;
  int n_steps = 0, n_billed = 0;
  double dt = 0.0;
  int n_scen = 1;
  int nominal = 0;
  int off_alpha = 0, off_w = 0;
  std::vector<int> off_jrho, off_rho, off_phi;
  std::vector<std::string> labels;

  int n_points() const { return n_steps + 1; }
  int alpha(int c, int t) const { return off_alpha + t * n_comp + c; }
  int w(int i, int t) const { return off_w + t * n_inj + i; }
  int jrho(int s, int j, int t) const {
    return off_jrho[static_cast<std::size_t>(s)] + t * n_junc + j;
  }
  int rho(int s, int nd, int t) const {
    return off_rho[static_cast<std::size_t>(s)] + t * n_node + nd;
  }
  int phi(int s, int nd, int t) const {
    return off_phi[static_cast<std::size_t>(s)] + t * n_node + nd;
  }
};

struct GasAssembly {
  GasLayout layout;
  ObjTerm cost;  // J_E plus priced billed compressor energy plus tie-breaks
};

namespace gas_detail {

inline constexpr double kSRho = 10.0;    // kg/m^3 variable scale
inline constexpr double kSPhi = 100.0;   // kg/m^2/s variable scale
inline constexpr double kSW = 10.0;      // kg/s variable scale
inline constexpr double kSAlpha = 1.0;

inline double samp(const Profile& p, double t, double fallback) {
  return p.empty() ? fallback : sample_profile(p, t);
}

/// Geometry and index data captured by the nonlinear block callbacks.
struct GasGeom {
  GasLayout lay;
  int scen = 0;
  int total_cells = 0;
  std::vector<int> k, cell_off, node_off;  // per pipe
  std::vector<double> dx, area, a2, kf;    // kf = friction / (2 diameter)
  int seg_node(int p, int m) const { return node_off[static_cast<std::size_t>(p)] + m; }
  std::vector<int> comp_node;              // flat node at the boosted pipe end
  std::vector<double> comp_area;
  double delta2 = 0.0;   // flux smoothing squared
  double deltac2 = 0.0;  // mdot smoothing squared

  // smoothed phi |phi| and its first two derivatives
  double q(double f) const { return f * std::sqrt(f * f + delta2); }
  double q1(double f) const { return (2 * f * f + delta2) / std::sqrt(f * f + delta2); }
  double q2(double f) const {
    const double m = std::sqrt(f * f + delta2);
    return f * (2 * f * f + 3 * delta2) / (m * m * m);
  }
};

inline void bind_linear(SparseNLP::Block& blk, std::vector<double> coeffs) {
  auto cf = std::make_shared<std::vector<double>>(std::move(coeffs));
  auto st = std::make_shared<std::vector<std::pair<int, int>>>(blk.jac_structure);
  const int rows = blk.rows;
  blk.eval = [cf, st, rows](const Eigen::VectorXd& x) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(rows);
    for (std::size_t k = 0; k < st->size(); ++k)
      c[(*st)[k].first] += (*cf)[k] * x[(*st)[k].second];
    return c;
  };
  blk.jac = [cf](const Eigen::VectorXd&) { return *cf; };
}

}  // namespace gas_detail

/// Appends the transient gas problem to `nlp`: shared controls (compressor
/// ratios, injection rates), then one state copy per scenario with dynamics
/// (box scheme per cell: trapezoid in time, two-point cells in space), nodal
/// balances, compressor density couplings, slack pins, periodicity rows, and
/// compressor power limits. Empty `scenarios` means one deterministic copy.
/// Throws ConfigError when a connected component has no slack junction.
inline GasAssembly assemble_gas(const GasNetwork& net, const GasSegmentation& seg,
                                const TimeGrid& grid, SparseNLP& nlp,
                                const GasOptions& opt = {},
                                std::vector<GasScenarioInput> scenarios = {}) {
  using namespace gas_detail;
  grid.validate();
  if (scenarios.empty()) scenarios.push_back({});
  const int S = static_cast<int>(scenarios.size());
  const int nj = static_cast<int>(net.junctions.size());
  const int np = static_cast<int>(net.pipes.size());
  const int nc = static_cast<int>(net.compressors.size());
  const int ni = static_cast<int>(net.injections.size());
  const int N = grid.n_opt();
  if (np == 0) throw DomainError("gas: network has no pipes");
  if (static_cast<int>(seg.pipes.size()) != np)
    throw LayoutError("gas: segmentation does not match the pipe list");

  // Every component needs a slack junction to pin its density level.
  {
    std::vector<int> parent(static_cast<std::size_t>(nj));
    for (int j = 0; j < nj; ++j) parent[static_cast<std::size_t>(j)] = j;
    auto find = [&](int x) {
      while (parent[static_cast<std::size_t>(x)] != x)
        x = parent[static_cast<std::size_t>(x)] =
            parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      return x;
    };
    for (const auto& p : net.pipes) parent[static_cast<std::size_t>(find(p.from))] = find(p.to);
    std::vector<char> anchored(static_cast<std::size_t>(nj), 0);
    for (int j = 0; j < nj; ++j)
      if (net.junctions[static_cast<std::size_t>(j)].slack) anchored[static_cast<std::size_t>(find(j))] = 1;
    for (int j = 0; j < nj; ++j)
      if (!anchored[static_cast<std::size_t>(find(j))])
        throw ConfigError("gas: junction " + net.junctions[static_cast<std::size_t>(j)].id +
                          " floats in a component with no slack junction");
  }

  GasAssembly out;
  GasLayout& lay = out.layout;
  lay.n_junc = nj;
  lay.n_node = seg.n_nodes;
  lay.n_comp = nc;
  lay.n_inj = ni;
  lay.n_steps = N;
  lay.n_billed = grid.n_opt_billed();
  lay.dt = grid.opt_step_s;
  lay.n_scen = S;
  for (int s = 0; s < S; ++s) {
    lay.labels.push_back(scenarios[static_cast<std::size_t>(s)].label);
    if (scenarios[static_cast<std::size_t>(s)].nominal) lay.nominal = s;
  }

  const int base = nlp.n();
  lay.off_alpha = base;
  lay.off_w = base + nc * N;
  int next = base + (nc + ni) * N;
  for (int s = 0; s < S; ++s) {
    lay.off_jrho.push_back(next);
    next += nj * (N + 1);
    lay.off_rho.push_back(next);
    next += seg.n_nodes * (N + 1);
    lay.off_phi.push_back(next);
    next += seg.n_nodes * (N + 1);
  }
  const int nv = next;

  nlp.x0.conservativeResize(nv);
  nlp.xl.conservativeResize(nv);
  nlp.xu.conservativeResize(nv);
  const Eigen::Index scaled_before = nlp.var_scale.size();
  nlp.var_scale.conservativeResize(nv);
  for (Eigen::Index i = scaled_before; i < base; ++i) nlp.var_scale[i] = 1.0;
  nlp.names.resize(static_cast<std::size_t>(nv));

  auto sfx = [&](int s) {
    const std::string& l = lay.labels[static_cast<std::size_t>(s)];
    return l.empty() ? std::string() : "[" + l + "]";
  };

  // Controls. alpha starts at its floor, w at the center of its range.
  for (int t = 0; t < N; ++t) {
    const double tau = grid.t_opt(t);
    for (int c = 0; c < nc; ++c) {
      const auto& cp = net.compressors[static_cast<std::size_t>(c)];
      const int i = lay.alpha(c, t);
      nlp.xl[i] = cp.alpha_min;
      nlp.xu[i] = cp.alpha_max;
      nlp.x0[i] = cp.alpha_min;
      nlp.var_scale[i] = kSAlpha;
      nlp.names[static_cast<std::size_t>(i)] = "alpha[" + cp.id + "," + std::to_string(t) + "]";
    }
    for (int w = 0; w < ni; ++w) {
      const auto& inj = net.injections[static_cast<std::size_t>(w)];
      const int i = lay.w(w, t);
      nlp.xl[i] = samp(inj.flow_min, tau, 0.0);
      nlp.xu[i] = samp(inj.flow_max, tau, 0.0);
      if (nlp.xl[i] > nlp.xu[i])
        throw InfeasibleBoundsError("gas: injection " + inj.id + " has crossed flow bounds");
      nlp.x0[i] = 0.5 * (nlp.xl[i] + nlp.xu[i]);
      nlp.var_scale[i] = kSW;
      nlp.names[static_cast<std::size_t>(i)] = "w[" + inj.id + "," + std::to_string(t) + "]";
    }
  }

  // Reference density level for initial states: mean slack density at t = 0.
  double rho0 = 0.0;
  {
    int n_slack = 0;
    for (const auto& j : net.junctions)
      if (j.slack) {
        rho0 += samp(j.slack_density, 0.0, 50.0);
        ++n_slack;
      }
    rho0 = n_slack ? rho0 / n_slack : 50.0;
  }

  for (int s = 0; s < S; ++s) {
    for (int t = 0; t <= N; ++t) {
      const double tau = grid.t_opt(t);
      for (int j = 0; j < nj; ++j) {
        const auto& jn = net.junctions[static_cast<std::size_t>(j)];
        const int i = lay.jrho(s, j, t);
        if (jn.slack) {
          // Pinned by rows; the operational band is the data's promise.
          nlp.xl[i] = opt.rho_floor;
          nlp.xu[i] = kInf;
          nlp.x0[i] = samp(jn.slack_density, tau, rho0);
        } else {
          nlp.xl[i] = jn.rho_min;
          nlp.xu[i] = jn.rho_max;
          nlp.x0[i] = std::clamp(rho0, jn.rho_min, jn.rho_max);
        }
        nlp.var_scale[i] = kSRho;
        nlp.names[static_cast<std::size_t>(i)] =
            "jrho" + sfx(s) + "[" + jn.id + "," + std::to_string(t) + "]";
      }
      for (int p = 0; p < np; ++p) {
        const auto& pipe = net.pipes[static_cast<std::size_t>(p)];
        const int k = seg.segments(p);
        const double in0 = nlp.x0[lay.jrho(s, pipe.from, t)];
        const double out0 = nlp.x0[lay.jrho(s, pipe.to, t)];
        for (int m = 0; m <= k; ++m) {
          const int ir = lay.rho(s, seg.node(p, m), t);
          // Junction bands live on the junction variables alone; endpoint
          // nodes are tied to them by link rows, and duplicating the box
          // there would put two coincident bounds plus an equality on the
          // same quantity (a degenerate active set wherever a band binds).
          nlp.xl[ir] = opt.rho_floor;
          nlp.xu[ir] = kInf;
          const double frac = k > 0 ? static_cast<double>(m) / k : 0.0;
          nlp.x0[ir] = std::clamp(in0 + frac * (out0 - in0), nlp.xl[ir],
                                  std::min(nlp.xu[ir], 1e6));
          nlp.var_scale[ir] = kSRho;
          nlp.names[static_cast<std::size_t>(ir)] = "rho" + sfx(s) + "[" + pipe.id + "." +
                                                    std::to_string(m) + "," + std::to_string(t) +
                                                    "]";
          const int ip = lay.phi(s, seg.node(p, m), t);
          nlp.xl[ip] = -kInf;
          nlp.xu[ip] = kInf;
          nlp.x0[ip] = 0.0;
          nlp.var_scale[ip] = kSPhi;
          nlp.names[static_cast<std::size_t>(ip)] = "phi" + sfx(s) + "[" + pipe.id + "." +
                                                    std::to_string(m) + "," + std::to_string(t) +
                                                    "]";
        }
      }
    }
  }

  // Shared geometry for the nonlinear callbacks.
  auto geom0 = std::make_shared<GasGeom>();
  geom0->lay = lay;
  geom0->delta2 = opt.flux_smoothing * opt.flux_smoothing;
  geom0->deltac2 = opt.mdot_smoothing * opt.mdot_smoothing;
  for (int p = 0; p < np; ++p) {
    const auto& pipe = net.pipes[static_cast<std::size_t>(p)];
    geom0->cell_off.push_back(geom0->total_cells);
    geom0->node_off.push_back(seg.node(p, 0));
    geom0->k.push_back(seg.segments(p));
    geom0->total_cells += seg.segments(p);
    geom0->dx.push_back(seg.dx(p));
    geom0->area.push_back(pipe.area);
    geom0->a2.push_back(pipe.wave_speed * pipe.wave_speed);
    geom0->kf.push_back(pipe.friction / (2.0 * pipe.diameter));
  }
  for (int c = 0; c < nc; ++c) {
    const auto& cp = net.compressors[static_cast<std::size_t>(c)];
    const int node = cp.orientation >= 0 ? seg.node(cp.pipe, 0)
                                         : seg.node(cp.pipe, seg.segments(cp.pipe));
    geom0->comp_node.push_back(node);
    geom0->comp_area.push_back(net.pipes[static_cast<std::size_t>(cp.pipe)].area);
  }

  std::vector<int> bal_junc, slack_junc;
  for (int j = 0; j < nj; ++j)
    (net.junctions[static_cast<std::size_t>(j)].slack ? slack_junc : bal_junc).push_back(j);

  for (int s = 0; s < S; ++s) {
    const auto& sc = scenarios[static_cast<std::size_t>(s)];
    if (sc.extra_withdrawal.size() &&
        (sc.extra_withdrawal.rows() != nj || sc.extra_withdrawal.cols() != N))
      throw LayoutError("gas: extra withdrawal matrix must be n_junc x n_steps");
    auto geom = std::make_shared<GasGeom>(*geom0);
    geom->scen = s;

    // Mass per cell and interval: trapezoid density rate plus flux divergence.
    {
      auto& blk = nlp.add_block("pipe_mass" + sfx(s), geom->total_cells * N);
      blk.row_scale.resize(blk.rows);
      std::vector<double> coeffs;
      for (int t = 0; t < N; ++t) {
        for (int p = 0; p < np; ++p) {
          const double cr = 1.0 / (2.0 * lay.dt);
          const double cf = 1.0 / (2.0 * seg.dx(p));
          for (int m = 0; m < seg.segments(p); ++m) {
            const int r = t * geom->total_cells + geom->cell_off[static_cast<std::size_t>(p)] + m;
            blk.row_scale[r] = 1.0 / std::max(kSRho * cr, kSPhi * cf);
            const int n0 = seg.node(p, m), n1 = seg.node(p, m + 1);
            blk.jac_structure.emplace_back(r, lay.rho(s, n0, t));
            coeffs.push_back(-cr);
            blk.jac_structure.emplace_back(r, lay.rho(s, n0, t + 1));
            coeffs.push_back(cr);
            blk.jac_structure.emplace_back(r, lay.rho(s, n1, t));
            coeffs.push_back(-cr);
            blk.jac_structure.emplace_back(r, lay.rho(s, n1, t + 1));
            coeffs.push_back(cr);
            blk.jac_structure.emplace_back(r, lay.phi(s, n0, t));
            coeffs.push_back(-cf);
            blk.jac_structure.emplace_back(r, lay.phi(s, n0, t + 1));
            coeffs.push_back(-cf);
            blk.jac_structure.emplace_back(r, lay.phi(s, n1, t));
            coeffs.push_back(cf);
            blk.jac_structure.emplace_back(r, lay.phi(s, n1, t + 1));
            coeffs.push_back(cf);
          }
        }
      }
      bind_linear(blk, std::move(coeffs));
    }

    // Momentum per cell and interval at the time midpoint: pressure gradient
    // a^2 d(rho)/dx balances smoothed friction kf q(phi)/rho, all corner
    // quantities averaged (two nodes, two time points).
    {
      auto& blk = nlp.add_block("pipe_momentum" + sfx(s), geom->total_cells * N);
      blk.row_scale.resize(blk.rows);
      for (int t = 0; t < N; ++t) {
        for (int p = 0; p < np; ++p) {
          for (int m = 0; m < seg.segments(p); ++m) {
            const int r = t * geom->total_cells + geom->cell_off[static_cast<std::size_t>(p)] + m;
            blk.row_scale[r] =
                2.0 * seg.dx(p) / (geom->a2[static_cast<std::size_t>(p)] * kSRho);
            const int n0 = seg.node(p, m), n1 = seg.node(p, m + 1);
            const int vars[8] = {lay.rho(s, n0, t),  lay.rho(s, n0, t + 1),
                                 lay.rho(s, n1, t),  lay.rho(s, n1, t + 1),
                                 lay.phi(s, n0, t),  lay.phi(s, n0, t + 1),
                                 lay.phi(s, n1, t),  lay.phi(s, n1, t + 1)};
            for (int a = 0; a < 8; ++a) blk.jac_structure.emplace_back(r, vars[a]);
            for (int a = 0; a < 8; ++a)
              for (int b = 0; b <= a; ++b)
                blk.hess_structure.emplace_back(std::max(vars[a], vars[b]),
                                                std::min(vars[a], vars[b]));
          }
        }
      }
      blk.eval = [geom, this_np = np](const Eigen::VectorXd& x) {
        const auto& g = *geom;
        const auto& L = g.lay;
        Eigen::VectorXd c(g.total_cells * L.n_steps);
        for (int t = 0; t < L.n_steps; ++t)
          for (int p = 0; p < this_np; ++p)
            for (int m = 0; m < g.k[static_cast<std::size_t>(p)]; ++m) {
              const int r = t * g.total_cells + g.cell_off[static_cast<std::size_t>(p)] + m;
              const int n0 = g.seg_node(p, m), n1 = g.seg_node(p, m + 1);
              const double r00 = x[L.rho(g.scen, n0, t)], r01 = x[L.rho(g.scen, n0, t + 1)];
              const double r10 = x[L.rho(g.scen, n1, t)], r11 = x[L.rho(g.scen, n1, t + 1)];
              const double f00 = x[L.phi(g.scen, n0, t)], f01 = x[L.phi(g.scen, n0, t + 1)];
              const double f10 = x[L.phi(g.scen, n1, t)], f11 = x[L.phi(g.scen, n1, t + 1)];
              const double rhat = 0.25 * (r00 + r01 + r10 + r11);
              const double phat = 0.25 * (f00 + f01 + f10 + f11);
              c[r] = g.a2[static_cast<std::size_t>(p)] *
                         (0.5 * (r10 + r11) - 0.5 * (r00 + r01)) /
                         g.dx[static_cast<std::size_t>(p)] +
                     g.kf[static_cast<std::size_t>(p)] * g.q(phat) / rhat;
            }
        return c;
      };
      blk.jac = [geom, this_np = np](const Eigen::VectorXd& x) {
        const auto& g = *geom;
        const auto& L = g.lay;
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(g.total_cells) * L.n_steps * 8);
        for (int t = 0; t < L.n_steps; ++t)
          for (int p = 0; p < this_np; ++p)
            for (int m = 0; m < g.k[static_cast<std::size_t>(p)]; ++m) {
              const int n0 = g.seg_node(p, m), n1 = g.seg_node(p, m + 1);
              const double rhat =
                  0.25 * (x[L.rho(g.scen, n0, t)] + x[L.rho(g.scen, n0, t + 1)] +
                          x[L.rho(g.scen, n1, t)] + x[L.rho(g.scen, n1, t + 1)]);
              const double phat =
                  0.25 * (x[L.phi(g.scen, n0, t)] + x[L.phi(g.scen, n0, t + 1)] +
                          x[L.phi(g.scen, n1, t)] + x[L.phi(g.scen, n1, t + 1)]);
              const double ax = g.a2[static_cast<std::size_t>(p)] /
                                (2.0 * g.dx[static_cast<std::size_t>(p)]);
              const double kf = g.kf[static_cast<std::size_t>(p)];
              const double dr = -kf * g.q(phat) / (4.0 * rhat * rhat);
              const double df = kf * g.q1(phat) / (4.0 * rhat);
              v.push_back(-ax + dr);
              v.push_back(-ax + dr);
              v.push_back(ax + dr);
              v.push_back(ax + dr);
              for (int a = 0; a < 4; ++a) v.push_back(df);
            }
        return v;
      };
      blk.hess = [geom, this_np = np](const Eigen::VectorXd& x, const Eigen::VectorXd& lam) {
        const auto& g = *geom;
        const auto& L = g.lay;
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(g.total_cells) * L.n_steps * 36);
        for (int t = 0; t < L.n_steps; ++t)
          for (int p = 0; p < this_np; ++p)
            for (int m = 0; m < g.k[static_cast<std::size_t>(p)]; ++m) {
              const int r = t * g.total_cells + g.cell_off[static_cast<std::size_t>(p)] + m;
              const int n0 = g.seg_node(p, m), n1 = g.seg_node(p, m + 1);
              const double rhat =
                  0.25 * (x[L.rho(g.scen, n0, t)] + x[L.rho(g.scen, n0, t + 1)] +
                          x[L.rho(g.scen, n1, t)] + x[L.rho(g.scen, n1, t + 1)]);
              const double phat =
                  0.25 * (x[L.phi(g.scen, n0, t)] + x[L.phi(g.scen, n0, t + 1)] +
                          x[L.phi(g.scen, n1, t)] + x[L.phi(g.scen, n1, t + 1)]);
              const double kf = g.kf[static_cast<std::size_t>(p)];
              const double w = lam[r];
              const double hrr = w * kf * g.q(phat) / (8.0 * rhat * rhat * rhat);
              const double hrf = -w * kf * g.q1(phat) / (16.0 * rhat * rhat);
              const double hff = w * kf * g.q2(phat) / (16.0 * rhat);
              for (int a = 0; a < 8; ++a)
                for (int b = 0; b <= a; ++b) {
                  const bool fa = a >= 4, fb = b >= 4;
                  v.push_back(fa && fb ? hff : (!fa && !fb ? hrr : hrf));
                }
            }
        return v;
      };
    }

    // Nodal balance per non-slack junction and interval: flux out of the
    // junction into pipes plus withdrawals equals zero; supplies enter as
    // negative w. Slack junctions have no row, their supply is whatever the
    // pinned density requires.
    if (!bal_junc.empty()) {
      const int nbj = static_cast<int>(bal_junc.size());
      auto& blk = nlp.add_block("nodal_balance" + sfx(s), nbj * N);
      blk.row_scale.resize(blk.rows);
      std::vector<double> coeffs;
      for (int t = 0; t < N; ++t) {
        for (int bj = 0; bj < nbj; ++bj) {
          const int j = bal_junc[static_cast<std::size_t>(bj)];
          const int r = t * nbj + bj;
          double maxmag = kSW;
          for (int p = 0; p < np; ++p) {
            const auto& pipe = net.pipes[static_cast<std::size_t>(p)];
            const double half = 0.5 * pipe.area;
            if (pipe.from == j) {
              blk.jac_structure.emplace_back(r, lay.phi(s, seg.node(p, 0), t));
              coeffs.push_back(half);
              blk.jac_structure.emplace_back(r, lay.phi(s, seg.node(p, 0), t + 1));
              coeffs.push_back(half);
              maxmag = std::max(maxmag, half * kSPhi);
            }
            if (pipe.to == j) {
              const int nk = seg.node(p, seg.segments(p));
              blk.jac_structure.emplace_back(r, lay.phi(s, nk, t));
              coeffs.push_back(-half);
              blk.jac_structure.emplace_back(r, lay.phi(s, nk, t + 1));
              coeffs.push_back(-half);
              maxmag = std::max(maxmag, half * kSPhi);
            }
          }
          for (int w = 0; w < ni; ++w)
            if (net.injections[static_cast<std::size_t>(w)].junction == j) {
              blk.jac_structure.emplace_back(r, lay.w(w, t));
              coeffs.push_back(1.0);
            }
          for (const auto& tap : sc.taps)
            if (tap.junction == j) {
              blk.jac_structure.emplace_back(r, tap.var(t));
              coeffs.push_back(1.0);
            }
          const double fixed =
              sc.extra_withdrawal.size() ? sc.extra_withdrawal(j, t) : 0.0;
          blk.cl[r] = blk.cu[r] = -fixed;
          blk.row_scale[r] = 1.0 / maxmag;
        }
      }
      bind_linear(blk, std::move(coeffs));
    }

    // Pipe end densities follow their junction; a compressor end scales by
    // its shared ratio instead, which makes those rows bilinear.
    {
      struct End {
        int node, junc;
        int comp;  // -1 for a plain end
      };
      std::vector<End> plain, boosted;
      for (int p = 0; p < np; ++p) {
        const auto& pipe = net.pipes[static_cast<std::size_t>(p)];
        const Compressor* cp = net.compressor_on(p);
        int ci = -1;
        if (cp) ci = static_cast<int>(cp - net.compressors.data());
        const bool boost_in = cp && cp->orientation >= 0;
        const bool boost_out = cp && cp->orientation < 0;
        End in{seg.node(p, 0), pipe.from, boost_in ? ci : -1};
        End outp{seg.node(p, seg.segments(p)), pipe.to, boost_out ? ci : -1};
        (boost_in ? boosted : plain).push_back(in);
        (boost_out ? boosted : plain).push_back(outp);
      }

      if (!plain.empty()) {
        const int ne = static_cast<int>(plain.size());
        auto& blk = nlp.add_block("density_link" + sfx(s), ne * N);
        blk.row_scale = Eigen::VectorXd::Constant(ne * N, 1.0 / kSRho);
        std::vector<double> coeffs;
        for (int t = 0; t < N; ++t)
          for (int e = 0; e < ne; ++e) {
            const int r = t * ne + e;
            const auto& en = plain[static_cast<std::size_t>(e)];
            blk.jac_structure.emplace_back(r, lay.rho(s, en.node, t));
            coeffs.push_back(1.0);
            blk.jac_structure.emplace_back(r, lay.jrho(s, en.junc, t));
            coeffs.push_back(-1.0);
          }
        bind_linear(blk, std::move(coeffs));
      }

      if (!boosted.empty()) {
        const int ne = static_cast<int>(boosted.size());
        auto& blk = nlp.add_block("compressor_link" + sfx(s), ne * N);
        blk.row_scale = Eigen::VectorXd::Constant(ne * N, 1.0 / (4.0 * kSRho));
        auto idx = std::make_shared<std::vector<std::array<int, 3>>>();
        for (int t = 0; t < N; ++t)
          for (int e = 0; e < ne; ++e) {
            const int r = t * ne + e;
            const auto& en = boosted[static_cast<std::size_t>(e)];
            const int ir = lay.rho(s, en.node, t);
            const int ij = lay.jrho(s, en.junc, t);
            const int ia = lay.alpha(en.comp, t);
            idx->push_back({ir, ij, ia});
            blk.jac_structure.emplace_back(r, ir);
            blk.jac_structure.emplace_back(r, ij);
            blk.jac_structure.emplace_back(r, ia);
            blk.hess_structure.emplace_back(std::max(ij, ia), std::min(ij, ia));
          }
        blk.eval = [idx](const Eigen::VectorXd& x) {
          Eigen::VectorXd c(static_cast<Eigen::Index>(idx->size()));
          for (std::size_t r = 0; r < idx->size(); ++r) {
            const auto& q = (*idx)[r];
            c[static_cast<Eigen::Index>(r)] = x[q[0]] - x[q[2]] * x[q[1]];
          }
          return c;
        };
        blk.jac = [idx](const Eigen::VectorXd& x) {
          std::vector<double> v;
          v.reserve(idx->size() * 3);
          for (const auto& q : *idx) {
            v.push_back(1.0);
            v.push_back(-x[q[2]]);
            v.push_back(-x[q[1]]);
          }
          return v;
        };
        blk.hess = [idx](const Eigen::VectorXd&, const Eigen::VectorXd& lam) {
          std::vector<double> v;
          v.reserve(idx->size());
          for (std::size_t r = 0; r < idx->size(); ++r)
            v.push_back(-lam[static_cast<Eigen::Index>(r)]);
          return v;
        };
      }
    }

    // Slack densities pinned to their profile at every time point.
    if (!slack_junc.empty()) {
      const int nsj = static_cast<int>(slack_junc.size());
      auto& blk = nlp.add_block("slack_density" + sfx(s), nsj * (N + 1));
      blk.row_scale = Eigen::VectorXd::Constant(nsj * (N + 1), 1.0 / kSRho);
      std::vector<double> coeffs;
      for (int t = 0; t <= N; ++t)
        for (int e = 0; e < nsj; ++e) {
          const int j = slack_junc[static_cast<std::size_t>(e)];
          const int r = t * nsj + e;
          blk.cl[r] = blk.cu[r] =
              samp(net.junctions[static_cast<std::size_t>(j)].slack_density, grid.t_opt(t), rho0);
          blk.jac_structure.emplace_back(r, lay.jrho(s, j, t));
          coeffs.push_back(1.0);
        }
      bind_linear(blk, std::move(coeffs));
    }

    // Periodicity: final state equals initial state. Slack junction rows are
    // already pinned pointwise, repeating them would duplicate the pins.
    {
      std::vector<std::pair<int, int>> ties;
      for (int j : bal_junc) ties.emplace_back(lay.jrho(s, j, N), lay.jrho(s, j, 0));
      for (int nd = 0; nd < seg.n_nodes; ++nd)
        ties.emplace_back(lay.rho(s, nd, N), lay.rho(s, nd, 0));
      for (int nd = 0; nd < seg.n_nodes; ++nd)
        ties.emplace_back(lay.phi(s, nd, N), lay.phi(s, nd, 0));
      auto& blk = nlp.add_block("periodicity" + sfx(s), static_cast<int>(ties.size()));
      blk.row_scale.resize(blk.rows);
      std::vector<double> coeffs;
      for (std::size_t e = 0; e < ties.size(); ++e) {
        const int r = static_cast<int>(e);
        blk.row_scale[r] = 1.0 / nlp.var_scale[ties[e].first];
        blk.jac_structure.emplace_back(r, ties[e].first);
        coeffs.push_back(1.0);
        blk.jac_structure.emplace_back(r, ties[e].second);
        coeffs.push_back(-1.0);
      }
      bind_linear(blk, std::move(coeffs));
    }

    // Compressor power cap per interval: eps |m_dot| (alpha^h - 1) <= E_max,
    // with m_dot the smoothed midpoint mass flow at the boosted end.
    if (nc > 0) {
      auto& blk = nlp.add_block("compressor_power" + sfx(s), nc * N);
      blk.row_scale.resize(blk.rows);
      for (int t = 0; t < N; ++t)
        for (int c = 0; c < nc; ++c) {
          const auto& cp = net.compressors[static_cast<std::size_t>(c)];
          const int r = t * nc + c;
          blk.cl[r] = -kInf;
          blk.cu[r] = cp.power_max;
          blk.row_scale[r] = 1.0 / std::max(1e4, cp.power_max);
          const int node = geom->comp_node[static_cast<std::size_t>(c)];
          const int ia = lay.alpha(c, t);
          const int if0 = lay.phi(s, node, t);
          const int if1 = lay.phi(s, node, t + 1);
          blk.jac_structure.emplace_back(r, ia);
          blk.jac_structure.emplace_back(r, if0);
          blk.jac_structure.emplace_back(r, if1);
          blk.hess_structure.emplace_back(ia, ia);
          blk.hess_structure.emplace_back(std::max(if0, ia), std::min(if0, ia));
          blk.hess_structure.emplace_back(if0, if0);
          blk.hess_structure.emplace_back(std::max(if1, ia), std::min(if1, ia));
          blk.hess_structure.emplace_back(std::max(if1, if0), std::min(if1, if0));
          blk.hess_structure.emplace_back(if1, if1);
        }
      auto comps = std::make_shared<std::vector<Compressor>>(net.compressors);
      blk.eval = [geom, comps](const Eigen::VectorXd& x) {
        const auto& g = *geom;
        const auto& L = g.lay;
        const int nc2 = static_cast<int>(comps->size());
        Eigen::VectorXd c(nc2 * L.n_steps);
        for (int t = 0; t < L.n_steps; ++t)
          for (int ci = 0; ci < nc2; ++ci) {
            const auto& cp = (*comps)[static_cast<std::size_t>(ci)];
            const int node = g.comp_node[static_cast<std::size_t>(ci)];
            const double u = g.comp_area[static_cast<std::size_t>(ci)] * 0.5 *
                             (x[L.phi(g.scen, node, t)] + x[L.phi(g.scen, node, t + 1)]);
            const double ms = std::sqrt(u * u + g.deltac2);
            c[t * nc2 + ci] =
                cp.coeff * ms * (std::pow(x[L.alpha(ci, t)], cp.exponent) - 1.0);
          }
        return c;
      };
      blk.jac = [geom, comps](const Eigen::VectorXd& x) {
        const auto& g = *geom;
        const auto& L = g.lay;
        const int nc2 = static_cast<int>(comps->size());
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(nc2) * L.n_steps * 3);
        for (int t = 0; t < L.n_steps; ++t)
          for (int ci = 0; ci < nc2; ++ci) {
            const auto& cp = (*comps)[static_cast<std::size_t>(ci)];
            const int node = g.comp_node[static_cast<std::size_t>(ci)];
            const double X2 = 0.5 * g.comp_area[static_cast<std::size_t>(ci)];
            const double u =
                X2 * (x[L.phi(g.scen, node, t)] + x[L.phi(g.scen, node, t + 1)]);
            const double ms = std::sqrt(u * u + g.deltac2);
            const double al = x[L.alpha(ci, t)];
            const double A = std::pow(al, cp.exponent) - 1.0;
            v.push_back(cp.coeff * ms * cp.exponent * std::pow(al, cp.exponent - 1.0));
            v.push_back(cp.coeff * A * (u / ms) * X2);
            v.push_back(cp.coeff * A * (u / ms) * X2);
          }
        return v;
      };
      blk.hess = [geom, comps](const Eigen::VectorXd& x, const Eigen::VectorXd& lam) {
        const auto& g = *geom;
        const auto& L = g.lay;
        const int nc2 = static_cast<int>(comps->size());
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(nc2) * L.n_steps * 6);
        for (int t = 0; t < L.n_steps; ++t)
          for (int ci = 0; ci < nc2; ++ci) {
            const auto& cp = (*comps)[static_cast<std::size_t>(ci)];
            const int node = g.comp_node[static_cast<std::size_t>(ci)];
            const double X2 = 0.5 * g.comp_area[static_cast<std::size_t>(ci)];
            const double u =
                X2 * (x[L.phi(g.scen, node, t)] + x[L.phi(g.scen, node, t + 1)]);
            const double ms = std::sqrt(u * u + g.deltac2);
            const double al = x[L.alpha(ci, t)];
            const double h = cp.exponent;
            const double A = std::pow(al, h) - 1.0;
            const double w = lam[t * nc2 + ci] * cp.coeff;
            const double haa = w * ms * h * (h - 1.0) * std::pow(al, h - 2.0);
            const double haf = w * h * std::pow(al, h - 1.0) * (u / ms) * X2;
            const double hff = w * A * (g.deltac2 / (ms * ms * ms)) * X2 * X2;
            v.push_back(haa);
            v.push_back(haf);
            v.push_back(hff);
            v.push_back(haf);
            v.push_back(hff);
            v.push_back(hff);
          }
        return v;
      };
    }
  }

  // Objective: billed gas trade, optionally priced billed compressor energy
  // on the nominal copy, and tie-break pulls. Compressor ratios get a faint
  // pull to their floor on every step (the real price dominates wherever one
  // exists); injection rates only past the billed window, where nothing else
  // prices them.
  std::vector<std::pair<int, double>> coeffs;
  for (int t = 0; t < lay.n_billed; ++t) {
    const double tau = grid.t_opt(t);
    for (int w = 0; w < ni; ++w) {
      const double pr = samp(net.injections[static_cast<std::size_t>(w)].price, tau, 0.0);
      if (pr != 0.0) coeffs.emplace_back(lay.w(w, t), pr * lay.dt);
    }
  }

  struct Pull {
    int i;
    double ref, w;
  };
  std::vector<Pull> pulls;
  for (int t = 0; t < N; ++t)
    for (int c = 0; c < nc; ++c)
      pulls.push_back({lay.alpha(c, t), net.compressors[static_cast<std::size_t>(c)].alpha_min,
                       5e-3});
  for (int t = lay.n_billed; t < N; ++t)
    for (int w = 0; w < ni; ++w) pulls.push_back({lay.w(w, t), nlp.x0[lay.w(w, t)], 1e-4});

  // Flux enters every physics row through time midpoints, which leaves the
  // alternating mode phi^t + c (-1)^t exactly invisible whenever the step
  // count is even. A faint temporal smoothing quadratic is the only term
  // that sees it; the penalty vanishes on any time-constant trajectory.
  struct Diff {
    int i0, i1;
    double w;
  };
  std::vector<Diff> diffs;
  for (int s = 0; s < S; ++s)
    for (int nd = 0; nd < seg.n_nodes; ++nd)
      for (int t = 0; t < N; ++t)
        diffs.push_back({lay.phi(s, nd, t), lay.phi(s, nd, t + 1), 5e-9});

  struct CompCost {
    int ia, if0, if1;
    double eps, h, X2, scale;  // scale = price * dt
  };
  std::vector<CompCost> comp_cost;
  if (opt.compression_price > 0.0 && nc > 0) {
    for (int t = 0; t < lay.n_billed; ++t)
      for (int c = 0; c < nc; ++c) {
        const auto& cp = net.compressors[static_cast<std::size_t>(c)];
        const int node = geom0->comp_node[static_cast<std::size_t>(c)];
        comp_cost.push_back({lay.alpha(c, t), lay.phi(lay.nominal, node, t),
                             lay.phi(lay.nominal, node, t + 1), cp.coeff, cp.exponent,
                             0.5 * geom0->comp_area[static_cast<std::size_t>(c)],
                             opt.compression_price * lay.dt});
      }
  }

  auto cf = std::make_shared<std::vector<std::pair<int, double>>>(std::move(coeffs));
  auto pl = std::make_shared<std::vector<Pull>>(std::move(pulls));
  auto cc = std::make_shared<std::vector<CompCost>>(std::move(comp_cost));
  auto dl = std::make_shared<std::vector<Diff>>(std::move(diffs));
  const double dc2 = geom0->deltac2;
  out.cost.f = [cf, pl, cc, dl, dc2](const Eigen::VectorXd& x) {
    double sum = 0;
    for (const auto& [i, c] : *cf) sum += c * x[i];
    for (const auto& q : *pl) sum += q.w * (x[q.i] - q.ref) * (x[q.i] - q.ref);
    for (const auto& q : *dl) sum += q.w * (x[q.i1] - x[q.i0]) * (x[q.i1] - x[q.i0]);
    for (const auto& q : *cc) {
      const double u = q.X2 * (x[q.if0] + x[q.if1]);
      sum += q.scale * q.eps * std::sqrt(u * u + dc2) * (std::pow(x[q.ia], q.h) - 1.0);
    }
    return sum;
  };
  out.cost.add_grad = [cf, pl, cc, dl, dc2](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    for (const auto& [i, c] : *cf) g[i] += c;
    for (const auto& q : *pl) g[q.i] += 2.0 * q.w * (x[q.i] - q.ref);
    for (const auto& q : *dl) {
      const double d = 2.0 * q.w * (x[q.i1] - x[q.i0]);
      g[q.i1] += d;
      g[q.i0] -= d;
    }
    for (const auto& q : *cc) {
      const double u = q.X2 * (x[q.if0] + x[q.if1]);
      const double ms = std::sqrt(u * u + dc2);
      const double A = std::pow(x[q.ia], q.h) - 1.0;
      g[q.ia] += q.scale * q.eps * ms * q.h * std::pow(x[q.ia], q.h - 1.0);
      const double df = q.scale * q.eps * A * (u / ms) * q.X2;
      g[q.if0] += df;
      g[q.if1] += df;
    }
  };
  if (!pl->empty() || !cc->empty() || !dl->empty()) {
    for (const auto& q : *pl) out.cost.hess_structure.emplace_back(q.i, q.i);
    for (const auto& q : *dl) {
      out.cost.hess_structure.emplace_back(q.i0, q.i0);
      out.cost.hess_structure.emplace_back(q.i1, q.i1);
      out.cost.hess_structure.emplace_back(std::max(q.i0, q.i1), std::min(q.i0, q.i1));
    }
    for (const auto& q : *cc) {
      out.cost.hess_structure.emplace_back(q.ia, q.ia);
      out.cost.hess_structure.emplace_back(std::max(q.if0, q.ia), std::min(q.if0, q.ia));
      out.cost.hess_structure.emplace_back(q.if0, q.if0);
      out.cost.hess_structure.emplace_back(std::max(q.if1, q.ia), std::min(q.if1, q.ia));
      out.cost.hess_structure.emplace_back(std::max(q.if1, q.if0), std::min(q.if1, q.if0));
      out.cost.hess_structure.emplace_back(q.if1, q.if1);
    }
    out.cost.hess = [pl, cc, dl, dc2](const Eigen::VectorXd& x) {
      std::vector<double> v;
      v.reserve(pl->size() + dl->size() * 3 + cc->size() * 6);
      for (const auto& q : *pl) v.push_back(2.0 * q.w);
      for (const auto& q : *dl) {
        v.push_back(2.0 * q.w);
        v.push_back(2.0 * q.w);
        v.push_back(-2.0 * q.w);
      }
      for (const auto& q : *cc) {
        const double u = q.X2 * (x[q.if0] + x[q.if1]);
        const double ms = std::sqrt(u * u + dc2);
        const double A = std::pow(x[q.ia], q.h) - 1.0;
        const double k = q.scale * q.eps;
        const double haa = k * ms * q.h * (q.h - 1.0) * std::pow(x[q.ia], q.h - 2.0);
        const double haf = k * q.h * std::pow(x[q.ia], q.h - 1.0) * (u / ms) * q.X2;
        const double hff = k * A * (dc2 / (ms * ms * ms)) * q.X2 * q.X2;
        v.push_back(haa);
        v.push_back(haf);
        v.push_back(hff);
        v.push_back(haf);
        v.push_back(hff);
        v.push_back(hff);
      }
      return v;
    };
  }
  return out;
}

/// Robust three-scenario assembly: state copies for the max, nominal, and min
/// withdrawal envelopes share one set of controls. Throws OrderingError when
/// the envelopes are not ordered min <= nom <= max pointwise.
inline GasAssembly assemble_robust(const GasNetwork& net, const GasSegmentation& seg,
                                   const TimeGrid& grid, const RobustBounds& rb,
                                   SparseNLP& nlp, const GasOptions& opt = {}) {
  const int N = grid.n_opt();
  const int nj = static_cast<int>(net.junctions.size());
  const int nr = static_cast<int>(rb.junction.size());
  auto need = [&](const Eigen::MatrixXd& m, const char* name) {
    if (m.rows() != nr || m.cols() != N)
      throw LayoutError(std::string("robust bounds: ") + name +
                        " must be junction-list rows by n_steps columns");
  };
  need(rb.d_max, "d_max");
  need(rb.d_nom, "d_nom");
  need(rb.d_min, "d_min");
  for (int i = 0; i < nr; ++i) {
    if (rb.junction[static_cast<std::size_t>(i)] < 0 ||
        rb.junction[static_cast<std::size_t>(i)] >= nj)
      throw MappingError("robust bounds: junction index out of range");
    for (int t = 0; t < N; ++t)
      if (!(rb.d_min(i, t) <= rb.d_nom(i, t) && rb.d_nom(i, t) <= rb.d_max(i, t)))
        throw OrderingError("robust bounds: envelopes must satisfy min <= nom <= max");
  }

  auto fill = [&](const Eigen::MatrixXd& d) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nj, N);
    for (int i = 0; i < nr; ++i) m.row(rb.junction[static_cast<std::size_t>(i)]) += d.row(i);
    return m;
  };
  std::vector<GasScenarioInput> scen(3);
  scen[0] = {"max", fill(rb.d_max), {}, false};
  scen[1] = {"nom", fill(rb.d_nom), {}, true};
  scen[2] = {"min", fill(rb.d_min), {}, false};
  return assemble_gas(net, seg, grid, nlp, opt, std::move(scen));
}

/// J_E of a solution over the billed window, exactly the linear part the
/// assembler prices (tie-breaks excluded).
inline double trade_cost(const GasNetwork& net, const GasLayout& lay, const Eigen::VectorXd& x) {
  double sum = 0;
  for (int t = 0; t < lay.n_billed; ++t) {
    const double tau = t * lay.dt;
    for (int w = 0; w < lay.n_inj; ++w)
      sum += gas_detail::samp(net.injections[static_cast<std::size_t>(w)].price, tau, 0.0) *
             lay.dt * x[lay.w(w, t)];
  }
  return sum;
}

/// Billed compressor energy (J) of one state copy, midpoint mass flow and the
/// same smoothing the NLP uses.
inline double compression_energy(const GasNetwork& net, const GasSegmentation& seg,
                                 const GasLayout& lay, const Eigen::VectorXd& x, int scen = -1,
                                 const GasOptions& opt = {}) {
  if (scen < 0) scen = lay.nominal;
  const double dc2 = opt.mdot_smoothing * opt.mdot_smoothing;
  double sum = 0;
  for (int t = 0; t < lay.n_billed; ++t)
    for (std::size_t c = 0; c < net.compressors.size(); ++c) {
      const auto& cp = net.compressors[c];
      const int node = cp.orientation >= 0 ? seg.node(cp.pipe, 0)
                                           : seg.node(cp.pipe, seg.segments(cp.pipe));
      const double u = net.pipes[static_cast<std::size_t>(cp.pipe)].area * 0.5 *
                       (x[lay.phi(scen, node, t)] + x[lay.phi(scen, node, t + 1)]);
      sum += lay.dt * cp.coeff * std::sqrt(u * u + dc2) *
             (std::pow(x[lay.alpha(static_cast<int>(c), t)], cp.exponent) - 1.0);
    }
  return sum;
}

/// Net midpoint mass flow out of a junction into its pipes during interval t,
/// kg/s. For a slack junction this is the supply its density pin provides
/// (minus any local withdrawals).
inline double net_outflow(const GasNetwork& net, const GasSegmentation& seg,
                          const GasLayout& lay, const Eigen::VectorXd& x, int scen, int junction,
                          int t) {
  double sum = 0;
  for (std::size_t p = 0; p < net.pipes.size(); ++p) {
    const int pi = static_cast<int>(p);
    if (net.pipes[p].from == junction) {
      const int n0 = seg.node(pi, 0);
      sum += net.pipes[p].area * 0.5 * (x[lay.phi(scen, n0, t)] + x[lay.phi(scen, n0, t + 1)]);
    }
    if (net.pipes[p].to == junction) {
      const int nk = seg.node(pi, seg.segments(pi));
      sum -= net.pipes[p].area * 0.5 * (x[lay.phi(scen, nk, t)] + x[lay.phi(scen, nk, t + 1)]);
    }
  }
  return sum;
}

/// Instantaneous pipe inflow absorbed at each non-slack junction, per time
/// point: the point-sampled withdrawal trajectory the state actually carries
/// (the scheduled interval rates, re-collocated). Feeding these to the
/// transient simulator replays the schedule without boundary shocks.
inline Eigen::MatrixXd implied_withdrawals(const GasNetwork& net, const GasSegmentation& seg,
                                           const GasLayout& lay, const Eigen::VectorXd& x,
                                           int scen = -1) {
  if (scen < 0) scen = lay.nominal;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(lay.n_junc, lay.n_points());
  for (std::size_t p = 0; p < net.pipes.size(); ++p) {
    const int pi = static_cast<int>(p);
    const auto& pe = net.pipes[p];
    const int n0 = seg.node(pi, 0), nk = seg.node(pi, seg.segments(pi));
    for (int t = 0; t <= lay.n_steps; ++t) {
      d(pe.from, t) -= pe.area * x[lay.phi(scen, n0, t)];
      d(pe.to, t) += pe.area * x[lay.phi(scen, nk, t)];
    }
  }
  for (std::size_t j = 0; j < net.junctions.size(); ++j)
    if (net.junctions[j].slack) d.row(static_cast<Eigen::Index>(j)).setZero();
  return d;
}

/// Point-sampled trajectories of the gas controls and compressor throughputs,
/// for reporting and evaluation.
struct GasDecision {
  double step_s = 0.0;
  Eigen::MatrixXd alpha;  // n_comp x n_points
  Eigen::MatrixXd mdot;   // n_comp x n_points, kg/s through each compressor
  Eigen::MatrixXd w;      // n_inj x n_points, signed kg/s
};

struct GasCosts {
  double trade = 0.0;               // $, J_E
  double compression_energy = 0.0;  // J, J_C
};

/// Interval controls expanded to time points (a step function whose wrap
/// point repeats interval 0), compressor mass flow read off the state copy.
inline GasDecision decision_from_solution(const GasNetwork& net, const GasSegmentation& seg,
                                          const GasLayout& lay, const Eigen::VectorXd& x,
                                          int scen = -1) {
  if (scen < 0) scen = lay.nominal;
  GasDecision dec;
  dec.step_s = lay.dt;
  const int npts = lay.n_points();
  dec.alpha.resize(lay.n_comp, npts);
  dec.mdot.resize(lay.n_comp, npts);
  dec.w.resize(lay.n_inj, npts);
  for (int t = 0; t < npts; ++t) {
    const int ti = t % lay.n_steps;
    for (int c = 0; c < lay.n_comp; ++c) {
      const auto& cp = net.compressors[static_cast<std::size_t>(c)];
      const int node = cp.orientation >= 0 ? seg.node(cp.pipe, 0)
                                           : seg.node(cp.pipe, seg.segments(cp.pipe));
      dec.alpha(c, t) = x[lay.alpha(c, ti)];
      dec.mdot(c, t) =
          net.pipes[static_cast<std::size_t>(cp.pipe)].area * x[lay.phi(scen, node, t)];
    }
    for (int w = 0; w < lay.n_inj; ++w) dec.w(w, t) = x[lay.w(w, ti)];
  }
  return dec;
}

/// Billing-window objectives of a trajectory: J_E in dollars and J_C in
/// joules, both by the trapezoid rule on the decision's own step.
inline GasCosts gas_objectives(const GasNetwork& net, const GasDecision& dec,
                               const TimeGrid& grid) {
  if (dec.step_s <= 0) throw DomainError("gas_objectives: decision step must be positive");
  const double k = grid.horizon_s / dec.step_s;
  const int nb = static_cast<int>(std::llround(k));
  if (std::abs(k - nb) > 1e-9)
    throw ConfigError("gas_objectives: decision step must divide the billing horizon");
  if (dec.w.cols() < nb + 1 || dec.alpha.cols() < nb + 1 || dec.mdot.cols() < nb + 1)
    throw CoverageError("gas_objectives: trajectory shorter than the billing horizon");

  GasCosts out;
  for (int t = 0; t <= nb; ++t) {
    const double wt = (t == 0 || t == nb) ? 0.5 : 1.0;
    const double tau = t * dec.step_s;
    double fe = 0, fc = 0;
    for (int i = 0; i < dec.w.rows(); ++i)
      fe += gas_detail::samp(net.injections[static_cast<std::size_t>(i)].price, tau, 0.0) *
            dec.w(i, t);
    for (int c = 0; c < dec.alpha.rows(); ++c) {
      const auto& cp = net.compressors[static_cast<std::size_t>(c)];
      fc += cp.coeff * std::abs(dec.mdot(c, t)) *
            (std::pow(dec.alpha(c, t), cp.exponent) - 1.0);
    }
    out.trade += wt * fe * dec.step_s;
    out.compression_energy += wt * fc * dec.step_s;
  }
  return out;
}

}  // namespace gasgrid
