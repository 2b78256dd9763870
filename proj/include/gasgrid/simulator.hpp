#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <vector>

#include "gasgrid/errors.hpp"
#include "gasgrid/network.hpp"
#include "gasgrid/profile.hpp"
#include "gasgrid/segmentation.hpp"

namespace gasgrid {

/// Instantaneous network state on the segmentation's flat node numbering.
struct GasState {
  Eigen::VectorXd rho;   // kg/m^3, per pipe node
  Eigen::VectorXd phi;   // kg/m^2/s, per pipe node
  Eigen::VectorXd jrho;  // kg/m^3, per junction
};

struct SteadyOptions {
  double tol = 1e-12;  // Newton target, max |residual|
  int max_iter = 60;
  double flux_smoothing = 1e-2;  // kg/m^2/s, |phi| smoothing in friction
};

struct SimOptions {
  double newton_tol = 1e-10;
  int newton_max_iter = 25;
  int max_halvings = 4;             // substep ladder 1, 2, 4, ...
  double initial_residual_tol = 1e-6;  // on the algebraic rows at t = 0
  double flux_smoothing = 1e-2;
  // The plain trapezoid rule is not L-stable: at coarse steps its stiff
  // (spatially rough) modes flip sign each step and ring for hours. Shifting
  // the blend to 1/2 + damping * dt drains them geometrically while the
  // extra truncation error stays O(dt^2), so observed convergence holds.
  double damping = 3e-4;    // 1/s
  double damping_cap = 0.2; // blend shift never exceeds this
};

/// Transient simulation output. States live on uniform time points; `supply`
/// and `offtake` are the scheme's own interval quantities: supply row j is
/// nonzero only for slack junctions (and covers that junction's withdrawal),
/// offtake holds the withdrawal each step imposed. Stored mass obeys
/// lp(t+1) - lp(t) = step * sum_j (supply - offtake) exactly.
struct GasTrajectory {
  double step_s = 0.0;
  Eigen::MatrixXd rho;      // n_nodes x (n_steps + 1)
  Eigen::MatrixXd phi;      // n_nodes x (n_steps + 1)
  Eigen::MatrixXd jrho;     // n_junc x (n_steps + 1)
  Eigen::MatrixXd supply;   // n_junc x n_steps, kg/s
  Eigen::MatrixXd offtake;  // n_junc x n_steps, kg/s

  int n_steps() const { return static_cast<int>(rho.cols()) - 1; }
  GasState state_at(int t) const { return {rho.col(t), phi.col(t), jrho.col(t)}; }
};

namespace sim_detail {

/// Fixed geometry of the discretized network plus the unknown layout
/// [rho nodes, phi nodes, junction densities].
struct Geom {
  int n_nodes = 0, n_junc = 0, n_pipes = 0;
  std::vector<int> k, node0;
  std::vector<double> dx, area, a2, kf;  // kf = friction / (2 diameter)
  struct Link {
    int node = -1, junction = -1, comp = -1;  // comp < 0: plain end
  };
  std::vector<Link> links;
  double delta2 = 0.0;

  int nu() const { return 2 * n_nodes + n_junc; }
  int irho(int nd) const { return nd; }
  int iphi(int nd) const { return n_nodes + nd; }
  int ijun(int j) const { return 2 * n_nodes + j; }

  double q(double f) const { return f * std::sqrt(f * f + delta2); }
  double q1(double f) const { return (2 * f * f + delta2) / std::sqrt(f * f + delta2); }
};

inline Geom make_geom(const GasNetwork& net, const GasSegmentation& seg,
                      double flux_smoothing) {
  Geom g;
  g.n_nodes = seg.n_nodes;
  g.n_junc = static_cast<int>(net.junctions.size());
  g.n_pipes = static_cast<int>(net.pipes.size());
  g.delta2 = flux_smoothing * flux_smoothing;
  for (int p = 0; p < g.n_pipes; ++p) {
    const auto& pe = net.pipes[static_cast<std::size_t>(p)];
    g.k.push_back(seg.segments(p));
    g.node0.push_back(seg.node(p, 0));
    g.dx.push_back(seg.dx(p));
    g.area.push_back(pe.area);
    g.a2.push_back(pe.wave_speed * pe.wave_speed);
    g.kf.push_back(pe.friction / (2.0 * pe.diameter));
    const Compressor* cp = net.compressor_on(p);
    int ci = -1;
    if (cp)
      ci = static_cast<int>(cp - net.compressors.data());
    const bool boost_in = cp && cp->orientation >= 0;
    const bool boost_out = cp && cp->orientation < 0;
    g.links.push_back({seg.node(p, 0), pe.from, boost_in ? ci : -1});
    g.links.push_back({seg.node(p, seg.segments(p)), pe.to, boost_out ? ci : -1});
  }

  // every junction must see a slack density through the pipes
  std::vector<char> seen(static_cast<std::size_t>(g.n_junc), 0);
  std::vector<int> queue;
  for (int j = 0; j < g.n_junc; ++j)
    if (net.junctions[static_cast<std::size_t>(j)].slack) {
      seen[static_cast<std::size_t>(j)] = 1;
      queue.push_back(j);
    }
  while (!queue.empty()) {
    const int j = queue.back();
    queue.pop_back();
    for (const auto& pe : net.pipes) {
      const int other = pe.from == j ? pe.to : (pe.to == j ? pe.from : -1);
      if (other >= 0 && !seen[static_cast<std::size_t>(other)]) {
        seen[static_cast<std::size_t>(other)] = 1;
        queue.push_back(other);
      }
    }
  }
  for (int j = 0; j < g.n_junc; ++j)
    if (!seen[static_cast<std::size_t>(j)])
      throw ConfigError("simulator: junction " +
                        net.junctions[static_cast<std::size_t>(j)].id +
                        " is not connected to a slack junction");
  return g;
}

/// Residual and Jacobian of one implicit step (or of the steady problem when
/// dt <= 0). Algebraic rows act on the theta-blend of old and new states;
/// the storage term uses the plain difference. Rows are ordered pipe cells
/// (mass then momentum), pipe-end links, then one row per junction.
inline void residual(const Geom& g, const Eigen::VectorXd& u_new,
                     const Eigen::VectorXd& u_old, double theta, double dt,
                     const Eigen::VectorXd& d_blend, const Eigen::VectorXd& alpha_new,
                     const Eigen::VectorXd& sigma_new, const std::vector<char>& slack,
                     Eigen::VectorXd* F, std::vector<Eigen::Triplet<double>>* T) {
  const auto blend = [&](int i) { return theta * u_new[i] + (1.0 - theta) * u_old[i]; };
  F->setZero(g.nu());
  if (T) T->clear();
  int r = 0;
  for (int p = 0; p < g.n_pipes; ++p) {
    const double inv_dx = 1.0 / g.dx[static_cast<std::size_t>(p)];
    const double a2 = g.a2[static_cast<std::size_t>(p)];
    const double kf = g.kf[static_cast<std::size_t>(p)];
    for (int m = 0; m < g.k[static_cast<std::size_t>(p)]; ++m) {
      const int n0 = g.node0[static_cast<std::size_t>(p)] + m;
      const int ir0 = g.irho(n0), ir1 = g.irho(n0 + 1);
      const int if0 = g.iphi(n0), if1 = g.iphi(n0 + 1);

      double mass = (blend(if1) - blend(if0)) * inv_dx;
      if (dt > 0)
        mass += ((u_new[ir0] + u_new[ir1]) - (u_old[ir0] + u_old[ir1])) / (2.0 * dt);
      (*F)[r] = mass;
      if (T) {
        T->emplace_back(r, if0, -theta * inv_dx);
        T->emplace_back(r, if1, theta * inv_dx);
        if (dt > 0) {
          T->emplace_back(r, ir0, 1.0 / (2.0 * dt));
          T->emplace_back(r, ir1, 1.0 / (2.0 * dt));
        }
      }
      ++r;

      const double rb0 = blend(ir0), rb1 = blend(ir1);
      const double fh = 0.5 * (blend(if0) + blend(if1));
      const double rh = 0.5 * (rb0 + rb1);
      (*F)[r] = a2 * (rb1 - rb0) * inv_dx + kf * g.q(fh) / rh;
      if (T) {
        const double dfric_drho = -theta * kf * g.q(fh) / (2.0 * rh * rh);
        const double dfric_dphi = theta * kf * g.q1(fh) / (2.0 * rh);
        T->emplace_back(r, ir0, -theta * a2 * inv_dx + dfric_drho);
        T->emplace_back(r, ir1, theta * a2 * inv_dx + dfric_drho);
        T->emplace_back(r, if0, dfric_dphi);
        T->emplace_back(r, if1, dfric_dphi);
      }
      ++r;
    }
  }
  for (const auto& ln : g.links) {
    const double fac = ln.comp >= 0 ? alpha_new[ln.comp] : 1.0;
    (*F)[r] = u_new[g.irho(ln.node)] - fac * u_new[g.ijun(ln.junction)];
    if (T) {
      T->emplace_back(r, g.irho(ln.node), 1.0);
      T->emplace_back(r, g.ijun(ln.junction), -fac);
    }
    ++r;
  }
  for (int j = 0; j < g.n_junc; ++j, ++r) {
    if (slack[static_cast<std::size_t>(j)]) {
      (*F)[r] = u_new[g.ijun(j)] - sigma_new[j];
      if (T) T->emplace_back(r, g.ijun(j), 1.0);
      continue;
    }
    double out = d_blend[j];
    for (int p = 0; p < g.n_pipes; ++p) {
      const auto& in_link = g.links[static_cast<std::size_t>(2 * p)];
      const auto& out_link = g.links[static_cast<std::size_t>(2 * p + 1)];
      const double area = g.area[static_cast<std::size_t>(p)];
      if (in_link.junction == j) {
        out += area * blend(g.iphi(in_link.node));
        if (T) T->emplace_back(r, g.iphi(in_link.node), theta * area);
      }
      if (out_link.junction == j) {
        out -= area * blend(g.iphi(out_link.node));
        if (T) T->emplace_back(r, g.iphi(out_link.node), -theta * area);
      }
    }
    (*F)[r] = out;
  }
}

/// Newton on one implicit step (or the steady problem). Plain steps with
/// residual-halving backtracking; false when the tolerance is not met.
inline bool newton_solve(const Geom& g, Eigen::VectorXd* u, const Eigen::VectorXd& u_old,
                         double theta, double dt, const Eigen::VectorXd& d_blend,
                         const Eigen::VectorXd& alpha_new, const Eigen::VectorXd& sigma_new,
                         const std::vector<char>& slack, double tol, int max_iter) {
  Eigen::VectorXd F(g.nu());
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::SparseMatrix<double> J(g.nu(), g.nu());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  residual(g, *u, u_old, theta, dt, d_blend, alpha_new, sigma_new, slack, &F, nullptr);
  double fn = F.cwiseAbs().maxCoeff();
  for (int it = 0; it < max_iter; ++it) {
    if (fn <= tol) return true;
    if (!std::isfinite(fn)) return false;
    residual(g, *u, u_old, theta, dt, d_blend, alpha_new, sigma_new, slack, &F, &trips);
    J.setFromTriplets(trips.begin(), trips.end());
    lu.compute(J);
    if (lu.info() != Eigen::Success) return false;
    const Eigen::VectorXd du = lu.solve(-F);
    double step = 1.0;
    Eigen::VectorXd trial;
    for (int bt = 0; bt < 12; ++bt, step *= 0.5) {
      trial = *u + step * du;
      residual(g, trial, u_old, theta, dt, d_blend, alpha_new, sigma_new, slack, &F, nullptr);
      const double fn_new = F.cwiseAbs().maxCoeff();
      if (std::isfinite(fn_new) && (fn_new < fn || fn_new <= tol)) {
        *u = trial;
        fn = fn_new;
        break;
      }
      if (bt == 11) return false;
    }
  }
  return fn <= tol;
}

inline Eigen::VectorXd pack(const Geom& g, const GasState& s) {
  if (s.rho.size() != g.n_nodes || s.phi.size() != g.n_nodes || s.jrho.size() != g.n_junc)
    throw LayoutError("simulator: state size does not match the segmentation");
  Eigen::VectorXd u(g.nu());
  u.segment(0, g.n_nodes) = s.rho;
  u.segment(g.n_nodes, g.n_nodes) = s.phi;
  u.segment(2 * g.n_nodes, g.n_junc) = s.jrho;
  return u;
}

inline GasState unpack(const Geom& g, const Eigen::VectorXd& u) {
  return {u.segment(0, g.n_nodes), u.segment(g.n_nodes, g.n_nodes),
          u.segment(2 * g.n_nodes, g.n_junc)};
}

inline std::vector<char> slack_mask(const GasNetwork& net) {
  std::vector<char> slack;
  for (const auto& j : net.junctions) slack.push_back(j.slack ? 1 : 0);
  return slack;
}

inline Eigen::VectorXd slack_densities(const GasNetwork& net, double t) {
  Eigen::VectorXd sigma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.junctions.size()));
  for (std::size_t j = 0; j < net.junctions.size(); ++j)
    if (net.junctions[j].slack)
      sigma[static_cast<Eigen::Index>(j)] = sample_profile(net.junctions[j].slack_density, t);
  return sigma;
}

/// Pipe mass flow out of slack junctions during a step, at the same blend
/// the flux rows use, plus the junction's own withdrawal.
inline Eigen::VectorXd blended_supply(const Geom& g, const std::vector<char>& slack,
                                      const Eigen::VectorXd& u_new, const Eigen::VectorXd& u_old,
                                      double theta, const Eigen::VectorXd& d_blend) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(g.n_junc);
  for (int p = 0; p < g.n_pipes; ++p) {
    const auto& in_link = g.links[static_cast<std::size_t>(2 * p)];
    const auto& out_link = g.links[static_cast<std::size_t>(2 * p + 1)];
    const double area = g.area[static_cast<std::size_t>(p)];
    const auto blend = [&](int i) { return theta * u_new[i] + (1.0 - theta) * u_old[i]; };
    if (slack[static_cast<std::size_t>(in_link.junction)])
      s[in_link.junction] += area * blend(g.iphi(in_link.node));
    if (slack[static_cast<std::size_t>(out_link.junction)])
      s[out_link.junction] -= area * blend(g.iphi(out_link.node));
  }
  for (int j = 0; j < g.n_junc; ++j)
    if (slack[static_cast<std::size_t>(j)]) s[j] += d_blend[j];
  return s;
}

}  // namespace sim_detail

/// Largest algebraic residual (momentum, end couplings, slack pins, junction
/// balances) of a state against instantaneous inputs. Differential mass rows
/// are excluded: any smooth state satisfies them through its time derivative.
inline double state_residual(const GasNetwork& net, const GasSegmentation& seg,
                             const GasState& state, const Eigen::VectorXd& withdrawal,
                             const Eigen::VectorXd& alpha, double at_time = 0.0,
                             double flux_smoothing = 1e-2) {
  const auto g = sim_detail::make_geom(net, seg, flux_smoothing);
  const Eigen::VectorXd u = sim_detail::pack(g, state);
  Eigen::VectorXd F(g.nu());
  sim_detail::residual(g, u, u, 1.0, 0.0, withdrawal, alpha,
                       sim_detail::slack_densities(net, at_time), sim_detail::slack_mask(net),
                       &F, nullptr);
  double worst = 0.0;
  int r = 0;
  for (int p = 0; p < g.n_pipes; ++p)
    for (int m = 0; m < g.k[static_cast<std::size_t>(p)]; ++m) {
      ++r;  // mass row skipped
      worst = std::max(worst, std::abs(F[r++]));
    }
  for (; r < g.nu(); ++r) worst = std::max(worst, std::abs(F[r]));
  return worst;
}

/// Steady network state for fixed withdrawals (kg/s, positive consumes) and
/// compressor ratios, with slack densities sampled at `at_time`. Newton from
/// a flat start. Throws NoConvergence when the iteration stalls.
inline GasState steady_state(const GasNetwork& net, const GasSegmentation& seg,
                             const Eigen::VectorXd& withdrawal, const Eigen::VectorXd& alpha,
                             double at_time = 0.0, const SteadyOptions& opt = {}) {
  if (withdrawal.size() != static_cast<Eigen::Index>(net.junctions.size()))
    throw LayoutError("steady_state: withdrawal size must match junctions");
  if (alpha.size() != static_cast<Eigen::Index>(net.compressors.size()))
    throw LayoutError("steady_state: alpha size must match compressors");
  const auto g = sim_detail::make_geom(net, seg, opt.flux_smoothing);
  const auto slack = sim_detail::slack_mask(net);
  const Eigen::VectorXd sigma = sim_detail::slack_densities(net, at_time);

  double fill = 0.0;
  int n_slack = 0;
  for (int j = 0; j < g.n_junc; ++j)
    if (slack[static_cast<std::size_t>(j)]) {
      fill += sigma[j];
      ++n_slack;
    }
  fill /= std::max(1, n_slack);
  Eigen::VectorXd u(g.nu());
  u.segment(0, g.n_nodes).setConstant(fill);
  u.segment(g.n_nodes, g.n_nodes).setZero();
  u.segment(2 * g.n_nodes, g.n_junc).setConstant(fill);

  if (!sim_detail::newton_solve(g, &u, u, 1.0, 0.0, withdrawal, alpha, sigma, slack, opt.tol,
                                opt.max_iter))
    throw NoConvergence("steady_state: Newton did not reach tolerance");
  GasState out = sim_detail::unpack(g, u);
  if (out.rho.minCoeff() <= 0 || out.jrho.minCoeff() <= 0)
    throw NegativeDensity("steady_state: withdrawals drain the network");
  return out;
}

/// Point samples of a coarser uniform series, linearly interpolated. Input
/// columns sit at multiples of from_step; the result has n_to + 1 columns at
/// multiples of to_step. Throws CoverageError when the target grid overruns.
inline Eigen::MatrixXd resample_linear(const Eigen::MatrixXd& points, double from_step,
                                       double to_step, int n_to) {
  if (from_step <= 0 || to_step <= 0)
    throw DomainError("resample_linear: steps must be positive");
  if (points.cols() < 2) throw LayoutError("resample_linear: need at least two columns");
  const int n_from = static_cast<int>(points.cols()) - 1;
  if (n_to * to_step > n_from * from_step + 1e-6 * from_step)
    throw CoverageError("resample_linear: source series ends before the target grid");
  Eigen::MatrixXd out(points.rows(), n_to + 1);
  for (int t = 0; t <= n_to; ++t) {
    const double tau = t * to_step / from_step;
    const int i = std::min(static_cast<int>(tau), n_from - 1);
    const double frac = std::clamp(tau - i, 0.0, 1.0);
    out.col(t) = (1.0 - frac) * points.col(i) + frac * points.col(i + 1);
  }
  return out;
}

/// Implicit transient simulation from a consistent initial state.
///
/// `withdrawal` (n_junc rows) and `alpha` (n_comp rows) give point samples at
/// multiples of step_s; column 0 must agree with the initial state. Each step
/// is the damped trapezoid rule on the optimizer's box scheme; a step whose
/// Newton fails is retried on 2 substeps, then on 4, 8, ... with the fully
/// implicit scheme. When the initial algebraic residual is above the Newton
/// tolerance (a coarse optimizer state, say), the first step also runs fully
/// implicit, projecting the inconsistency out instead of carrying it.
inline GasTrajectory simulate_ibvp(const GasNetwork& net, const GasSegmentation& seg,
                                   const GasState& initial, const Eigen::MatrixXd& withdrawal,
                                   const Eigen::MatrixXd& alpha, double step_s,
                                   const SimOptions& opt = {}) {
  if (step_s <= 0) throw DomainError("simulate_ibvp: step must be positive");
  const int n_steps = static_cast<int>(withdrawal.cols()) - 1;
  if (n_steps < 1) throw LayoutError("simulate_ibvp: need at least one step of inputs");
  if (withdrawal.rows() != static_cast<Eigen::Index>(net.junctions.size()))
    throw LayoutError("simulate_ibvp: withdrawal rows must match junctions");
  if (alpha.rows() != static_cast<Eigen::Index>(net.compressors.size()) ||
      alpha.cols() != withdrawal.cols())
    throw LayoutError("simulate_ibvp: alpha must be n_comp x (n_steps + 1)");

  const auto g = sim_detail::make_geom(net, seg, opt.flux_smoothing);
  const auto slack = sim_detail::slack_mask(net);
  const double init_res = state_residual(net, seg, initial, withdrawal.col(0), alpha.col(0), 0.0,
                                         opt.flux_smoothing);
  if (init_res > opt.initial_residual_tol)
    throw DomainError("simulate_ibvp: initial state residual " + std::to_string(init_res) +
                      " above tolerance");

  GasTrajectory traj;
  traj.step_s = step_s;
  traj.rho.resize(g.n_nodes, n_steps + 1);
  traj.phi.resize(g.n_nodes, n_steps + 1);
  traj.jrho.resize(g.n_junc, n_steps + 1);
  traj.supply = Eigen::MatrixXd::Zero(g.n_junc, n_steps);
  traj.offtake = Eigen::MatrixXd::Zero(g.n_junc, n_steps);
  traj.rho.col(0) = initial.rho;
  traj.phi.col(0) = initial.phi;
  traj.jrho.col(0) = initial.jrho;

  Eigen::VectorXd u_old = sim_detail::pack(g, initial);
  const bool project_first = init_res > 1e3 * opt.newton_tol;

  for (int t = 0; t < n_steps; ++t) {
    const double t0 = t * step_s;
    bool done = false;
    for (int attempt = 0; attempt <= opt.max_halvings && !done; ++attempt) {
      const int pieces = 1 << attempt;
      const double dt = step_s / pieces;
      // damped trapezoid; fully implicit once it has failed twice, and on a
      // first step that must project out initial inconsistency
      double theta = 0.5 + std::min(opt.damping_cap, opt.damping * dt);
      if (attempt >= 2 || (t == 0 && project_first)) theta = 1.0;
      Eigen::VectorXd u = u_old;
      Eigen::VectorXd prev = u_old;
      Eigen::VectorXd supply = Eigen::VectorXd::Zero(g.n_junc);
      Eigen::VectorXd offtake = Eigen::VectorXd::Zero(g.n_junc);
      bool ok = true;
      for (int s = 0; s < pieces && ok; ++s) {
        const double f0 = static_cast<double>(s) / pieces;
        const double f1 = static_cast<double>(s + 1) / pieces;
        const Eigen::VectorXd d0 =
            (1.0 - f0) * withdrawal.col(t) + f0 * withdrawal.col(t + 1);
        const Eigen::VectorXd d1 =
            (1.0 - f1) * withdrawal.col(t) + f1 * withdrawal.col(t + 1);
        const Eigen::VectorXd a1 = (1.0 - f1) * alpha.col(t) + f1 * alpha.col(t + 1);
        const Eigen::VectorXd d_blend = theta * d1 + (1.0 - theta) * d0;
        const Eigen::VectorXd sigma = sim_detail::slack_densities(net, t0 + f1 * step_s);
        prev = u;
        ok = sim_detail::newton_solve(g, &u, prev, theta, dt, d_blend, a1, sigma, slack,
                                      opt.newton_tol, opt.newton_max_iter);
        if (ok) {
          supply += sim_detail::blended_supply(g, slack, u, prev, theta, d_blend) / pieces;
          offtake += d_blend / pieces;
        }
      }
      if (!ok) continue;
      const GasState st = sim_detail::unpack(g, u);
      if (st.rho.minCoeff() <= 0 || st.jrho.minCoeff() <= 0)
        throw NegativeDensity("simulate_ibvp: density crossed zero at step " +
                              std::to_string(t + 1));
      traj.rho.col(t + 1) = st.rho;
      traj.phi.col(t + 1) = st.phi;
      traj.jrho.col(t + 1) = st.jrho;
      traj.supply.col(t) = supply;
      traj.offtake.col(t) = offtake;
      u_old = u;
      done = true;
    }
    if (!done)
      throw NoConvergence("simulate_ibvp: step " + std::to_string(t + 1) +
                          " failed after substep ladder");
  }
  return traj;
}

}  // namespace gasgrid
