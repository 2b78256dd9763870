#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gasgrid/errors.hpp"
#include "gasgrid/gaussian.hpp"
#include "gasgrid/network.hpp"
#include "gasgrid/nlp.hpp"
#include "gasgrid/profile.hpp"
#include "gasgrid/ptdf.hpp"
#include "gasgrid/time_grid.hpp"

namespace gasgrid {

struct CcopfOptions {
  bool chance_lines = true;  // false: plain thermal limits (z = 0)
  bool fix_policy = false;   // freeze r and beta at the given per-generator values
  Eigen::VectorXd fixed_rup, fixed_rdn, fixed_beta;
};

/// Variable layout of one chance-constrained OPF: four quantity-major slabs,
/// each indexed step-major (off + t*n_gen + g). Steps cover the extended
/// horizon; only the first n_billed steps enter the objective.
struct PowerLayout {
  int n_gen = 0, n_bus = 0, n_line = 0;
  int n_steps = 0, n_billed = 0;
  double dt = 0.0;
  int off_p = 0, off_rup = 0, off_rdn = 0, off_beta = 0;
  std::vector<double> q_omega;     // W, per step: Phi^-1(1-eps_gen) sqrt(1' Sigma 1)
  std::vector<double> load_total;  // W, per step
  Eigen::MatrixXd loads;           // n_bus x n_steps, W

  int p(int g, int t) const { return off_p + t * n_gen + g; }
  int rup(int g, int t) const { return off_rup + t * n_gen + g; }
  int rdn(int g, int t) const { return off_rdn + t * n_gen + g; }
  int beta(int g, int t) const { return off_beta + t * n_gen + g; }
};

struct PowerAssembly {
  PowerLayout layout;
  ObjTerm objective;  // J_P in $ over the billed window
  PtdfMatrix ptdf;
};

namespace power_detail {

// Per-line chance data reduced to scalars: with kappa = m' beta_bus and
// v = m - kappa 1, the flow std is sqrt(v' Sigma v) = sqrt(A - 2 kappa B +
// kappa^2 C). Smoothed by delta so rows stay differentiable at s = 0.
struct LineCc {
  PowerLayout lay;
  Eigen::MatrixXd mg;    // n_line x n_gen: M(l, bus(g))
  Eigen::MatrixXd f0;    // n_line x n_steps: -M h(t), the load part of the flow
  Eigen::MatrixXd a, b;  // n_line x n_steps: m' Sigma m, 1' Sigma m
  Eigen::VectorXd c;     // n_steps: 1' Sigma 1
  Eigen::VectorXd delta;
  double z = 0.0;

  int row(int t, int l, int sign) const { return t * 2 * lay.n_line + 2 * l + sign; }

  size_t hess_size() const {
    return static_cast<size_t>(2) * lay.n_line * lay.n_steps * lay.n_gen * (lay.n_gen + 1) / 2;
  }

  // s, T = 1' Sigma v, and kappa at (l, t) for the beta slice of x.
  void stats(const Eigen::VectorXd& x, int l, int t, double& s, double& tt) const {
    double kappa = 0;
    for (int g = 0; g < lay.n_gen; ++g) kappa += mg(l, g) * x[lay.beta(g, t)];
    const double q = a(l, t) - 2.0 * kappa * b(l, t) + kappa * kappa * c[t];
    s = std::sqrt(std::max(q, 0.0) + delta[t] * delta[t]);
    tt = b(l, t) - kappa * c[t];
  }
};

}  // namespace power_detail

/// Appends the chance-constrained multi-period OPF to `nlp`: policy variables
/// (p, r+, r-, beta) per generator and step, the balance / cap / reserve /
/// ramp / line blocks, and returns the layout plus the power-cost objective
/// term. Throws InfeasibleBoundsError when total capacity cannot cover the
/// load at some step.
inline PowerAssembly assemble_ccopf(const PowerNetwork& net, const TimeGrid& grid,
                                    const Uncertainty& u, SparseNLP& nlp,
                                    const CcopfOptions& opt = {}) {
  grid.validate();
  const int ng = static_cast<int>(net.generators.size());
  const int nb = static_cast<int>(net.buses.size());
  const int nl = static_cast<int>(net.lines.size());
  const int ns = grid.n_opt();
  if (ng == 0) throw DomainError("ccopf: network has no generators");

  PowerAssembly out;
  PowerLayout& lay = out.layout;
  lay.n_gen = ng;
  lay.n_bus = nb;
  lay.n_line = nl;
  lay.n_steps = ns;
  lay.n_billed = grid.n_opt_billed();
  lay.dt = static_cast<double>(grid.opt_step_s);

  const int base = nlp.n();
  lay.off_p = base;
  lay.off_rup = base + ng * ns;
  lay.off_rdn = base + 2 * ng * ns;
  lay.off_beta = base + 3 * ng * ns;
  const int nv = base + 4 * ng * ns;

  lay.loads.resize(nb, ns);
  lay.load_total.resize(ns);
  lay.q_omega.resize(ns);
  double cap_up = 0, cap_dn = 0;
  for (const auto& g : net.generators) {
    cap_up += g.pmax;
    cap_dn += g.pmin;
  }
  std::vector<Eigen::MatrixXd> sigma(ns);
  for (int t = 0; t < ns; ++t) {
    double total = 0;
    for (int bidx = 0; bidx < nb; ++bidx) {
      lay.loads(bidx, t) = sample_profile(net.buses[bidx].load, grid.t_opt(t));
      total += lay.loads(bidx, t);
    }
    lay.load_total[t] = total;
    if (cap_up < total)
      throw InfeasibleBoundsError("ccopf: total generation capacity below load at step " +
                                  std::to_string(t));
    if (cap_dn > total)
      throw InfeasibleBoundsError("ccopf: total minimum generation above load at step " +
                                  std::to_string(t));
    sigma[t] = u.cov_at(net, grid.t_opt(t));
    lay.q_omega[t] = omega_quantile(sigma[t], u.eps_gen);
  }

  if (opt.fix_policy) {
    if (opt.fixed_rup.size() != ng || opt.fixed_rdn.size() != ng || opt.fixed_beta.size() != ng)
      throw LayoutError("ccopf: fixed policy vectors must have one entry per generator");
  }

  // Variables. p is left free (the cap rows bound it); r and beta carry
  // simple bounds so the cap rows stay one-sided.
  nlp.x0.conservativeResize(nv);
  nlp.xl.conservativeResize(nv);
  nlp.xu.conservativeResize(nv);
  if (nlp.var_scale.size() != base) nlp.var_scale.conservativeResize(base);
  nlp.var_scale.conservativeResize(nv);
  nlp.names.resize(static_cast<size_t>(nv));
  double beta0_sum = 0;
  for (const auto& g : net.generators) beta0_sum += g.pmax;
  for (int t = 0; t < ns; ++t) {
    for (int g = 0; g < ng; ++g) {
      const auto& gen = net.generators[g];
      const double share = beta0_sum > 0 ? gen.pmax / beta0_sum : 1.0 / ng;
      const double b0 = opt.fix_policy ? opt.fixed_beta[g] : share;
      const double r0u = opt.fix_policy ? opt.fixed_rup[g]
                                        : std::min(gen.r_up_max, lay.q_omega[t] * b0 + 1.0);
      const double r0d = opt.fix_policy ? opt.fixed_rdn[g]
                                        : std::min(gen.r_dn_max, lay.q_omega[t] * b0 + 1.0);

      const int ip = lay.p(g, t);
      nlp.x0[ip] = std::clamp(lay.load_total[t] * share, gen.pmin, gen.pmax);
      nlp.xl[ip] = -kInf;
      nlp.xu[ip] = kInf;
      nlp.var_scale[ip] = 1e6;
      nlp.names[ip] = "p[" + gen.id + "," + std::to_string(t) + "]";

      const int iu = lay.rup(g, t);
      nlp.x0[iu] = r0u;
      nlp.xl[iu] = 0.0;
      nlp.xu[iu] = kInf;
      if (opt.fix_policy) nlp.xl[iu] = nlp.xu[iu] = opt.fixed_rup[g];
      if (!opt.fix_policy && gen.r_up_max == 0.0) nlp.xu[iu] = 0.0;
      nlp.var_scale[iu] = 1e6;
      nlp.names[iu] = "r+[" + gen.id + "," + std::to_string(t) + "]";

      const int id = lay.rdn(g, t);
      nlp.x0[id] = r0d;
      nlp.xl[id] = 0.0;
      nlp.xu[id] = kInf;
      if (opt.fix_policy) nlp.xl[id] = nlp.xu[id] = opt.fixed_rdn[g];
      if (!opt.fix_policy && gen.r_dn_max == 0.0) nlp.xu[id] = 0.0;
      nlp.var_scale[id] = 1e6;
      nlp.names[id] = "r-[" + gen.id + "," + std::to_string(t) + "]";

      // No upper bound on beta: it is implied by the normalization row and
      // beta >= 0, and stating it again degrades the corner geometry.
      const int ib = lay.beta(g, t);
      nlp.x0[ib] = b0;
      nlp.xl[ib] = 0.0;
      nlp.xu[ib] = kInf;
      if (opt.fix_policy) nlp.xl[ib] = nlp.xu[ib] = opt.fixed_beta[g];
      nlp.var_scale[ib] = 1.0;
      nlp.names[ib] = "beta[" + gen.id + "," + std::to_string(t) + "]";
    }
  }

  const auto lay_sp = std::make_shared<PowerLayout>(lay);

  // Balance (one equality per step): sum_g p = total load.
  {
    auto& blk = nlp.add_block("balance", ns);
    for (int t = 0; t < ns; ++t) {
      blk.cl[t] = blk.cu[t] = lay.load_total[t];
      for (int g = 0; g < ng; ++g) blk.jac_structure.emplace_back(t, lay.p(g, t));
    }
    blk.row_scale = Eigen::VectorXd::Constant(ns, 1e-6);
    blk.eval = [lay_sp](const Eigen::VectorXd& x) {
      Eigen::VectorXd c(lay_sp->n_steps);
      for (int t = 0; t < lay_sp->n_steps; ++t) {
        double s = 0;
        for (int g = 0; g < lay_sp->n_gen; ++g) s += x[lay_sp->p(g, t)];
        c[t] = s;
      }
      return c;
    };
    const size_t nz = blk.jac_structure.size();
    blk.jac = [nz](const Eigen::VectorXd&) { return std::vector<double>(nz, 1.0); };
  }

  // Policy normalization (one equality per step): sum_g beta = 1.
  {
    auto& blk = nlp.add_block("beta_norm", ns);
    for (int t = 0; t < ns; ++t) {
      blk.cl[t] = blk.cu[t] = 1.0;
      for (int g = 0; g < ng; ++g) blk.jac_structure.emplace_back(t, lay.beta(g, t));
    }
    blk.eval = [lay_sp](const Eigen::VectorXd& x) {
      Eigen::VectorXd c(lay_sp->n_steps);
      for (int t = 0; t < lay_sp->n_steps; ++t) {
        double s = 0;
        for (int g = 0; g < lay_sp->n_gen; ++g) s += x[lay_sp->beta(g, t)];
        c[t] = s;
      }
      return c;
    };
    const size_t nz = blk.jac_structure.size();
    blk.jac = [nz](const Eigen::VectorXd&) { return std::vector<double>(nz, 1.0); };
  }

  // Helper for the four per-generator linear row families.
  auto gen_rows = [&](const std::string& name, double sign_r, int off_r, bool with_p,
                      auto range_of, auto coeff_beta) {
    auto& blk = nlp.add_block(name, ng * ns);
    blk.row_scale = Eigen::VectorXd::Constant(ng * ns, 1e-6);
    std::vector<double> vals;
    for (int t = 0; t < ns; ++t) {
      for (int g = 0; g < ng; ++g) {
        const int r = t * ng + g;
        range_of(g, t, blk.cl[r], blk.cu[r]);
        if (with_p) {
          blk.jac_structure.emplace_back(r, lay.p(g, t));
          vals.push_back(1.0);
        }
        blk.jac_structure.emplace_back(r, off_r + t * ng + g);
        vals.push_back(sign_r);
        const double cb = coeff_beta(g, t);
        if (cb != 0.0) {
          blk.jac_structure.emplace_back(r, lay.beta(g, t));
          vals.push_back(cb);
        }
      }
    }
    auto coeffs = std::make_shared<std::vector<double>>(std::move(vals));
    auto structure = std::make_shared<std::vector<std::pair<int, int>>>(blk.jac_structure);
    blk.eval = [lay_sp, coeffs, structure](const Eigen::VectorXd& x) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(lay_sp->n_gen * lay_sp->n_steps);
      for (size_t k = 0; k < structure->size(); ++k)
        c[(*structure)[k].first] += (*coeffs)[k] * x[(*structure)[k].second];
      return c;
    };
    blk.jac = [coeffs](const Eigen::VectorXd&) { return *coeffs; };
  };

  // Generation caps: p + r+ <= pmax and p - r- >= pmin.
  gen_rows(
      "gen_cap_up", 1.0, lay.off_rup, true,
      [&](int g, int, double& lo, double& hi) {
        lo = -kInf;
        hi = net.generators[g].pmax;
      },
      [](int, int) { return 0.0; });
  gen_rows(
      "gen_cap_dn", -1.0, lay.off_rdn, true,
      [&](int g, int, double& lo, double& hi) {
        lo = net.generators[g].pmin;
        hi = kInf;
      },
      [](int, int) { return 0.0; });

  // Reserve adequacy, the reformulated chance constraint: r >= beta * Q(t).
  gen_rows(
      "reserve_up", 1.0, lay.off_rup, false,
      [&](int, int, double& lo, double& hi) {
        lo = 0.0;
        hi = kInf;
      },
      [&](int, int t) { return -lay.q_omega[t]; });
  gen_rows(
      "reserve_dn", 1.0, lay.off_rdn, false,
      [&](int, int, double& lo, double& hi) {
        lo = 0.0;
        hi = kInf;
      },
      [&](int, int t) { return -lay.q_omega[t]; });

  // Procurement caps: r <= rmax (the zero side lives on the variable bound).
  gen_rows(
      "reserve_cap_up", 1.0, lay.off_rup, false,
      [&](int g, int, double& lo, double& hi) {
        lo = -kInf;
        hi = net.generators[g].r_up_max;
      },
      [](int, int) { return 0.0; });
  gen_rows(
      "reserve_cap_dn", 1.0, lay.off_rdn, false,
      [&](int g, int, double& lo, double& hi) {
        lo = -kInf;
        hi = net.generators[g].r_dn_max;
      },
      [](int, int) { return 0.0; });

  // Ramping between consecutive steps: |p(t+1) - p(t)| <= ramp.
  if (ns > 1) {
    auto& blk = nlp.add_block("ramp", ng * (ns - 1));
    blk.row_scale = Eigen::VectorXd::Constant(ng * (ns - 1), 1e-6);
    for (int t = 0; t + 1 < ns; ++t) {
      for (int g = 0; g < ng; ++g) {
        const int r = t * ng + g;
        blk.cl[r] = -net.generators[g].ramp;
        blk.cu[r] = net.generators[g].ramp;
        blk.jac_structure.emplace_back(r, lay.p(g, t + 1));
        blk.jac_structure.emplace_back(r, lay.p(g, t));
      }
    }
    blk.eval = [lay_sp](const Eigen::VectorXd& x) {
      Eigen::VectorXd c(lay_sp->n_gen * (lay_sp->n_steps - 1));
      for (int t = 0; t + 1 < lay_sp->n_steps; ++t)
        for (int g = 0; g < lay_sp->n_gen; ++g)
          c[t * lay_sp->n_gen + g] = x[lay_sp->p(g, t + 1)] - x[lay_sp->p(g, t)];
      return c;
    };
    const size_t nz = blk.jac_structure.size();
    blk.jac = [nz](const Eigen::VectorXd&) {
      std::vector<double> v(nz);
      for (size_t k = 0; k < v.size(); ++k) v[k] = (k % 2 == 0) ? 1.0 : -1.0;
      return v;
    };
  }

  // Line chance constraints, two one-sided rows per line and step:
  //   flow + z s(beta) <= limit   and   flow - z s(beta) >= -limit.
  out.ptdf = compute_ptdf(net);
  if (nl > 0) {
    auto data = std::make_shared<power_detail::LineCc>();
    data->lay = lay;
    data->z = opt.chance_lines ? inv_std_normal(1.0 - u.eps_line) : 0.0;
    data->mg.resize(nl, ng);
    for (int l = 0; l < nl; ++l)
      for (int g = 0; g < ng; ++g) data->mg(l, g) = out.ptdf.m(l, net.generators[g].bus);
    data->f0 = -out.ptdf.m * lay.loads;
    data->a.resize(nl, ns);
    data->b.resize(nl, ns);
    data->c.resize(ns);
    data->delta.resize(ns);
    for (int t = 0; t < ns; ++t) {
      const Eigen::VectorXd s1 = sigma[t] * Eigen::VectorXd::Ones(nb);
      data->c[t] = s1.sum();
      data->delta[t] = 1e-6 * std::max(1.0, std::sqrt(std::max(data->c[t], 0.0)));
      for (int l = 0; l < nl; ++l) {
        const Eigen::VectorXd m = out.ptdf.m.row(l).transpose();
        data->a(l, t) = m.dot(sigma[t] * m);
        data->b(l, t) = s1.dot(m);
      }
    }

    auto& blk = nlp.add_block("line_cc", 2 * nl * ns);
    blk.row_scale = Eigen::VectorXd::Constant(2 * nl * ns, 1e-6);
    for (int t = 0; t < ns; ++t) {
      for (int l = 0; l < nl; ++l) {
        const double lim = net.lines[l].limit;
        const int rp = data->row(t, l, 0);
        const int rm = data->row(t, l, 1);
        blk.cl[rp] = -kInf;
        blk.cu[rp] = lim;
        blk.cl[rm] = -lim;
        blk.cu[rm] = kInf;
        for (int sign = 0; sign < 2; ++sign) {
          const int r = data->row(t, l, sign);
          for (int g = 0; g < ng; ++g) blk.jac_structure.emplace_back(r, lay.p(g, t));
          for (int g = 0; g < ng; ++g) blk.jac_structure.emplace_back(r, lay.beta(g, t));
          for (int g = 0; g < ng; ++g)
            for (int h = 0; h <= g; ++h)
              blk.hess_structure.emplace_back(std::max(lay.beta(g, t), lay.beta(h, t)),
                                              std::min(lay.beta(g, t), lay.beta(h, t)));
        }
      }
    }
    blk.eval = [data](const Eigen::VectorXd& x) {
      const auto& L = data->lay;
      Eigen::VectorXd c(2 * L.n_line * L.n_steps);
      for (int t = 0; t < L.n_steps; ++t) {
        for (int l = 0; l < L.n_line; ++l) {
          double flow = data->f0(l, t);
          for (int g = 0; g < L.n_gen; ++g) flow += data->mg(l, g) * x[L.p(g, t)];
          double s, tt;
          data->stats(x, l, t, s, tt);
          c[data->row(t, l, 0)] = flow + data->z * s;
          c[data->row(t, l, 1)] = flow - data->z * s;
        }
      }
      return c;
    };
    blk.jac = [data](const Eigen::VectorXd& x) {
      const auto& L = data->lay;
      std::vector<double> v;
      v.reserve(static_cast<size_t>(4) * L.n_line * L.n_steps * L.n_gen);
      for (int t = 0; t < L.n_steps; ++t) {
        for (int l = 0; l < L.n_line; ++l) {
          double s, tt;
          data->stats(x, l, t, s, tt);
          for (int sign = 0; sign < 2; ++sign) {
            const double zs = (sign == 0 ? data->z : -data->z);
            for (int g = 0; g < L.n_gen; ++g) v.push_back(data->mg(l, g));
            for (int g = 0; g < L.n_gen; ++g) v.push_back(-zs * data->mg(l, g) * tt / s);
          }
        }
      }
      return v;
    };
    blk.hess = [data](const Eigen::VectorXd& x, const Eigen::VectorXd& lam) {
      const auto& L = data->lay;
      std::vector<double> v;
      v.reserve(data->hess_size());
      for (int t = 0; t < L.n_steps; ++t) {
        for (int l = 0; l < L.n_line; ++l) {
          double s, tt;
          data->stats(x, l, t, s, tt);
          const double curv = data->c[t] / s - tt * tt / (s * s * s);
          for (int sign = 0; sign < 2; ++sign) {
            const double w = lam[data->row(t, l, sign)] * (sign == 0 ? data->z : -data->z) * curv;
            for (int g = 0; g < L.n_gen; ++g)
              for (int h = 0; h <= g; ++h) v.push_back(w * data->mg(l, g) * data->mg(l, h));
          }
        }
      }
      return v;
    };
  }

  // J_P: energy plus reserve procurement over the billed window, dt-weighted.
  std::vector<std::pair<int, double>> coeffs;
  for (int t = 0; t < lay.n_billed; ++t) {
    for (int g = 0; g < ng; ++g) {
      const auto& gen = net.generators[g];
      if (gen.cost_energy != 0.0)
        coeffs.emplace_back(lay.p(g, t), gen.cost_energy * lay.dt);
      if (gen.cost_reserve != 0.0) {
        coeffs.emplace_back(lay.rup(g, t), gen.cost_reserve * lay.dt);
        coeffs.emplace_back(lay.rdn(g, t), gen.cost_reserve * lay.dt);
      }
    }
  }

  // Steps past the billed window are costless, which leaves their variables
  // without any curvature for the barrier solver to lean on: the Newton step
  // then blows up along the costless subspace and the line search crawls. A
  // faint quadratic around fixed references (the x0 heuristics) restores
  // curvature there. References are constants, so nothing couples back into
  // the billed window, and the weights are small enough that the pull only
  // tie-breaks otherwise indifferent extension dispatch.
  struct Pull {
    int i;
    double ref, w;
  };
  std::vector<Pull> pulls;
  for (int t = lay.n_billed; t < ns; ++t) {
    for (int g = 0; g < ng; ++g) {
      const auto& gen = net.generators[g];
      const double share = beta0_sum > 0 ? gen.pmax / beta0_sum : 1.0 / ng;
      pulls.push_back({lay.p(g, t), std::clamp(lay.load_total[t] * share, gen.pmin, gen.pmax),
                       1e-14});
      if (!opt.fix_policy) {
        pulls.push_back({lay.rup(g, t), 0.0, 1e-14});
        pulls.push_back({lay.rdn(g, t), 0.0, 1e-14});
        pulls.push_back({lay.beta(g, t), share, 5e-3});
      }
    }
  }

  auto cf = std::make_shared<std::vector<std::pair<int, double>>>(std::move(coeffs));
  auto pl = std::make_shared<std::vector<Pull>>(std::move(pulls));
  out.objective.f = [cf, pl](const Eigen::VectorXd& x) {
    double s = 0;
    for (const auto& [i, c] : *cf) s += c * x[i];
    for (const auto& q : *pl) s += q.w * (x[q.i] - q.ref) * (x[q.i] - q.ref);
    return s;
  };
  out.objective.add_grad = [cf, pl](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    for (const auto& [i, c] : *cf) g[i] += c;
    for (const auto& q : *pl) g[q.i] += 2.0 * q.w * (x[q.i] - q.ref);
  };
  if (!pl->empty()) {
    for (const auto& q : *pl) out.objective.hess_structure.emplace_back(q.i, q.i);
    out.objective.hess = [pl](const Eigen::VectorXd&) {
      std::vector<double> v;
      v.reserve(pl->size());
      for (const auto& q : *pl) v.push_back(2.0 * q.w);
      return v;
    };
  }
  return out;
}

/// J_P of a solution: the billed-window energy and reserve cost, exactly the
/// linear part the assembler prices (the extension tie-break excluded).
inline double billed_cost(const PowerNetwork& net, const PowerLayout& lay,
                          const Eigen::VectorXd& x) {
  double s = 0;
  for (int t = 0; t < lay.n_billed; ++t) {
    for (int g = 0; g < lay.n_gen; ++g) {
      const auto& gen = net.generators[g];
      s += gen.cost_energy * lay.dt * x[lay.p(g, t)];
      s += gen.cost_reserve * lay.dt * (x[lay.rup(g, t)] + x[lay.rdn(g, t)]);
    }
  }
  return s;
}

/// Evaluates the realized policy p_tilde = p - beta * sum(omega) for one step
/// slice; used by tests and the Monte Carlo layer.
inline Eigen::VectorXd realize_policy(const PowerLayout& lay, const Eigen::VectorXd& x, int t,
                                      double omega_total) {
  Eigen::VectorXd p(lay.n_gen);
  for (int g = 0; g < lay.n_gen; ++g)
    p[g] = x[lay.p(g, t)] - x[lay.beta(g, t)] * omega_total;
  return p;
}

}  // namespace gasgrid
