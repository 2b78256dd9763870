#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "gasgrid/nlp.hpp"

namespace gasgrid {
namespace ipm_detail {

// Primal-dual interior point on the slack-augmented form
//   min f(x)  s.t.  c(x) = 0,  zl <= z <= zu,  z = (x_active, slacks).
// Monotone log-barrier (mu shrink 0.2), fraction-to-boundary 0.995, damped
// Newton with an l1 merit line search, inertia-corrected LDL' KKT solves, and
// Gauss-Newton feasibility restoration on line-search failure.
class Solver {
 public:
  Solver(const SparseNLP& nlp, const SolveOptions& opt) : nlp_(nlp), opt_(opt) {
    nlp.validate_layout();
    build_layout();
  }

  SolveResult run() {
    SolveResult res;
    init_point();
    if (!eval_all()) {
      res.status = SolveStatus::NumericalFailure;
      finalize(res);
      return res;
    }
    seed_bound_duals_from_prior();
    init_duals();
    double mu = opt_.mu0;
    if (opt_.adaptive_mu0) {
      // Near a good warm start the KKT error e0 is small; e0^2 sends the
      // barrier straight toward the floor so convergence stays superlinear.
      const double e0 = std::max(dual_residual_norm(), (mc_ ? chat_.cwiseAbs().maxCoeff() : 0.0));
      mu = std::min(opt_.mu0, std::max(0.1 * std::min(e0, e0 * e0), 0.1 * opt_.tol_comp));
    }
    fill_default_bound_duals(mu);

    double delta_last = 0.0;
    double delta_floor = 0.0;
    double dual_reg = opt_.delta_d;
    double nu_pen = 1.0;
    int restorations = 0;
    double theta_prev = kInf;
    int stall = 0;

    for (int iter = 0; iter < opt_.max_iter; ++iter) {
      // Global convergence at mu -> 0.
      const double sd = dual_scaling();
      const double rd = dual_residual_norm() / sd;
      const double pf = mc_ ? chat_.cwiseAbs().maxCoeff() : 0.0;
      const double cp = comp_norm(0.0) / sd;
      if (rd <= opt_.tol_kkt && pf <= opt_.tol_feas && cp <= opt_.tol_comp) {
        res.status = SolveStatus::Optimal;
        res.iterations = iter;
        res.kkt_stationarity = rd;
        res.kkt_feasibility = pf;
        res.kkt_complementarity = cp;
        finalize(res);
        return res;
      }
      // Barrier update once the mu-subproblem is solved well enough.
      while (mu > 0.1 * opt_.tol_comp &&
             std::max({rd, pf, comp_norm(mu) / sd}) <= 10.0 * mu)
        mu = std::max(mu * opt_.mu_shrink, 0.1 * opt_.tol_comp);

      // Let the damping floor fade once healthy steps resume.
      delta_floor *= 0.1;
      if (delta_floor < 1e-12) delta_floor = 0.0;

      // Newton direction with two layers of correction. Wrong inertia bumps
      // delta_p until the factorization is usable. A direction the line
      // search then rejects, or accepts only a sliver of, bumps delta_floor
      // and is recomputed: that signature means the barrier contributes
      // almost no curvature along a subspace the objective does not price,
      // so the pure Newton step overshoots until the nonlinear rows veto it,
      // and without re-damping the iteration crawls into restoration.
      Eigen::VectorXd dz, dy, dvl, dvu;
      double alpha = 0.0, a_dual = 1.0, delta_p = 0.0;
      double merit0 = 0.0, merit_new = 0.0;
      bool accepted = false;
      int ftb_arg = -1;
      const Eigen::VectorXd z_save = z_;
      for (int damp = 0; damp < 5 && !accepted; ++damp) {
        if (damp > 0) {
          delta_floor = std::min(std::max(1e-6, 100.0 * delta_floor), 1.0);
          z_ = z_save;
          if (!eval_all()) break;
        }
        delta_p = delta_floor;
        double delta_d = dual_reg;
        bool factored = false;
        Eigen::VectorXd sol;
        for (int attempt = 0; attempt < 40 && !factored; ++attempt) {
          assemble_kkt(mu, delta_p, delta_d);
          if (!factorize_ok()) {
            delta_p = (delta_p == 0.0)
                          ? std::max(1e-8, delta_last / 3.0)
                          : delta_p * 10.0;
            if (delta_p > 1e40) {
              res.status = SolveStatus::NumericalFailure;
              res.iterations = iter;
              finalize(res);
              return res;
            }
            continue;
          }
          Eigen::VectorXd rhs(nz_ + mc_);
          rhs.head(nz_) = -barrier_grad(mu);
          if (mc_) rhs.tail(mc_) = -chat_;
          sol = ldlt_.solve(rhs);
          // Dual drift guard. Linearly dependent constraint rows leave the
          // KKT matrix singular along [0; u] with u'J = 0, and the solve
          // returns a dual step ~ residual/delta_d along u. Left unchecked
          // the l1 penalty weight chases those multipliers and the line
          // search rejects every step; stiffer dual regularization bounds
          // them at the cost of a tiny, self-correcting feasibility bias.
          // The threshold is absolute in scaled space on purpose: once a
          // drifting step has been accepted, any cap relative to ||y|| has
          // already been inflated past usefulness.
          if (mc_ && delta_d < 1e-5 &&
              sol.tail(mc_).cwiseAbs().maxCoeff() > 1e4) {
            delta_d = std::min(1e-5, delta_d * 100.0);
            dual_reg = delta_d;
            continue;
          }
          factored = true;
        }
        if (!factored) {
          res.status = SolveStatus::NumericalFailure;
          res.iterations = iter;
          finalize(res);
          return res;
        }
        if (delta_p > 0.0) delta_last = delta_p;

        dz = sol.head(nz_);
        dy = mc_ ? Eigen::VectorXd(-sol.tail(mc_)) : Eigen::VectorXd();

        // Bound-dual steps.
        dvl = Eigen::VectorXd::Zero(nz_);
        dvu = Eigen::VectorXd::Zero(nz_);
        for (int i = 0; i < nz_; ++i) {
          if (has_lo_[i]) {
            const double d = z_[i] - zl_[i];
            dvl[i] = mu / d - vl_[i] - vl_[i] / d * dz[i];
          }
          if (has_up_[i]) {
            const double d = zu_[i] - z_[i];
            dvu[i] = mu / d - vu_[i] + vu_[i] / d * dz[i];
          }
        }

        // Fraction-to-boundary limits.
        const double tau = opt_.tau;
        double a_primal = 1.0;
        a_dual = 1.0;
        ftb_arg = -1;
        for (int i = 0; i < nz_; ++i) {
          if (has_lo_[i]) {
            if (dz[i] < 0 && -tau * (z_[i] - zl_[i]) / dz[i] < a_primal) {
              a_primal = -tau * (z_[i] - zl_[i]) / dz[i];
              ftb_arg = i;
            }
            if (dvl[i] < 0) a_dual = std::min(a_dual, -tau * vl_[i] / dvl[i]);
          }
          if (has_up_[i]) {
            if (dz[i] > 0 && tau * (zu_[i] - z_[i]) / dz[i] < a_primal) {
              a_primal = tau * (zu_[i] - z_[i]) / dz[i];
              ftb_arg = i;
            }
            if (dvu[i] < 0) a_dual = std::min(a_dual, -tau * vu_[i] / dvu[i]);
          }
        }

        // l1 merit line search.
        if (mc_) {
          const double need = dy.size() ? (y_ + dy).cwiseAbs().maxCoeff() : 0.0;
          nu_pen = std::max(nu_pen, 1.1 * need + 1e-4);
        }
        const double theta0 = mc_ ? chat_.cwiseAbs().sum() : 0.0;
        merit0 = fhat_ + barrier_term(mu) + nu_pen * theta0;
        const double merit0_f = fhat_, merit0_bar = barrier_term(mu);
        double ddir = barrier_grad(mu).dot(dz) - nu_pen * theta0;
        if (ddir > 0) ddir = 0;

        alpha = a_primal;
        accepted = false;
        merit_new = merit0;
        bool soc_tried = false;
        const bool ls_debug = opt_.log && std::getenv("GASGRID_IPM_DEBUG");
        for (int ls = 0; ls < 50; ++ls) {
          z_ = z_save + alpha * dz;
          if (eval_all()) {
            const double th = mc_ ? chat_.cwiseAbs().sum() : 0.0;
            merit_new = fhat_ + barrier_term(mu) + nu_pen * th;
            if (ls_debug && ls < 4) {
              char lsline[160];
              std::snprintf(lsline, sizeof lsline,
                            "  ls a=%.2e dmerit=%.4e need<=%.4e (df=%.3e dbar=%.3e dpen=%.3e)",
                            alpha, merit_new - merit0, 1e-4 * alpha * ddir,
                            fhat_ - merit0_f, barrier_term(mu) - merit0_bar,
                            nu_pen * (th - theta0));
              opt_.log(lsline);
            }
            if (std::isfinite(merit_new) &&
                merit_new <= merit0 + 1e-4 * alpha * ddir + 1e-12 * (1 + std::abs(merit0))) {
              accepted = true;
              break;
            }
            // Second-order correction: when the largest trial is vetoed by
            // curvature of the constraint manifold (feasibility got worse),
            // correct it with a Newton step on c alone, reusing the current
            // KKT factorization. Cures the Maratos stall where every full
            // step is rejected and the iteration crawls at a fixed fraction.
            if (!soc_tried && ls == 0 && mc_ && th > theta0) {
              soc_tried = true;
              Eigen::VectorXd rhs2 = Eigen::VectorXd::Zero(nz_ + mc_);
              rhs2.tail(mc_) = -chat_;
              const Eigen::VectorXd dsoc = ldlt_.solve(rhs2).head(nz_);
              const Eigen::VectorXd base = z_;
              double asoc = 1.0;
              for (int i = 0; i < nz_; ++i) {
                if (has_lo_[i] && dsoc[i] < 0)
                  asoc = std::min(asoc, -opt_.tau * (base[i] - zl_[i]) / dsoc[i]);
                if (has_up_[i] && dsoc[i] > 0)
                  asoc = std::min(asoc, opt_.tau * (zu_[i] - base[i]) / dsoc[i]);
              }
              z_ = base + asoc * dsoc;
              if (eval_all()) {
                const double th2 = mc_ ? chat_.cwiseAbs().sum() : 0.0;
                const double m2 = fhat_ + barrier_term(mu) + nu_pen * th2;
                if (ls_debug) {
                  char socline[120];
                  std::snprintf(socline, sizeof socline,
                                "  soc a=%.2e dmerit=%.4e dpen=%.3e", asoc,
                                m2 - merit0, nu_pen * (th2 - theta0));
                  opt_.log(socline);
                }
                if (std::isfinite(m2) &&
                    m2 <= merit0 + 1e-4 * alpha * ddir + 1e-12 * (1 + std::abs(merit0))) {
                  accepted = true;
                  merit_new = m2;
                  break;
                }
              }
            }
          }
          alpha *= 0.5;
          if (alpha < 1e-12) break;
        }
        if (!accepted)
          z_ = z_save;
        else if (alpha < 0.05 * a_primal && damp + 1 < 5 &&
                 a_primal * dz.cwiseAbs().maxCoeff() > 10.0)
          accepted = false;  // sliver of a huge trial step: re-damp instead
      }
      if (!accepted) z_ = z_save;

      // Stall detection: infeasible problems approach a bound asymptotically,
      // taking ever smaller accepted steps without reducing ||c||. Treat a
      // long stall like a line-search failure so restoration can rule.
      if (accepted && mc_) {
        const double th_now = chat_.cwiseAbs().maxCoeff();
        // Only violations well clear of the feasibility target count: a
        // near-feasible crawl is slow curvature progress, not an asymptote.
        if (th_now > std::max(1e3 * opt_.tol_feas, 1e-5) &&
            (alpha <= 1e-6 || th_now >= 0.99 * theta_prev))
          ++stall;
        else
          stall = 0;
        theta_prev = th_now;
        if (stall >= 12) {
          accepted = false;
          stall = 0;
        }
      }

      if (!accepted) {
        if (!eval_all()) {
          res.status = SolveStatus::NumericalFailure;
          res.iterations = iter;
          finalize(res);
          return res;
        }
        if (mc_ && chat_.cwiseAbs().maxCoeff() > opt_.tol_feas && restorations < 4) {
          ++restorations;
          const int verdict = restore();
          // A stationary ||c||^2 only proves local infeasibility when the
          // violation left standing is substantial; stalling a hair above
          // the feasibility tolerance is not evidence of an empty set.
          if (verdict < 0 &&
              chat_.cwiseAbs().maxCoeff() > std::max(1e4 * opt_.tol_feas, 1e-4)) {
            res.status = SolveStatus::Infeasible;
            res.iterations = iter;
            res.kkt_feasibility = mc_ ? chat_.cwiseAbs().maxCoeff() : 0.0;
            finalize(res);
            return res;
          }
          init_duals();
          init_bound_duals(mu);
          nu_pen = 1.0;
          continue;
        }
        res.status = SolveStatus::NumericalFailure;
        res.iterations = iter;
        finalize(res);
        return res;
      }

      if (mc_ && dy.size()) y_ += alpha * dy;
      // A healthy full-ish step means the last inertia correction was ample;
      // decay it so chronic nonconvexity does not ratchet into permanent
      // over-regularization (the retry ladder restores it fast if needed).
      if (alpha >= 0.5) {
        delta_last *= 0.3;
        dual_reg = std::max(opt_.delta_d, 0.1 * dual_reg);
      }
      for (int i = 0; i < nz_; ++i) {
        if (has_lo_[i]) vl_[i] = std::max(vl_[i] + a_dual * dvl[i], 1e-16);
        if (has_up_[i]) vu_[i] = std::max(vu_[i] + a_dual * dvu[i], 1e-16);
      }
      safeguard_bound_duals(mu);

      if (opt_.keep_trace)
        res.trace.push_back({iter, mu, fhat_ / nlp_.obj_scale,
                             mc_ ? chat_.cwiseAbs().sum() : 0.0, merit0, merit_new, alpha,
                             delta_p});
      if (opt_.log) {
        char line[192];
        std::snprintf(line, sizeof line,
                      "iter=%d mu=%.3e f=%.8e theta=%.3e rd=%.3e alpha=%.3e delta=%.3e",
                      iter, mu, fhat_ / nlp_.obj_scale,
                      mc_ ? chat_.cwiseAbs().maxCoeff() : 0.0, rd, alpha, delta_p);
        opt_.log(line);
        if (std::getenv("GASGRID_IPM_DEBUG")) {
          if (ftb_arg >= 0) {
            std::snprintf(line, sizeof line, "  ftb z[%d] z=%.4e dz=%.3e dlo=%.3e dhi=%.3e",
                          ftb_arg, z_[ftb_arg], dz[ftb_arg],
                          has_lo_[ftb_arg] ? z_[ftb_arg] - zl_[ftb_arg] : -1.0,
                          has_up_[ftb_arg] ? zu_[ftb_arg] - z_[ftb_arg] : -1.0);
            opt_.log(line);
          }
          {
            int dzarg = 0;
            for (int i = 1; i < nz_; ++i)
              if (std::abs(dz[i]) > std::abs(dz[dzarg])) dzarg = i;
            std::snprintf(line, sizeof line, "  |dz|max=%.3e at z[%d] (z=%.4e) |dy|max=%.3e",
                          std::abs(dz[dzarg]), dzarg, z_[dzarg],
                          dy.size() ? dy.cwiseAbs().maxCoeff() : 0.0);
            opt_.log(line);
          }
          const Eigen::VectorXd r = dual_residual();
          int arg = 0;
          for (int i = 1; i < nz_; ++i)
            if (std::abs(r[i]) > std::abs(r[arg])) arg = i;
          int row_of = -1;
          if (arg >= n_act_)
            for (size_t q = 0; q < slack_of_row_.size(); ++q)
              if (slack_of_row_[q] == arg - n_act_) row_of = static_cast<int>(q);
          std::snprintf(line, sizeof line,
                        "  rmax=%.3e at z[%d] row=%d z=%.4e vl=%.3e vu=%.3e dlo=%.3e dhi=%.3e",
                        r[arg], arg, row_of, z_[arg], vl_[arg], vu_[arg],
                        has_lo_[arg] ? z_[arg] - zl_[arg] : -1.0,
                        has_up_[arg] ? zu_[arg] - z_[arg] : -1.0);
          opt_.log(line);
        }
      }
    }

    res.status = SolveStatus::IterationLimit;
    res.iterations = opt_.max_iter;
    res.kkt_stationarity = dual_residual_norm() / dual_scaling();
    res.kkt_feasibility = mc_ ? chat_.cwiseAbs().maxCoeff() : 0.0;
    res.kkt_complementarity = comp_norm(0.0) / dual_scaling();
    finalize(res);
    return res;
  }

 private:
  const SparseNLP& nlp_;
  const SolveOptions& opt_;

  // Layout.
  int n_ = 0, n_act_ = 0, n_slack_ = 0, nz_ = 0, mc_ = 0;
  std::vector<int> act_;         // full var -> active index or -1
  std::vector<int> act_to_full_;
  Eigen::VectorXd sx_;           // per full variable scale
  Eigen::VectorXd rscale_;       // per global row scale
  std::vector<int> slack_of_row_;  // global row -> slack index or -1
  Eigen::VectorXd zl_, zu_;
  std::vector<char> has_lo_, has_up_;

  // Iterate state.
  Eigen::VectorXd z_, y_, vl_, vu_;
  Eigen::VectorXd x_full_;
  double fhat_ = 0.0;
  Eigen::VectorXd ghat_;            // scaled objective gradient wrt z
  Eigen::VectorXd chat_;            // scaled equality residuals
  Eigen::SparseMatrix<double> J_;   // mc x nz
  std::vector<Eigen::VectorXd> block_vals_;

  Eigen::SparseMatrix<double> K_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt_;
  bool pattern_ready_ = false;

  void build_layout() {
    n_ = nlp_.n();
    act_.assign(static_cast<std::size_t>(n_), -1);
    sx_ = nlp_.var_scale.size() ? nlp_.var_scale : Eigen::VectorXd::Ones(n_);
    for (int i = 0; i < n_; ++i)
      if (nlp_.xl[i] < nlp_.xu[i]) {
        act_[static_cast<std::size_t>(i)] = n_act_++;
        act_to_full_.push_back(i);
      }
    mc_ = nlp_.m();
    rscale_.resize(std::max(1, mc_));
    slack_of_row_.assign(static_cast<std::size_t>(std::max(1, mc_)), -1);
    int off = 0;
    for (const auto& b : nlp_.blocks) {
      for (int r = 0; r < b.rows; ++r, ++off) {
        rscale_[off] = b.row_scale.size() ? b.row_scale[r] : 1.0;
        if (b.cl[r] < b.cu[r]) slack_of_row_[static_cast<std::size_t>(off)] = n_slack_++;
      }
    }
    nz_ = n_act_ + n_slack_;
    zl_.resize(nz_);
    zu_.resize(nz_);
    has_lo_.assign(static_cast<std::size_t>(nz_), 0);
    has_up_.assign(static_cast<std::size_t>(nz_), 0);
    for (int a = 0; a < n_act_; ++a) {
      const int i = act_to_full_[static_cast<std::size_t>(a)];
      zl_[a] = nlp_.xl[i] / sx_[i];
      zu_[a] = nlp_.xu[i] / sx_[i];
      has_lo_[static_cast<std::size_t>(a)] = std::isfinite(zl_[a]);
      has_up_[static_cast<std::size_t>(a)] = std::isfinite(zu_[a]);
    }
    off = 0;
    for (const auto& b : nlp_.blocks)
      for (int r = 0; r < b.rows; ++r, ++off) {
        const int s = slack_of_row_[static_cast<std::size_t>(off)];
        if (s >= 0) {
          const int k = n_act_ + s;
          zl_[k] = rscale_[off] * b.cl[r];
          zu_[k] = rscale_[off] * b.cu[r];
          has_lo_[static_cast<std::size_t>(k)] = std::isfinite(zl_[k]);
          has_up_[static_cast<std::size_t>(k)] = std::isfinite(zu_[k]);
        }
      }
    x_full_ = nlp_.x0;
    block_vals_.resize(nlp_.blocks.size());
  }

  static double interior_clip(double v, double lo, double hi) {
    double m;
    if (std::isfinite(lo) && std::isfinite(hi)) {
      m = 1e-4 * (hi - lo);
      if (m == 0) return lo;
    } else {
      m = 1e-4 * std::max({1.0, std::isfinite(lo) ? std::abs(lo) : 0.0,
                           std::isfinite(hi) ? std::abs(hi) : 0.0});
    }
    if (std::isfinite(lo)) v = std::max(v, lo + m);
    if (std::isfinite(hi)) v = std::min(v, hi - m);
    return v;
  }

  void init_point() {
    z_.resize(nz_);
    vl_ = Eigen::VectorXd::Zero(nz_);
    vu_ = Eigen::VectorXd::Zero(nz_);
    y_ = Eigen::VectorXd::Zero(mc_);
    for (int a = 0; a < n_act_; ++a) {
      const int i = act_to_full_[static_cast<std::size_t>(a)];
      z_[a] = interior_clip(nlp_.x0[i] / sx_[i], zl_[a], zu_[a]);
    }
    // Slacks start at the scaled constraint value, clipped interior.
    sync_x_full();
    int off = 0;
    for (std::size_t bi = 0; bi < nlp_.blocks.size(); ++bi) {
      const auto& b = nlp_.blocks[bi];
      Eigen::VectorXd c = b.eval(x_full_);
      for (int r = 0; r < b.rows; ++r, ++off) {
        const int s = slack_of_row_[static_cast<std::size_t>(off)];
        if (s >= 0) {
          const int k = n_act_ + s;
          z_[k] = interior_clip(rscale_[off] * c[r], zl_[k], zu_[k]);
        }
      }
    }
  }

  void sync_x_full() {
    for (int i = 0; i < n_; ++i) {
      const int a = act_[static_cast<std::size_t>(i)];
      x_full_[i] = (a >= 0) ? sx_[i] * z_[a] : nlp_.xl[i];
    }
  }

  /// Evaluates objective, gradient, residuals, Jacobian at z_. False on
  /// non-finite values.
  bool eval_all() {
    sync_x_full();
    const double f = nlp_.obj(x_full_);
    if (!std::isfinite(f)) return false;
    fhat_ = nlp_.obj_scale * f;
    const Eigen::VectorXd g = nlp_.obj_grad(x_full_);
    ghat_ = Eigen::VectorXd::Zero(nz_);
    for (int a = 0; a < n_act_; ++a) {
      const int i = act_to_full_[static_cast<std::size_t>(a)];
      ghat_[a] = nlp_.obj_scale * sx_[i] * g[i];
      if (!std::isfinite(ghat_[a])) return false;
    }
    chat_.resize(mc_);
    std::vector<Eigen::Triplet<double>> trips;
    int off = 0;
    for (std::size_t bi = 0; bi < nlp_.blocks.size(); ++bi) {
      const auto& b = nlp_.blocks[bi];
      block_vals_[bi] = b.eval(x_full_);
      const std::vector<double> jv = b.jac(x_full_);
      for (int r = 0; r < b.rows; ++r) {
        const int row = off + r;
        const int s = slack_of_row_[static_cast<std::size_t>(row)];
        const double rs = rscale_[row];
        chat_[row] = (s >= 0) ? rs * block_vals_[bi][r] - z_[n_act_ + s]
                              : rs * (block_vals_[bi][r] - b.cl[r]);
        if (!std::isfinite(chat_[row])) return false;
        if (s >= 0) trips.emplace_back(row, n_act_ + s, -1.0);
      }
      for (std::size_t k = 0; k < b.jac_structure.size(); ++k) {
        const auto [r, c] = b.jac_structure[k];
        const int a = act_[static_cast<std::size_t>(c)];
        if (a < 0) continue;
        const double v = rscale_[off + r] * jv[k] * sx_[c];
        if (!std::isfinite(v)) return false;
        trips.emplace_back(off + r, a, v);
      }
      off += b.rows;
    }
    J_.resize(std::max(1, mc_), nz_);
    J_.setFromTriplets(trips.begin(), trips.end());
    return true;
  }

  void init_duals() {
    y_ = Eigen::VectorXd::Zero(mc_);
    if (nlp_.y0.size() == mc_ && mc_) {
      for (int i = 0; i < mc_; ++i) y_[i] = nlp_.obj_scale * nlp_.y0[i] / rscale_[i];
      if (mc_ == 0 || y_.cwiseAbs().maxCoeff() < 1e6) return;
    }
    if (!mc_) return;
    // Least-squares duals through the same KKT machinery with identity
    // Hessian: [[I, J'], [J, -delta I]] [w; lam] = [ghat; 0], y = -lam.
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < nz_; ++i) trips.emplace_back(i, i, 1.0);
    for (int k = 0; k < J_.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(J_, k); it; ++it)
        trips.emplace_back(nz_ + static_cast<int>(it.row()), static_cast<int>(it.col()),
                           it.value());
    for (int i = 0; i < mc_; ++i) trips.emplace_back(nz_ + i, nz_ + i, -1e-8);
    Eigen::SparseMatrix<double> A(nz_ + mc_, nz_ + mc_);
    A.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> f(A);
    if (f.info() != Eigen::Success) return;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nz_ + mc_);
    rhs.head(nz_) = ghat_ - vl_ + vu_;
    const Eigen::VectorXd sol = f.solve(rhs);
    Eigen::VectorXd cand = -sol.tail(mc_);
    if (cand.cwiseAbs().maxCoeff() < 1e3) y_ = cand;
  }

  void seed_bound_duals_from_prior() {
    vl_ = Eigen::VectorXd::Zero(nz_);
    vu_ = Eigen::VectorXd::Zero(nz_);
    if (nlp_.zl0.size() != n_ || nlp_.zu0.size() != n_) return;
    for (int a = 0; a < n_act_; ++a) {
      const int fi = act_to_full_[static_cast<std::size_t>(a)];
      if (has_lo_[a])
        vl_[a] = std::min(std::max(nlp_.obj_scale * sx_[fi] * nlp_.zl0[fi], 0.0), 1e8);
      if (has_up_[a])
        vu_[a] = std::min(std::max(nlp_.obj_scale * sx_[fi] * nlp_.zu0[fi], 0.0), 1e8);
    }
  }

  /// Components without a usable seed get v = mu / d, capped so variables
  /// sitting right on a bound cannot inject huge duals into the first KKT.
  void fill_default_bound_duals(double mu) {
    for (int i = 0; i < nz_; ++i) {
      if (has_lo_[i] && vl_[i] <= 1e-10)
        vl_[i] = std::min(mu / std::max(z_[i] - zl_[i], 1e-8), 1.0);
      if (has_up_[i] && vu_[i] <= 1e-10)
        vu_[i] = std::min(mu / std::max(zu_[i] - z_[i], 1e-8), 1.0);
    }
  }

  void init_bound_duals(double mu) {
    vl_ = Eigen::VectorXd::Zero(nz_);
    vu_ = Eigen::VectorXd::Zero(nz_);
    fill_default_bound_duals(mu);
  }

  void safeguard_bound_duals(double mu) {
    const double ks = 1e10;
    for (int i = 0; i < nz_; ++i) {
      if (has_lo_[i]) {
        const double d = std::max(z_[i] - zl_[i], 1e-40);
        vl_[i] = std::min(std::max(vl_[i], mu / (ks * d)), ks * mu / d);
      }
      if (has_up_[i]) {
        const double d = std::max(zu_[i] - z_[i], 1e-40);
        vu_[i] = std::min(std::max(vu_[i], mu / (ks * d)), ks * mu / d);
      }
    }
  }

  Eigen::VectorXd dual_residual() const {
    Eigen::VectorXd r = ghat_ - vl_ + vu_;
    if (mc_) r -= J_.transpose() * y_;
    return r;
  }
  double dual_residual_norm() const {
    const Eigen::VectorXd r = dual_residual();
    return r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
  }
  double dual_scaling() const {
    double sum = 0;
    int cnt = 0;
    if (mc_) {
      sum += y_.cwiseAbs().sum();
      cnt += mc_;
    }
    sum += vl_.cwiseAbs().sum() + vu_.cwiseAbs().sum();
    cnt += 2 * nz_;
    return std::max(100.0, sum / std::max(1, cnt)) / 100.0;
  }
  double comp_norm(double mu) const {
    double m = 0;
    for (int i = 0; i < nz_; ++i) {
      if (has_lo_[i]) m = std::max(m, std::abs(vl_[i] * (z_[i] - zl_[i]) - mu));
      if (has_up_[i]) m = std::max(m, std::abs(vu_[i] * (zu_[i] - z_[i]) - mu));
    }
    return m;
  }

  double barrier_term(double mu) const {
    double s = 0;
    for (int i = 0; i < nz_; ++i) {
      if (has_lo_[i]) s -= mu * std::log(z_[i] - zl_[i]);
      if (has_up_[i]) s -= mu * std::log(zu_[i] - z_[i]);
    }
    return s;
  }

  /// Gradient of the barrier objective (f + barrier), primal-dual form uses
  /// this as the stationarity target for the Newton step.
  Eigen::VectorXd barrier_grad(double mu) const {
    Eigen::VectorXd g = ghat_;
    if (mc_) g -= J_.transpose() * y_;
    for (int i = 0; i < nz_; ++i) {
      if (has_lo_[i]) g[i] -= mu / (z_[i] - zl_[i]);
      if (has_up_[i]) g[i] += mu / (zu_[i] - z_[i]);
    }
    return g;
  }

  void assemble_kkt(double mu, double delta_p, double delta_d) {
    (void)mu;
    std::vector<Eigen::Triplet<double>> trips;
    // Lagrangian Hessian in scaled coordinates (lower triangle).
    if (nlp_.obj_hess) {
      const std::vector<double> v = nlp_.obj_hess(x_full_);
      for (std::size_t k = 0; k < nlp_.obj_hess_structure.size(); ++k) {
        const auto [r, c] = nlp_.obj_hess_structure[k];
        const int ar = act_[static_cast<std::size_t>(r)], ac = act_[static_cast<std::size_t>(c)];
        if (ar < 0 || ac < 0) continue;
        trips.emplace_back(std::max(ar, ac), std::min(ar, ac),
                           nlp_.obj_scale * sx_[r] * sx_[c] * v[k]);
      }
    }
    int off = 0;
    for (const auto& b : nlp_.blocks) {
      if (b.hess) {
        // L = f - y'c, so constraint curvature enters with the negated dual.
        Eigen::VectorXd lam(b.rows);
        for (int r = 0; r < b.rows; ++r) lam[r] = -rscale_[off + r] * y_[off + r];
        const std::vector<double> v = b.hess(x_full_, lam);
        for (std::size_t k = 0; k < b.hess_structure.size(); ++k) {
          const auto [r, c] = b.hess_structure[k];
          const int ar = act_[static_cast<std::size_t>(r)],
                    ac = act_[static_cast<std::size_t>(c)];
          if (ar < 0 || ac < 0) continue;
          trips.emplace_back(std::max(ar, ac), std::min(ar, ac), sx_[r] * sx_[c] * v[k]);
        }
      }
      off += b.rows;
    }
    // Barrier and regularization diagonal (always present, keeps the pattern
    // fixed across delta changes).
    for (int i = 0; i < nz_; ++i) {
      double d = delta_p;
      if (has_lo_[i]) d += vl_[i] / (z_[i] - zl_[i]);
      if (has_up_[i]) d += vu_[i] / (zu_[i] - z_[i]);
      trips.emplace_back(i, i, d);
    }
    // Constraint rows.
    for (int k = 0; k < J_.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(J_, k); it; ++it)
        trips.emplace_back(nz_ + static_cast<int>(it.row()), static_cast<int>(it.col()),
                           it.value());
    for (int i = 0; i < mc_; ++i) trips.emplace_back(nz_ + i, nz_ + i, -delta_d);
    K_.resize(nz_ + mc_, nz_ + mc_);
    K_.setFromTriplets(trips.begin(), trips.end());
    if (!pattern_ready_) {
      ldlt_.analyzePattern(K_);
      pattern_ready_ = true;
    }
  }

  /// Factorizes K_ and checks the inertia: nz_ positive and mc_ negative
  /// pivots, none vanishing.
  bool factorize_ok() {
    ldlt_.factorize(K_);
    if (ldlt_.info() != Eigen::Success) return false;
    const auto& D = ldlt_.vectorD();
    int pos = 0, neg = 0;
    for (Eigen::Index i = 0; i < D.size(); ++i) {
      const double d = D[i];
      if (!std::isfinite(d) || d == 0.0) return false;
      (d > 0 ? pos : neg)++;
    }
    return pos == nz_ && neg == mc_;
  }

  /// Restoration: minimize 0.5||c||^2 inside the box. Gauss-Newton first;
  /// when it goes stationary with violation left standing, a full Newton
  /// phase (adding sum_r c_r grad^2 c_r) rules on it. Near a scheme symmetry
  /// the leftover violation lies outside range(J), where Gauss-Newton is
  /// blind and only the curvature term steers back toward the feasible set.
  /// Returns +1 on success (infeasibility reduced), -1 when stationary and
  /// still infeasible (problem locally infeasible), 0 on numerical failure.
  int restore() {
    const int gn = restore_phase(false);
    return gn == -1 ? restore_phase(true) : gn;
  }

  int restore_phase(bool curvature) {
    double gamma = 1e-6;
    const double theta_enter = chat_.cwiseAbs().maxCoeff();
    for (int it = 0; it < 60; ++it) {
      const double theta = chat_.cwiseAbs().maxCoeff();
      if (theta <= std::max(opt_.tol_feas, 1e-2 * theta_enter)) return +1;
      const Eigen::VectorXd grad = J_.transpose() * chat_;
      if (grad.cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, theta)) return -1;
      Eigen::SparseMatrix<double> M = (J_.transpose() * J_).pruned();
      if (curvature) {
        std::vector<Eigen::Triplet<double>> trips;
        int off = 0;
        for (const auto& b : nlp_.blocks) {
          if (b.hess) {
            Eigen::VectorXd lam(b.rows);
            for (int r = 0; r < b.rows; ++r)
              lam[r] = rscale_[off + r] * chat_[off + r];
            const std::vector<double> v = b.hess(x_full_, lam);
            for (std::size_t k = 0; k < b.hess_structure.size(); ++k) {
              const auto [r, c] = b.hess_structure[k];
              const int ar = act_[static_cast<std::size_t>(r)],
                        ac = act_[static_cast<std::size_t>(c)];
              if (ar < 0 || ac < 0) continue;
              const double hv = sx_[r] * sx_[c] * v[k];
              trips.emplace_back(ar, ac, hv);
              if (ar != ac) trips.emplace_back(ac, ar, hv);
            }
          }
          off += b.rows;
        }
        Eigen::SparseMatrix<double> Hc(nz_, nz_);
        Hc.setFromTriplets(trips.begin(), trips.end());
        M += Hc;
      }
      for (int i = 0; i < nz_; ++i) M.coeffRef(i, i) += gamma;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> f(M);
      bool usable = f.info() == Eigen::Success;
      if (usable && curvature) {
        const auto& D = f.vectorD();
        for (Eigen::Index i = 0; i < D.size() && usable; ++i)
          if (!(D[i] > 0.0)) usable = false;
      }
      if (!usable) {
        gamma *= 100;
        if (gamma > 1e20) return 0;
        continue;
      }
      Eigen::VectorXd dz = f.solve(-grad);
      double a = 1.0;
      for (int i = 0; i < nz_; ++i) {
        if (has_lo_[i] && dz[i] < 0) a = std::min(a, -opt_.tau * (z_[i] - zl_[i]) / dz[i]);
        if (has_up_[i] && dz[i] > 0) a = std::min(a, opt_.tau * (zu_[i] - z_[i]) / dz[i]);
      }
      const double phi0 = 0.5 * chat_.squaredNorm();
      const double ddir = grad.dot(dz);
      const Eigen::VectorXd z_save = z_;
      bool ok = false;
      for (int ls = 0; ls < 40; ++ls) {
        z_ = z_save + a * dz;
        if (eval_all() && 0.5 * chat_.squaredNorm() <= phi0 + 1e-4 * a * ddir) {
          ok = true;
          break;
        }
        a *= 0.5;
        if (a < 1e-14) break;
      }
      if (!ok) {
        z_ = z_save;
        if (!eval_all()) return 0;
        gamma *= 10;
        if (gamma > 1e20) return (theta > opt_.tol_feas) ? -1 : +1;
      } else {
        gamma = std::max(1e-8, gamma * 0.3);
      }
    }
    return (chat_.cwiseAbs().maxCoeff() <= std::max(opt_.tol_feas, 1e-2 * theta_enter)) ? +1
                                                                                        : -1;
  }

  void finalize(SolveResult& res) {
    sync_x_full();
    res.x = x_full_;
    res.objective = nlp_.obj ? nlp_.obj(x_full_) : 0.0;
    res.y.resize(mc_);
    for (int i = 0; i < mc_; ++i) res.y[i] = rscale_[i] * y_[i] / nlp_.obj_scale;
    res.z_lower = Eigen::VectorXd::Zero(n_);
    res.z_upper = Eigen::VectorXd::Zero(n_);
    for (int a = 0; a < n_act_; ++a) {
      const int i = act_to_full_[static_cast<std::size_t>(a)];
      res.z_lower[i] = vl_[a] / (nlp_.obj_scale * sx_[i]);
      res.z_upper[i] = vu_[a] / (nlp_.obj_scale * sx_[i]);
    }
    if (res.status == SolveStatus::Optimal) return;
    res.kkt_stationarity = dual_residual_norm() / dual_scaling();
    res.kkt_feasibility = mc_ ? chat_.cwiseAbs().maxCoeff() : 0.0;
    res.kkt_complementarity = comp_norm(0.0) / dual_scaling();
  }
};

}  // namespace ipm_detail

/// Solves the NLP. Deterministic: identical inputs and options produce the
/// identical iterate sequence. Returns status optimal, infeasible,
/// iteration_limit, or numerical_failure; never diverges silently.
inline SolveResult solve(const SparseNLP& nlp, const SolveOptions& opt = {}) {
  ipm_detail::Solver s(nlp, opt);
  SolveResult res = s.run();
  if (res.status == SolveStatus::Optimal) {
    // Contract: optimal implies the reported residuals meet tolerances.
    if (!(res.kkt_stationarity <= opt.tol_kkt && res.kkt_feasibility <= opt.tol_feas &&
          res.kkt_complementarity <= opt.tol_comp))
      res.status = SolveStatus::NumericalFailure;
  }
  return res;
}

}  // namespace gasgrid
