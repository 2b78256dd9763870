#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gasgrid/errors.hpp"

namespace gasgrid {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Sparse NLP in range form:
///   min  obj_scale * f(x)
///   s.t. cl_b <= c_b(x) <= cu_b   for every block b (cl == cu means equality)
///        xl <= x <= xu            (either side may be infinite; xl == xu fixes)
///
/// Jacobian and Hessian sparsity patterns are fixed across evaluations. Blocks
/// without a Hessian callback are treated as affine; check_derivatives verifies
/// that assumption with finite differences.
struct SparseNLP {
  Eigen::VectorXd x0, xl, xu;
  std::vector<std::string> names;  // optional, size n() when present
  Eigen::VectorXd var_scale;       // optional positive scaling, size n()
  double obj_scale = 1.0;

  std::function<double(const Eigen::VectorXd&)> obj;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> obj_grad;
  std::vector<std::pair<int, int>> obj_hess_structure;  // lower triangle (row >= col)
  std::function<std::vector<double>(const Eigen::VectorXd&)> obj_hess;

  struct Block {
    std::string name;
    int rows = 0;
    Eigen::VectorXd cl, cu;
    Eigen::VectorXd row_scale;  // optional positive scaling, size rows
    std::vector<std::pair<int, int>> jac_structure;  // (row in block, variable)
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eval;
    std::function<std::vector<double>(const Eigen::VectorXd&)> jac;
    // Hessian of lambda' c(x), lower triangle; values as a function of
    // (x, lambda_block). Absent means the block is affine.
    std::vector<std::pair<int, int>> hess_structure;
    std::function<std::vector<double>(const Eigen::VectorXd&, const Eigen::VectorXd&)> hess;
  };
  std::vector<Block> blocks;

  // Optional warm-start duals (filled by warm_start, consumed by solve).
  Eigen::VectorXd y0, zl0, zu0;

  int n() const { return static_cast<int>(x0.size()); }
  int m() const {
    int m = 0;
    for (const auto& b : blocks) m += b.rows;
    return m;
  }

  Block& add_block(std::string name, int rows) {
    Block b;
    b.name = std::move(name);
    b.rows = rows;
    b.cl = Eigen::VectorXd::Zero(rows);
    b.cu = Eigen::VectorXd::Zero(rows);
    blocks.push_back(std::move(b));
    return blocks.back();
  }

  /// Structural sanity: sizes, bound ordering, indices in range.
  /// Throws LayoutError or InfeasibleBoundsError.
  void validate_layout() const {
    const int nv = n();
    if (xl.size() != nv || xu.size() != nv)
      throw LayoutError("nlp: bound vectors must match x0 size");
    if (!names.empty() && static_cast<int>(names.size()) != nv)
      throw LayoutError("nlp: names size mismatch");
    if (var_scale.size() != 0 && var_scale.size() != nv)
      throw LayoutError("nlp: var_scale size mismatch");
    for (int i = 0; i < nv; ++i) {
      if (xl[i] > xu[i]) throw InfeasibleBoundsError("nlp: variable bounds cross");
      if (var_scale.size() && !(var_scale[i] > 0))
        throw LayoutError("nlp: var_scale must be positive");
    }
    if (!obj || !obj_grad) throw LayoutError("nlp: objective callbacks missing");
    if (obj_hess_structure.size() && !obj_hess)
      throw LayoutError("nlp: objective Hessian structure without callback");
    for (const auto& [r, c] : obj_hess_structure)
      if (r < c || r >= nv || c < 0) throw LayoutError("nlp: objective Hessian index out of range");
    for (const auto& b : blocks) {
      if (b.cl.size() != b.rows || b.cu.size() != b.rows)
        throw LayoutError("block " + b.name + ": range vectors must match rows");
      if (b.row_scale.size() != 0 && b.row_scale.size() != b.rows)
        throw LayoutError("block " + b.name + ": row_scale size mismatch");
      for (int i = 0; i < b.rows; ++i)
        if (b.cl[i] > b.cu[i])
          throw InfeasibleBoundsError("block " + b.name + ": constraint range crosses");
      if (!b.eval || !b.jac) throw LayoutError("block " + b.name + ": callbacks missing");
      for (const auto& [r, c] : b.jac_structure)
        if (r < 0 || r >= b.rows || c < 0 || c >= nv)
          throw LayoutError("block " + b.name + ": Jacobian index out of range");
      if (b.hess_structure.size() && !b.hess)
        throw LayoutError("block " + b.name + ": Hessian structure without callback");
      for (const auto& [r, c] : b.hess_structure)
        if (r < c || r >= nv || c < 0)
          throw LayoutError("block " + b.name + ": Hessian index out of range");
    }
  }
};

/// Additive objective contribution from one assembler; compose_objective
/// merges any number of terms into the NLP's single objective callback.
struct ObjTerm {
  std::function<double(const Eigen::VectorXd&)> f;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> add_grad;  // accumulates
  std::vector<std::pair<int, int>> hess_structure;
  std::function<std::vector<double>(const Eigen::VectorXd&)> hess;
};

inline void compose_objective(SparseNLP& nlp, std::vector<ObjTerm> terms) {
  auto shared = std::make_shared<std::vector<ObjTerm>>(std::move(terms));
  nlp.obj = [shared](const Eigen::VectorXd& x) {
    double s = 0;
    for (const auto& t : *shared) s += t.f(x);
    return s;
  };
  nlp.obj_grad = [shared](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    for (const auto& t : *shared) t.add_grad(x, g);
    return g;
  };
  nlp.obj_hess_structure.clear();
  bool any_hess = false;
  for (const auto& t : *shared) {
    any_hess |= static_cast<bool>(t.hess);
    nlp.obj_hess_structure.insert(nlp.obj_hess_structure.end(), t.hess_structure.begin(),
                                  t.hess_structure.end());
  }
  if (any_hess) {
    nlp.obj_hess = [shared](const Eigen::VectorXd& x) {
      std::vector<double> v;
      for (const auto& t : *shared) {
        if (t.hess) {
          const std::vector<double> tv = t.hess(x);
          v.insert(v.end(), tv.begin(), tv.end());
        } else {
          v.insert(v.end(), t.hess_structure.size(), 0.0);
        }
      }
      return v;
    };
  } else {
    nlp.obj_hess = nullptr;
  }
}

enum class SolveStatus { Optimal, Infeasible, IterationLimit, NumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::IterationLimit: return "iteration_limit";
    case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

/// One accepted iterate; merit values are taken at that iterate's mu and
/// penalty, so merit_after <= merit_before holds along accepted steps.
struct SolverTrace {
  int iter;
  double mu, objective, infeasibility;
  double merit_before, merit_after;
  double alpha, delta_p;
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd x;                 // primal, original units
  Eigen::VectorXd y;                 // constraint duals, blocks concatenated
  Eigen::VectorXd z_lower, z_upper;  // bound duals
  double objective = 0.0;
  double kkt_stationarity = kInf;
  double kkt_feasibility = kInf;
  double kkt_complementarity = kInf;
  int iterations = 0;
  std::vector<SolverTrace> trace;
};

struct SolveOptions {
  double tol_kkt = 1e-6;
  double tol_feas = 1e-8;
  double tol_comp = 1e-8;
  int max_iter = 400;
  double mu0 = 0.1;
  double mu_shrink = 0.2;
  double tau = 0.995;      // fraction-to-boundary
  double delta_d = 1e-8;  // dual regularization
  bool keep_trace = false;
  bool adaptive_mu0 = true;  // shrink the initial barrier near a warm start
  std::function<void(const std::string&)> log;  // line-delimited iteration records
};

/// Copy of the problem whose initial point is the prior primal, clipped
/// strictly inside the bounds by 1e-4 of each bound range. Prior duals ride
/// along for solver initialization. Throws LayoutError on size mismatch.
inline SparseNLP warm_start(SparseNLP nlp, const SolveResult& prior) {
  if (prior.x.size() != nlp.x0.size())
    throw LayoutError("warm_start: primal size does not match variable layout");
  const int n = nlp.n();
  for (int i = 0; i < n; ++i) {
    double lo = nlp.xl[i], hi = nlp.xu[i];
    double margin;
    if (std::isfinite(lo) && std::isfinite(hi))
      margin = 1e-4 * (hi - lo);
    else
      margin = 1e-4 * std::max(1.0, std::abs(prior.x[i]));
    const double l = std::isfinite(lo) ? lo + margin : -kInf;
    const double u = std::isfinite(hi) ? hi - margin : kInf;
    nlp.x0[i] = std::min(std::max(prior.x[i], l), std::min(u, std::max(l, u)));
    if (l > u) nlp.x0[i] = 0.5 * (lo + hi);  // degenerate narrow box
  }
  if (prior.y.size() == static_cast<Eigen::Index>(nlp.m())) nlp.y0 = prior.y;
  if (prior.z_lower.size() == nlp.x0.size()) nlp.zl0 = prior.z_lower;
  if (prior.z_upper.size() == nlp.x0.size()) nlp.zu0 = prior.z_upper;
  return nlp;
}

struct DerivIssue {
  std::string where;  // "gradient", "hessian", or block name
  int row = -1, col = -1;
  double analytic = 0.0, fd = 0.0, rel_error = 0.0;
};

struct DerivReport {
  double threshold = 1e-5;
  DerivIssue worst_gradient, worst_jacobian, worst_hessian;
  double max_gradient_error() const { return worst_gradient.rel_error; }
  double max_jacobian_error() const { return worst_jacobian.rel_error; }
  double max_hessian_error() const { return worst_hessian.rel_error; }
  double max_rel_error() const {
    return std::max({worst_gradient.rel_error, worst_jacobian.rel_error,
                     worst_hessian.rel_error});
  }
  bool pass() const { return max_rel_error() <= threshold; }
};

namespace nlp_detail {

inline double rel_err(double a, double fd) {
  return std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
}

inline void track(DerivIssue& worst, const std::string& where, int row, int col, double a,
                  double fd) {
  const double e = rel_err(a, fd);
  if (e > worst.rel_error) worst = {where, row, col, a, fd, e};
}

}  // namespace nlp_detail

/// Central finite-difference verification of gradient, block Jacobians, and
/// the Lagrangian Hessian at `point`. The comparison runs in the solver's
/// scaled coordinates (var_scale, row_scale, obj_scale): raw problems mix
/// watt-sized rows with unit-sized ones, and the cancellation noise of a
/// central difference through the large components alone would swamp any
/// useful threshold. Positive diagonal scalings preserve every defect this
/// check hunts, and the scaled system is the one the solver consumes.
/// Jacobians are compressed by structural graph coloring so whole column
/// groups are probed per evaluation; finite differences that hit rows with
/// no declared entry are reported as missing dependencies (col = -1).
/// Hessians are checked along deterministic probe directions. Report-only;
/// pass threshold defaults to 1e-5 with h = 1e-6 scaled per variable.
inline DerivReport check_derivatives(const SparseNLP& nlp, Eigen::VectorXd x,
                                     double h0 = 1e-6, double threshold = 1e-5) {
  nlp.validate_layout();
  const int n = nlp.n();
  DerivReport rep;
  rep.threshold = threshold;

  const Eigen::VectorXd s =
      nlp.var_scale.size() ? nlp.var_scale : Eigen::VectorXd::Ones(n);
  const double os = nlp.obj_scale;
  Eigen::VectorXd z = x.cwiseQuotient(s);
  const Eigen::VectorXd zl = nlp.xl.cwiseQuotient(s);
  const Eigen::VectorXd zu = nlp.xu.cwiseQuotient(s);
  const auto at = [&](const Eigen::VectorXd& zz) -> Eigen::VectorXd {
    return zz.cwiseProduct(s);
  };

  // Variables with a zero-width box are data, not decisions; the solver
  // eliminates them, so their columns are not probed here either.
  std::vector<char> pinned(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    if (!(nlp.xl[i] < nlp.xu[i])) pinned[static_cast<std::size_t>(i)] = 1;

  // Keep probes strictly inside the box.
  Eigen::VectorXd h(n);
  for (int i = 0; i < n; ++i) {
    if (pinned[static_cast<std::size_t>(i)]) {
      z[i] = zl[i];
      h[i] = h0;
      continue;
    }
    const double span = std::min(z[i] - zl[i], zu[i] - z[i]);
    if (span <= 0) {
      const double lo = zl[i], hi = zu[i];
      const double mid = std::isfinite(lo) && std::isfinite(hi) ? 0.5 * (lo + hi)
                         : std::isfinite(lo)                    ? lo + 1.0
                         : std::isfinite(hi)                    ? hi - 1.0
                                                                : z[i];
      z[i] = mid;
    }
    double hi_ = h0 * std::max(1.0, std::abs(z[i]));
    const double room = 0.45 * std::min(z[i] - zl[i], zu[i] - z[i]);
    if (std::isfinite(room)) hi_ = std::min(hi_, std::max(room, 1e-12));
    h[i] = hi_;
  }

  // Gradient.
  {
    const Eigen::VectorXd g = nlp.obj_grad(at(z));
    Eigen::VectorXd zp = z;
    for (int j = 0; j < n; ++j) {
      if (pinned[static_cast<std::size_t>(j)]) continue;
      const double zs = z[j];
      zp[j] = zs + h[j];
      const double fp = nlp.obj(at(zp));
      zp[j] = zs - h[j];
      const double fm = nlp.obj(at(zp));
      zp[j] = zs;
      nlp_detail::track(rep.worst_gradient, "gradient", -1, j, os * s[j] * g[j],
                        os * (fp - fm) / (2 * h[j]));
    }
  }

  // Block Jacobians via distance-2 coloring of the structural column graph.
  for (const auto& b : nlp.blocks) {
    std::vector<std::vector<int>> rows_of_col(static_cast<std::size_t>(n));
    std::vector<int> cols;
    for (const auto& [r, c] : b.jac_structure) {
      if (pinned[static_cast<std::size_t>(c)]) continue;
      if (rows_of_col[static_cast<std::size_t>(c)].empty()) cols.push_back(c);
      rows_of_col[static_cast<std::size_t>(c)].push_back(r);
    }
    std::sort(cols.begin(), cols.end());
    // Greedy distance-2 coloring: two columns sharing any row get distinct
    // colors, so each row sees at most one perturbed structured column.
    std::vector<int> color(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<int>> colors_of_row(static_cast<std::size_t>(b.rows));
    int n_colors = 0;
    std::vector<char> forbidden;
    for (int c : cols) {
      forbidden.assign(static_cast<std::size_t>(n_colors) + 1, 0);
      for (int r : rows_of_col[static_cast<std::size_t>(c)])
        for (int used : colors_of_row[static_cast<std::size_t>(r)])
          forbidden[static_cast<std::size_t>(used)] = 1;
      int pick = 0;
      while (forbidden[static_cast<std::size_t>(pick)]) ++pick;
      n_colors = std::max(n_colors, pick + 1);
      color[static_cast<std::size_t>(c)] = pick;
      for (int r : rows_of_col[static_cast<std::size_t>(c)])
        colors_of_row[static_cast<std::size_t>(r)].push_back(pick);
    }

    const Eigen::VectorXd rs =
        b.row_scale.size() ? b.row_scale : Eigen::VectorXd::Ones(b.rows);
    const Eigen::VectorXd c0 = b.eval(at(z));
    const std::vector<double> jv = b.jac(at(z));
    // analytic entries per (row, col) may repeat; sum duplicates.
    std::vector<std::vector<std::pair<int, double>>> analytic_row(
        static_cast<std::size_t>(b.rows));
    for (std::size_t k = 0; k < b.jac_structure.size(); ++k) {
      const auto [r, c] = b.jac_structure[k];
      const double jks = rs[r] * jv[k] * s[c];
      auto& lst = analytic_row[static_cast<std::size_t>(r)];
      bool merged = false;
      for (auto& e : lst)
        if (e.first == c) {
          e.second += jks;
          merged = true;
          break;
        }
      if (!merged) lst.push_back({c, jks});
    }

    Eigen::VectorXd zp = z, zm = z;
    std::vector<int> row_col(static_cast<std::size_t>(b.rows));
    for (int cls = 0; cls < n_colors; ++cls) {
      std::fill(row_col.begin(), row_col.end(), -1);
      for (int c : cols)
        if (color[static_cast<std::size_t>(c)] == cls) {
          zp[c] = z[c] + h[c];
          zm[c] = z[c] - h[c];
          for (int r : rows_of_col[static_cast<std::size_t>(c)])
            row_col[static_cast<std::size_t>(r)] = c;
        }
      const Eigen::VectorXd rp = b.eval(at(zp));
      const Eigen::VectorXd rm = b.eval(at(zm));
      for (int r = 0; r < b.rows; ++r) {
        const int c = row_col[static_cast<std::size_t>(r)];
        if (c >= 0) {
          const double fd = rs[r] * (rp[r] - rm[r]) / (2 * h[c]);
          double a = 0.0;
          for (const auto& e : analytic_row[static_cast<std::size_t>(r)])
            if (e.first == c) a = e.second;
          nlp_detail::track(rep.worst_jacobian, b.name, r, c, a, fd);
        } else {
          // No declared entry in this row for any perturbed column: the
          // difference must vanish, otherwise an entry is missing.
          const double fd = rs[r] * (rp[r] - rm[r]);
          if (std::abs(fd) > threshold * std::max(1.0, rs[r] * std::abs(c0[r])))
            nlp_detail::track(rep.worst_jacobian, b.name + " (missing entry)", r, -1, 0.0,
                              fd);
        }
      }
      for (int c : cols)
        if (color[static_cast<std::size_t>(c)] == cls) {
          zp[c] = z[c];
          zm[c] = z[c];
        }
    }
  }

  // Lagrangian Hessian along deterministic directions, against finite
  // differences of the Lagrangian gradient. Blocks without a Hessian callback
  // contribute zero curvature, so this also verifies they are affine.
  {
    Eigen::VectorXd lambda_all(std::max(1, nlp.m()));
    {
      int off = 0;
      for (const auto& b : nlp.blocks)
        for (int r = 0; r < b.rows; ++r, ++off)
          lambda_all[off] = std::sin(0.7 * (off + 1));  // fixed, nonzero weights
    }
    auto grad_lag = [&](const Eigen::VectorXd& zz) {
      const Eigen::VectorXd xx = at(zz);
      Eigen::VectorXd gl = (os * nlp.obj_grad(xx)).cwiseProduct(s);
      int off = 0;
      for (const auto& b : nlp.blocks) {
        const std::vector<double> v = b.jac(xx);
        for (std::size_t k = 0; k < b.jac_structure.size(); ++k) {
          const auto [r, c] = b.jac_structure[k];
          const double rsr = b.row_scale.size() ? b.row_scale[r] : 1.0;
          gl[c] += lambda_all[off + r] * rsr * v[k] * s[c];
        }
        off += b.rows;
      }
      return gl;
    };
    Eigen::SparseMatrix<double> H(n, n);
    {
      std::vector<Eigen::Triplet<double>> trips;
      if (nlp.obj_hess) {
        const std::vector<double> v = nlp.obj_hess(at(z));
        for (std::size_t k = 0; k < nlp.obj_hess_structure.size(); ++k) {
          const auto [r, c] = nlp.obj_hess_structure[k];
          const double e = os * s[r] * s[c] * v[k];
          trips.emplace_back(r, c, e);
          if (r != c) trips.emplace_back(c, r, e);
        }
      }
      int off = 0;
      for (const auto& b : nlp.blocks) {
        if (b.hess) {
          Eigen::VectorXd lb = lambda_all.segment(off, b.rows);
          if (b.row_scale.size()) lb = lb.cwiseProduct(b.row_scale);
          const std::vector<double> v = b.hess(at(z), lb);
          for (std::size_t k = 0; k < b.hess_structure.size(); ++k) {
            const auto [r, c] = b.hess_structure[k];
            const double e = s[r] * s[c] * v[k];
            trips.emplace_back(r, c, e);
            if (r != c) trips.emplace_back(c, r, e);
          }
        }
        off += b.rows;
      }
      H.setFromTriplets(trips.begin(), trips.end());
    }
    const int n_dirs = std::min(5, n);
    for (int d = 0; d < n_dirs; ++d) {
      Eigen::VectorXd u(n);
      for (int i = 0; i < n; ++i)
        u[i] = pinned[static_cast<std::size_t>(i)]
                   ? 0.0
                   : std::cos(0.31 * (i + 1) * (d + 1) + 0.2 * d);
      const double umax = u.cwiseAbs().maxCoeff();
      if (umax <= 0) break;
      u /= umax;
      // Step must stay inside the box for every component.
      double hd = kInf;
      for (int i = 0; i < n; ++i)
        hd = std::min(hd, h[i] / std::max(1e-30, std::abs(u[i])));
      hd = std::min(hd, h0 * std::max(1.0, z.cwiseAbs().maxCoeff()));
      const Eigen::VectorXd gp = grad_lag(z + hd * u);
      const Eigen::VectorXd gm = grad_lag(z - hd * u);
      const Eigen::VectorXd fd = (gp - gm) / (2 * hd);
      const Eigen::VectorXd an = H * u;
      for (int i = 0; i < n; ++i)
        nlp_detail::track(rep.worst_hessian, "hessian", i, d, an[i], fd[i]);
    }
  }

  return rep;
}

}  // namespace gasgrid
