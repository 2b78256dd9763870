#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstring>

#include "gasgrid/ipm.hpp"
#include "gasgrid/nlp.hpp"

using namespace gasgrid;
using Catch::Approx;

namespace {

// min x + y  s.t.  x^2 + y^2 = 2,  x, y >= 0.
SparseNLP circle_problem() {
  SparseNLP nlp;
  nlp.x0 = Eigen::Vector2d(1.2, 0.8);
  nlp.xl = Eigen::Vector2d(0.0, 0.0);
  nlp.xu = Eigen::Vector2d(kInf, kInf);
  nlp.obj = [](const Eigen::VectorXd& x) { return x[0] + x[1]; };
  nlp.obj_grad = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(Eigen::Vector2d(1.0, 1.0));
  };
  auto& b = nlp.add_block("circle", 1);
  b.cl[0] = b.cu[0] = 0.0;
  b.jac_structure = {{0, 0}, {0, 1}};
  b.eval = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(1);
    r[0] = x[0] * x[0] + x[1] * x[1] - 2.0;
    return r;
  };
  b.jac = [](const Eigen::VectorXd& x) {
    return std::vector<double>{2 * x[0], 2 * x[1]};
  };
  b.hess_structure = {{0, 0}, {1, 1}};
  b.hess = [](const Eigen::VectorXd&, const Eigen::VectorXd& lam) {
    return std::vector<double>{2 * lam[0], 2 * lam[0]};
  };
  return nlp;
}

}  // namespace

TEST_CASE("min x^2 with x >= 1 stops at the bound") {
  SparseNLP nlp;
  nlp.x0 = Eigen::VectorXd::Constant(1, 3.0);
  nlp.xl = Eigen::VectorXd::Constant(1, 1.0);
  nlp.xu = Eigen::VectorXd::Constant(1, kInf);
  nlp.obj = [](const Eigen::VectorXd& x) { return x[0] * x[0]; };
  nlp.obj_grad = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(Eigen::VectorXd::Constant(1, 2 * x[0]));
  };
  nlp.obj_hess_structure = {{0, 0}};
  nlp.obj_hess = [](const Eigen::VectorXd&) { return std::vector<double>{2.0}; };

  const SolveResult r = solve(nlp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == Approx(1.0).margin(1e-6));
  CHECK(r.objective == Approx(1.0).margin(1e-6));
  CHECK(r.z_lower[0] == Approx(2.0).margin(1e-4));  // multiplier of x >= 1
}

TEST_CASE("Rosenbrock reaches the global minimum unconstrained") {
  SparseNLP nlp;
  nlp.x0 = Eigen::Vector2d(-1.2, 1.0);
  nlp.xl = Eigen::Vector2d(-kInf, -kInf);
  nlp.xu = Eigen::Vector2d(kInf, kInf);
  nlp.obj = [](const Eigen::VectorXd& x) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    return a * a + 100 * b * b;
  };
  nlp.obj_grad = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(2);
    const double b = x[1] - x[0] * x[0];
    g[0] = -2 * (1 - x[0]) - 400 * x[0] * b;
    g[1] = 200 * b;
    return g;
  };
  nlp.obj_hess_structure = {{0, 0}, {1, 0}, {1, 1}};
  nlp.obj_hess = [](const Eigen::VectorXd& x) {
    return std::vector<double>{2 - 400 * (x[1] - 3 * x[0] * x[0]), -400 * x[0], 200.0};
  };

  const SolveResult r = solve(nlp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == Approx(1.0).margin(1e-6));
  CHECK(r.x[1] == Approx(1.0).margin(1e-6));
}

TEST_CASE("linear objective on the quarter circle matches brute force") {
  // Oracle first: sample the feasible arc densely.
  double best = kInf;
  const int n = 1000000;
  for (int i = 0; i <= n; ++i) {
    const double th = 0.5 * M_PI * i / n;
    const double v = std::sqrt(2.0) * (std::cos(th) + std::sin(th));
    best = std::min(best, v);
  }
  CHECK(best == Approx(1.41421).margin(1e-5));

  const SolveResult r = solve(circle_problem());
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective == Approx(best).margin(1e-5));
  // The minimum sits on an axis, not in the interior of the arc.
  CHECK(std::min(r.x[0], r.x[1]) == Approx(0.0).margin(1e-5));
  CHECK(std::max(r.x[0], r.x[1]) == Approx(std::sqrt(2.0)).margin(1e-5));
}

TEST_CASE("solver is deterministic and its merit decreases along steps") {
  SolveOptions opt;
  opt.keep_trace = true;
  std::vector<std::string> lines;
  opt.log = [&](const std::string& s) { lines.push_back(s); };

  const SolveResult a = solve(circle_problem(), opt);
  const SolveResult b = solve(circle_problem(), opt);
  REQUIRE(a.status == SolveStatus::Optimal);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(std::memcmp(&a.trace[i].objective, &b.trace[i].objective, sizeof(double)) == 0);
    CHECK(std::memcmp(&a.trace[i].alpha, &b.trace[i].alpha, sizeof(double)) == 0);
    CHECK(a.trace[i].merit_after <=
          a.trace[i].merit_before + 1e-9 * (1 + std::abs(a.trace[i].merit_before)));
  }
  CHECK(a.x == b.x);
  CHECK(!lines.empty());
  CHECK(lines[0].find("mu=") != std::string::npos);
}

TEST_CASE("fixed variables are substituted as constants") {
  SparseNLP nlp;
  nlp.x0 = Eigen::Vector2d(0.0, 5.0);
  nlp.xl = Eigen::Vector2d(-kInf, 5.0);
  nlp.xu = Eigen::Vector2d(kInf, 5.0);
  nlp.obj = [](const Eigen::VectorXd& x) {
    return (x[0] - 3) * (x[0] - 3) + (x[1] - 1) * (x[1] - 1);
  };
  nlp.obj_grad = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(Eigen::Vector2d(2 * (x[0] - 3), 2 * (x[1] - 1)));
  };
  nlp.obj_hess_structure = {{0, 0}, {1, 1}};
  nlp.obj_hess = [](const Eigen::VectorXd&) { return std::vector<double>{2.0, 2.0}; };

  const SolveResult r = solve(nlp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == Approx(3.0).margin(1e-6));
  CHECK(r.x[1] == 5.0);
  CHECK(r.objective == Approx(16.0).margin(1e-5));
}

TEST_CASE("contradictory constraint and bound is reported infeasible") {
  SparseNLP nlp;
  nlp.x0 = Eigen::VectorXd::Constant(1, 2.5);
  nlp.xl = Eigen::VectorXd::Constant(1, 2.0);
  nlp.xu = Eigen::VectorXd::Constant(1, kInf);
  nlp.obj = [](const Eigen::VectorXd& x) { return x[0]; };
  nlp.obj_grad = [](const Eigen::VectorXd&) {
    return Eigen::VectorXd(Eigen::VectorXd::Constant(1, 1.0));
  };
  auto& b = nlp.add_block("cap", 1);
  b.cl[0] = -kInf;
  b.cu[0] = 1.0;  // x^2 <= 1 contradicts x >= 2
  b.jac_structure = {{0, 0}};
  b.eval = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(Eigen::VectorXd::Constant(1, x[0] * x[0]));
  };
  b.jac = [](const Eigen::VectorXd& x) { return std::vector<double>{2 * x[0]}; };
  b.hess_structure = {{0, 0}};
  b.hess = [](const Eigen::VectorXd&, const Eigen::VectorXd& lam) {
    return std::vector<double>{2 * lam[0]};
  };

  const SolveResult r = solve(nlp);
  CHECK(r.status == SolveStatus::Infeasible);
}

TEST_CASE("crossed bounds are rejected before solving") {
  SparseNLP nlp;
  nlp.x0 = Eigen::VectorXd::Constant(1, 0.0);
  nlp.xl = Eigen::VectorXd::Constant(1, 1.0);
  nlp.xu = Eigen::VectorXd::Constant(1, -1.0);
  nlp.obj = [](const Eigen::VectorXd& x) { return x[0]; };
  nlp.obj_grad = [](const Eigen::VectorXd&) {
    return Eigen::VectorXd(Eigen::VectorXd::Constant(1, 1.0));
  };
  CHECK_THROWS_AS(solve(nlp), InfeasibleBoundsError);
}

TEST_CASE("check_derivatives separates exact, smoothed, and corrupted cases") {
  // Affine block: FD error at roundoff level.
  {
    SparseNLP nlp = circle_problem();
    auto& b = nlp.add_block("affine", 1);
    b.cl[0] = -kInf;
    b.cu[0] = 10.0;
    b.jac_structure = {{0, 0}, {0, 1}};
    b.eval = [](const Eigen::VectorXd& x) {
      return Eigen::VectorXd(Eigen::VectorXd::Constant(1, 3 * x[0] - 2 * x[1] + 1));
    };
    b.jac = [](const Eigen::VectorXd&) { return std::vector<double>{3.0, -2.0}; };
    const DerivReport rep = check_derivatives(nlp, Eigen::Vector2d(0.7, 0.9));
    CHECK(rep.pass());
    CHECK(rep.max_rel_error() <= 1e-6);
  }

  // Smoothed friction phi * sqrt(phi^2 + delta^2) is differentiable at 0.
  {
    const double delta = 1e-4;
    SparseNLP nlp;
    nlp.x0 = Eigen::VectorXd::Constant(1, 0.0);
    nlp.xl = Eigen::VectorXd::Constant(1, -10.0);
    nlp.xu = Eigen::VectorXd::Constant(1, 10.0);
    nlp.obj = [](const Eigen::VectorXd&) { return 0.0; };
    nlp.obj_grad = [](const Eigen::VectorXd&) {
      return Eigen::VectorXd(Eigen::VectorXd::Zero(1));
    };
    auto& b = nlp.add_block("friction", 1);
    b.cl[0] = -kInf;
    b.cu[0] = kInf;
    b.jac_structure = {{0, 0}};
    b.eval = [delta](const Eigen::VectorXd& x) {
      return Eigen::VectorXd(
          Eigen::VectorXd::Constant(1, x[0] * std::sqrt(x[0] * x[0] + delta * delta)));
    };
    b.jac = [delta](const Eigen::VectorXd& x) {
      const double s = std::sqrt(x[0] * x[0] + delta * delta);
      return std::vector<double>{s + x[0] * x[0] / s};
    };
    b.hess_structure = {{0, 0}};
    b.hess = [delta](const Eigen::VectorXd& x, const Eigen::VectorXd& lam) {
      const double s = std::sqrt(x[0] * x[0] + delta * delta);
      return std::vector<double>{lam[0] * (3 * x[0] / s - std::pow(x[0], 3) / (s * s * s))};
    };
    const DerivReport rep = check_derivatives(nlp, Eigen::VectorXd::Zero(1));
    CHECK(rep.pass());
  }

  // Corrupted entry (+10%) is flagged with its triplet position.
  {
    SparseNLP nlp = circle_problem();
    nlp.blocks[0].jac = [](const Eigen::VectorXd& x) {
      return std::vector<double>{2 * x[0] * 1.1, 2 * x[1]};
    };
    const DerivReport rep = check_derivatives(nlp, Eigen::Vector2d(0.7, 0.9));
    CHECK(!rep.pass());
    CHECK(rep.worst_jacobian.where == "circle");
    CHECK(rep.worst_jacobian.row == 0);
    CHECK(rep.worst_jacobian.col == 0);
  }

  // Missing structural entry shows up as a missing dependency.
  {
    SparseNLP nlp = circle_problem();
    nlp.blocks[0].jac_structure = {{0, 0}};
    nlp.blocks[0].jac = [](const Eigen::VectorXd& x) {
      return std::vector<double>{2 * x[0]};
    };
    const DerivReport rep = check_derivatives(nlp, Eigen::Vector2d(0.7, 0.9));
    CHECK(!rep.pass());
  }
}

TEST_CASE("warm start clips into the interior and converges fast") {
  const SparseNLP nlp = circle_problem();
  const SolveResult cold = solve(nlp);
  REQUIRE(cold.status == SolveStatus::Optimal);

  const SparseNLP warm = warm_start(nlp, cold);
  // The prior solution sits on the x/y >= 0 bound; the start must be interior.
  CHECK(warm.x0.minCoeff() > 0.0);
  const SolveResult hot = solve(warm);
  REQUIRE(hot.status == SolveStatus::Optimal);
  CHECK(hot.iterations <= 5);
  CHECK(hot.objective == Approx(cold.objective).margin(1e-6));

  SolveResult wrong = cold;
  wrong.x = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(warm_start(nlp, wrong), LayoutError);
}
