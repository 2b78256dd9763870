#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "gasgrid/gas_assembly.hpp"
#include "gasgrid/ipm.hpp"
#include "gasgrid/network.hpp"
#include "gasgrid/segmentation.hpp"

using namespace gasgrid;

namespace {

// Single 50 km pipe fed from a slack junction at 64 kg/m^3 with a pinned
// 100 kg/s offtake. Steady state: phi = 200 kg/m^2/s, rho^2 linear in x.
GasNetwork pipe_net() {
  GasNetwork net;
  net.junctions.push_back({"S", 1.0, 1e9, true, Profile::constant(64.0)});
  net.junctions.push_back({"J", 30.0, 80.0, false, {}});
  Pipe p;
  p.id = "P1";
  p.from = 0;
  p.to = 1;
  p.length = 50e3;
  p.diameter = 0.5;
  p.friction = 0.011;
  p.area = 0.5;
  p.wave_speed = 370.0;
  net.pipes.push_back(p);
  Injection d;
  d.id = "D1";
  d.junction = 1;
  d.role = InjectionRole::Consumer;
  d.flow_min = Profile::constant(100.0);
  d.flow_max = Profile::constant(100.0);
  d.price = Profile::constant(0.4);
  net.injections.push_back(d);
  return net;
}

// Same pipe with an inlet compressor and a delivery band the plain pipe
// cannot meet: a 60 kg/m^3 source needs alpha ~ 1.0757 (about 421 kW) to
// hold 62 kg/m^3 at the far end under 100 kg/s.
GasNetwork boost_net(double power_max) {
  GasNetwork net = pipe_net();
  net.junctions[0].slack_density = Profile::constant(60.0);
  net.junctions[1].rho_min = 62.0;
  net.injections[0].price = Profile::constant(0.0);
  Compressor c;
  c.id = "C1";
  c.pipe = 0;
  c.orientation = +1;
  c.alpha_min = 1.0;
  c.alpha_max = 1.5;
  c.power_max = power_max;
  c.coeff = 2e5;
  c.exponent = 0.2857;
  net.compressors.push_back(c);
  return net;
}

TimeGrid short_grid() {
  TimeGrid g;
  g.horizon_s = 7200;
  g.extended_s = 10800;
  g.opt_step_s = 1800;
  g.sim_step_s = 600;
  return g;
}

// rho(x) of the isothermal steady pipe: rho^2 falls at friction * phi^2 /
// (diameter * a^2) per metre.
double steady_rho(const Pipe& p, double rho_in, double phi, double x) {
  const double coef = p.friction * phi * phi / (p.diameter * p.wave_speed * p.wave_speed);
  return std::sqrt(rho_in * rho_in - coef * x);
}

const SparseNLP::Block& find_block(const SparseNLP& nlp, const std::string& name) {
  for (const auto& b : nlp.blocks)
    if (b.name == name) return b;
  throw std::logic_error("no block named " + name);
}

// Largest violation of block b at x, against its raw (unscaled) bounds.
double block_violation(const SparseNLP::Block& b, const Eigen::VectorXd& x) {
  const Eigen::VectorXd c = b.eval(x);
  double v = 0;
  for (int r = 0; r < b.rows; ++r)
    v = std::max(v, std::max(b.cl[r] - c[r], c[r] - b.cu[r]));
  return v;
}

double worst_violation(const SparseNLP& nlp, const Eigen::VectorXd& x) {
  double v = 0;
  for (const auto& b : nlp.blocks) v = std::max(v, block_violation(b, x));
  return v;
}

RobustBounds fan_bounds(int n_steps) {
  RobustBounds rb;
  rb.junction = {1};
  rb.d_max = Eigen::MatrixXd::Constant(1, n_steps, 150.0);
  rb.d_nom = Eigen::MatrixXd::Constant(1, n_steps, 100.0);
  rb.d_min = Eigen::MatrixXd::Constant(1, n_steps, 50.0);
  return rb;
}

}  // namespace

TEST_CASE("gas: pipe discretization honors the mesh cap") {
  Pipe p;
  p.length = 50e3;
  auto s = discretize_pipe(p, 10e3);
  CHECK(s.segments == 5);
  CHECK(s.dx == Catch::Approx(10e3));

  p.length = 55e3;
  s = discretize_pipe(p, 10e3);
  CHECK(s.segments == 6);
  CHECK(s.dx == Catch::Approx(55e3 / 6.0));

  p.length = 1e3;
  s = discretize_pipe(p, 10e3);
  CHECK(s.segments == 1);
  CHECK(s.dx == Catch::Approx(1e3));

  CHECK_THROWS_AS(discretize_pipe(p, 0.0), DomainError);
  p.length = 0.0;
  CHECK_THROWS_AS(discretize_pipe(p, 10e3), DomainError);
}

TEST_CASE("gas: segmentation assigns contiguous node ranges") {
  GasNetwork net = pipe_net();
  Pipe q = net.pipes[0];
  q.id = "P2";
  q.length = 30e3;
  net.pipes.push_back(q);
  auto seg = segment_network(net, 10e3);
  CHECK(seg.segments(0) == 5);
  CHECK(seg.segments(1) == 3);
  CHECK(seg.n_nodes == 6 + 4);
  CHECK(seg.node(0, 0) == 0);
  CHECK(seg.node(0, 5) == 5);
  CHECK(seg.node(1, 0) == 6);
  CHECK(seg.node(1, 3) == 9);
}

TEST_CASE("gas: linepack is the trapezoid of nodal density") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 10e3);

  Eigen::VectorXd rho = Eigen::VectorXd::Constant(seg.n_nodes, 55.0);
  CHECK(linepack(net, seg, rho) == Catch::Approx(55.0 * 0.5 * 50e3).epsilon(1e-12));

  // affine profile, mean 60: the trapezoid rule is exact
  for (int m = 0; m <= 5; ++m) rho[m] = 70.0 - 4.0 * m;
  CHECK(linepack(net, seg, rho) == Catch::Approx(60.0 * 0.5 * 50e3).epsilon(1e-12));

  Pipe q = net.pipes[0];
  q.id = "P2";
  q.length = 20e3;
  q.area = 0.3;
  net.pipes.push_back(q);
  seg = segment_network(net, 10e3);
  Eigen::VectorXd rho2 = Eigen::VectorXd::Constant(seg.n_nodes, 50.0);
  const double expect = 50.0 * (0.5 * 50e3 + 0.3 * 20e3);
  CHECK(linepack(net, seg, rho2) == Catch::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(linepack(net, seg, rho), LayoutError);
}

TEST_CASE("gas: quiescent network has zero residual") {
  GasNetwork net = pipe_net();
  net.injections.clear();
  net.junctions[0].slack_density = Profile::constant(60.0);
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  auto a = assemble_gas(net, seg, short_grid(), nlp);
  const auto& L = a.layout;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(nlp.n());
  for (int t = 0; t <= L.n_steps; ++t) {
    for (int j = 0; j < L.n_junc; ++j) x[L.jrho(0, j, t)] = 60.0;
    for (int nd = 0; nd < L.n_node; ++nd) {
      x[L.rho(0, nd, t)] = 60.0;
      x[L.phi(0, nd, t)] = 0.0;
    }
  }
  CHECK(worst_violation(nlp, x) <= 1e-12);
}

TEST_CASE("gas: steady closed form satisfies the discrete dynamics") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 25e3);
  GasOptions opt;
  opt.flux_smoothing = 1e-3;
  SparseNLP nlp;
  auto a = assemble_gas(net, seg, short_grid(), nlp, opt);
  const auto& L = a.layout;
  const auto& P = net.pipes[0];

  const double phi = 100.0 / P.area;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nlp.n());
  for (int t = 0; t <= L.n_steps; ++t) {
    x[L.jrho(0, 0, t)] = 64.0;
    x[L.jrho(0, 1, t)] = steady_rho(P, 64.0, phi, P.length);
    for (int m = 0; m <= seg.segments(0); ++m) {
      x[L.rho(0, m, t)] = steady_rho(P, 64.0, phi, m * seg.dx(0));
      x[L.phi(0, m, t)] = phi;
    }
  }
  for (int t = 0; t < L.n_steps; ++t) x[L.w(0, t)] = 100.0;

  CHECK(worst_violation(nlp, x) <= 1e-10);
  // the smoothing bias is the only momentum defect left
  CHECK(block_violation(find_block(nlp, "pipe_mass"), x) <= 1e-14);
}

TEST_CASE("gas: compressor link scales the boosted end density") {
  GasNetwork net = boost_net(1e6);
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  auto a = assemble_gas(net, seg, short_grid(), nlp);
  const auto& L = a.layout;
  const auto& blk = find_block(nlp, "compressor_link");
  CHECK(blk.rows == L.n_steps);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(nlp.n());
  for (int t = 0; t <= L.n_steps; ++t) {
    x[L.jrho(0, 0, t)] = 60.0;
    x[L.alpha(0, std::min(t, L.n_steps - 1))] = 1.5;
    x[L.rho(0, 0, t)] = 90.0;
  }
  Eigen::VectorXd c = blk.eval(x);
  CHECK(c.cwiseAbs().maxCoeff() <= 1e-12);

  for (int t = 0; t <= L.n_steps; ++t) x[L.rho(0, 0, t)] = 80.0;
  c = blk.eval(x);
  for (int r = 0; r < blk.rows; ++r) CHECK(c[r] == Catch::Approx(-10.0).epsilon(1e-12));
}

TEST_CASE("gas: compressor power block matches the closed form") {
  GasNetwork net = boost_net(1e6);
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  auto a = assemble_gas(net, seg, short_grid(), nlp);
  const auto& L = a.layout;
  const auto& blk = find_block(nlp, "compressor_power");

  // mdot = 100 kg/s, alpha = 1.4: 2e5/2 * 2 * 100 * (1.4^0.2857 - 1);
  // the flow smoothing biases the row by 5e-9 relative at this throughput
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nlp.n());
  for (int t = 0; t <= L.n_steps; ++t) x[L.phi(0, 0, t)] = 100.0 / net.pipes[0].area;
  for (int t = 0; t < L.n_steps; ++t) x[L.alpha(0, t)] = 1.4;
  const Eigen::VectorXd c = blk.eval(x);
  for (int r = 0; r < blk.rows; ++r)
    CHECK(c[r] == Catch::Approx(1e5 * 20.180460376706044).epsilon(1e-8));
  for (int r = 0; r < blk.rows; ++r) CHECK(blk.cu[r] == 1e6);
}

TEST_CASE("gas: junction bands live on junction densities") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  auto a = assemble_gas(net, seg, short_grid(), nlp);
  const auto& L = a.layout;
  for (int t = 0; t <= L.n_steps; ++t) {
    CHECK(nlp.xl[L.jrho(0, 1, t)] == 30.0);
    CHECK(nlp.xu[L.jrho(0, 1, t)] == 80.0);
    // pipe interior nodes carry only the positivity floor; the band reaches
    // them through the junction coupling rows
    CHECK(nlp.xl[L.rho(0, 1, t)] == 1.0);
    CHECK(nlp.xu[L.rho(0, 1, t)] > 1e18);
  }
}

TEST_CASE("gas: crossed injection bounds are rejected") {
  GasNetwork net = pipe_net();
  net.injections[0].flow_min = Profile::constant(50.0);
  net.injections[0].flow_max = Profile::constant(30.0);
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  CHECK_THROWS_AS(assemble_gas(net, seg, short_grid(), nlp), InfeasibleBoundsError);
}

TEST_CASE("gas: slackless component is rejected") {
  GasNetwork net = pipe_net();
  net.junctions[0].slack = false;
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  CHECK_THROWS_AS(assemble_gas(net, seg, short_grid(), nlp), ConfigError);
}

TEST_CASE("gas: steady solve reproduces the closed form") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  auto a = assemble_gas(net, seg, short_grid(), nlp);
  compose_objective(nlp, {a.cost});

  auto rep = check_derivatives(nlp, nlp.x0);
  REQUIRE(rep.pass());
  CHECK(rep.max_rel_error() <= 1e-5);

  auto res = solve(nlp, {});
  REQUIRE(res.status == SolveStatus::Optimal);
  CHECK(res.iterations < 60);

  const auto& L = a.layout;
  const auto& P = net.pipes[0];
  const double phi = 100.0 / P.area;
  for (int t = 0; t <= L.n_steps; ++t)
    for (int m = 0; m <= seg.segments(0); ++m) {
      CHECK(res.x[L.rho(0, m, t)] ==
            Catch::Approx(steady_rho(P, 64.0, phi, m * seg.dx(0))).margin(1e-4));
      CHECK(res.x[L.phi(0, m, t)] == Catch::Approx(phi).margin(1e-4));
    }
  CHECK(res.x[L.jrho(0, 1, 0)] == Catch::Approx(steady_rho(P, 64.0, phi, P.length)).margin(1e-4));

  // supply covers the offtake, billed cost is price * mass moved
  CHECK(net_outflow(net, seg, L, res.x, 0, 0, 0) == Catch::Approx(100.0).margin(1e-5));
  CHECK(trade_cost(net, L, res.x) == Catch::Approx(0.4 * 1800 * 100 * 4).epsilon(1e-8));

  // a steady problem solves to a time-constant, periodic trajectory
  double drift = 0, gap = 0;
  for (int m = 0; m <= seg.segments(0); ++m) {
    for (int t = 0; t <= L.n_steps; ++t)
      drift = std::max(drift, std::abs(res.x[L.rho(0, m, t)] - res.x[L.rho(0, m, 0)]));
    gap = std::max(gap, std::abs(res.x[L.rho(0, m, L.n_steps)] - res.x[L.rho(0, m, 0)]));
    gap = std::max(gap, std::abs(res.x[L.phi(0, m, L.n_steps)] - res.x[L.phi(0, m, 0)]));
  }
  CHECK(drift <= 1e-6);
  CHECK(gap <= 1e-9);
}

TEST_CASE("gas: transient solve conserves mass interval by interval") {
  GasNetwork net = pipe_net();
  Profile dem{{80, 120, 100, 80, 120, 100}, 1800};
  net.injections[0].flow_min = dem;
  net.injections[0].flow_max = dem;
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  auto a = assemble_gas(net, seg, short_grid(), nlp);
  compose_objective(nlp, {a.cost});
  auto res = solve(nlp, {});
  REQUIRE(res.status == SolveStatus::Optimal);

  const auto& L = a.layout;
  auto lp_at = [&](int t) {
    Eigen::VectorXd rho(seg.n_nodes);
    for (int nd = 0; nd < seg.n_nodes; ++nd) rho[nd] = res.x[L.rho(0, nd, t)];
    return linepack(net, seg, rho);
  };

  // stored mass change = step * (slack supply - offtake), exactly as the
  // cell updates telescope
  for (int t = 0; t < L.n_steps; ++t) {
    const double supply = net_outflow(net, seg, L, res.x, 0, 0, t);
    const double demand = res.x[L.w(0, t)];
    CHECK(demand == Catch::Approx(sample_profile(dem, t * 1800.0)).margin(1e-9));
    CHECK(lp_at(t + 1) - lp_at(t) ==
          Catch::Approx(L.dt * (supply - demand)).margin(1e-6));
  }

  // with flow toward the offtake, time-midpoint density falls along every
  // cell (the discrete momentum balance makes the drop strict)
  for (int t = 0; t < L.n_steps; ++t)
    for (int m = 0; m < seg.segments(0); ++m) {
      const double fhat = 0.25 * (res.x[L.phi(0, m, t)] + res.x[L.phi(0, m + 1, t)] +
                                  res.x[L.phi(0, m, t + 1)] + res.x[L.phi(0, m + 1, t + 1)]);
      const double r0 = 0.5 * (res.x[L.rho(0, m, t)] + res.x[L.rho(0, m, t + 1)]);
      const double r1 = 0.5 * (res.x[L.rho(0, m + 1, t)] + res.x[L.rho(0, m + 1, t + 1)]);
      REQUIRE(fhat > 0);
      CHECK(r0 - r1 > 0.1);
    }

  CHECK(trade_cost(net, L, res.x) == Catch::Approx(0.4 * 1800 * (80 + 120 + 100 + 80)).epsilon(1e-9));
}

TEST_CASE("gas: compressor boost hits the delivery band at minimum power") {
  GasNetwork net = boost_net(1e6);
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  auto a = assemble_gas(net, seg, short_grid(), nlp);
  compose_objective(nlp, {a.cost});
  auto res = solve(nlp, {});
  REQUIRE(res.status == SolveStatus::Optimal);

  const auto& L = a.layout;
  // alpha^2 (60^2 - rho_min^2 / alpha^2 ... ): the band pins the outlet, so
  // the boosted inlet satisfies (60 alpha)^2 - coef L = 62^2
  const double alpha_star = 1.0756654895619846;
  double amin = 10, amax = 0;
  for (int t = 0; t < L.n_steps; ++t) {
    amin = std::min(amin, res.x[L.alpha(0, t)]);
    amax = std::max(amax, res.x[L.alpha(0, t)]);
  }
  CHECK(amax - amin <= 1e-3);
  CHECK(amin == Catch::Approx(alpha_star).epsilon(1e-4));
  CHECK(res.x[L.jrho(0, 1, 0)] == Catch::Approx(62.0).margin(1e-2));
  CHECK(res.x[L.rho(0, 0, 0)] == Catch::Approx(64.53992937371908).epsilon(1e-4));

  // 421 kW of boost over the whole billing window
  const double p_star = 421149.36319653573;
  CHECK(compression_energy(net, seg, L, res.x) == Catch::Approx(p_star * 7200).epsilon(1e-3));

  auto dec = decision_from_solution(net, seg, L, res.x);
  CHECK(dec.alpha.cols() == L.n_points());
  CHECK(dec.alpha(0, L.n_steps) == dec.alpha(0, 0));
  CHECK(dec.w(0, L.n_steps) == dec.w(0, 0));
  CHECK(dec.mdot(0, 0) == Catch::Approx(100.0).epsilon(1e-3));

  auto costs = gas_objectives(net, dec, short_grid());
  CHECK(costs.trade == Catch::Approx(0.0).margin(1e-9));
  CHECK(costs.compression_energy == Catch::Approx(p_star * 7200).epsilon(3e-3));
}

TEST_CASE("gas: compressor power cap is enforced") {
  GasNetwork net = boost_net(3e5);  // below the 421 kW the band needs
  auto seg = segment_network(net, 25e3);
  SparseNLP nlp;
  auto a = assemble_gas(net, seg, short_grid(), nlp);
  compose_objective(nlp, {a.cost});
  auto res = solve(nlp, {});
  CHECK(res.status == SolveStatus::Infeasible);
}

TEST_CASE("gas: priced compression enters the objective") {
  GasNetwork net = boost_net(1e6);
  auto seg = segment_network(net, 25e3);
  GasOptions priced;
  priced.compression_price = 1e-6;

  SparseNLP plain_nlp, priced_nlp;
  auto plain = assemble_gas(net, seg, short_grid(), plain_nlp);
  auto withp = assemble_gas(net, seg, short_grid(), priced_nlp, priced);
  compose_objective(plain_nlp, {plain.cost});
  compose_objective(priced_nlp, {withp.cost});

  Eigen::VectorXd x = plain_nlp.x0;
  const auto& L = plain.layout;
  for (int t = 0; t < L.n_steps; ++t) x[L.alpha(0, t)] = 1.2;
  for (int t = 0; t <= L.n_steps; ++t) x[L.phi(0, 0, t)] = 300.0;

  const double extra = priced_nlp.obj(x) - plain_nlp.obj(x);
  const double energy = compression_energy(net, seg, L, x, -1, priced);
  CHECK(extra == Catch::Approx(1e-6 * energy).epsilon(1e-9));
}

TEST_CASE("gas: taps and fixed withdrawals add into the balance") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 25e3);
  const auto& P = net.pipes[0];
  TimeGrid grid = short_grid();

  SECTION("tap variable supplied by the caller") {
    SparseNLP nlp;
    nlp.x0 = nlp.xl = nlp.xu = Eigen::VectorXd::Constant(1, 50.0);
    nlp.names = {"fuel[0]"};
    nlp.var_scale = Eigen::VectorXd::Constant(1, 10.0);
    GasScenarioInput sc;
    sc.nominal = true;
    sc.taps.push_back({1, [](int) { return 0; }});
    auto a = assemble_gas(net, seg, grid, nlp, {}, {sc});
    compose_objective(nlp, {a.cost});
    auto res = solve(nlp, {});
    REQUIRE(res.status == SolveStatus::Optimal);
    const auto& L = a.layout;
    CHECK(net_outflow(net, seg, L, res.x, 0, 0, 0) == Catch::Approx(150.0).margin(1e-4));
    CHECK(res.x[L.jrho(0, 1, 0)] ==
          Catch::Approx(steady_rho(P, 64.0, 150.0 / P.area, P.length)).margin(1e-3));
  }

  SECTION("exogenous extra withdrawal") {
    SparseNLP nlp;
    GasScenarioInput sc;
    sc.nominal = true;
    sc.extra_withdrawal = Eigen::MatrixXd::Zero(2, grid.n_opt());
    sc.extra_withdrawal.row(1).setConstant(25.0);
    auto a = assemble_gas(net, seg, grid, nlp, {}, {sc});
    compose_objective(nlp, {a.cost});
    auto res = solve(nlp, {});
    REQUIRE(res.status == SolveStatus::Optimal);
    const auto& L = a.layout;
    CHECK(net_outflow(net, seg, L, res.x, 0, 0, 0) == Catch::Approx(125.0).margin(1e-4));
    CHECK(res.x[L.jrho(0, 1, 0)] ==
          Catch::Approx(steady_rho(P, 64.0, 125.0 / P.area, P.length)).margin(1e-3));
  }
}

TEST_CASE("gas: robust assembly shares controls across state copies") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 25e3);
  TimeGrid grid = short_grid();
  SparseNLP nlp;
  auto a = assemble_robust(net, seg, grid, fan_bounds(grid.n_opt()), nlp);
  compose_objective(nlp, {a.cost});

  const auto& L = a.layout;
  CHECK(L.n_scen == 3);
  CHECK(L.nominal == 1);
  REQUIRE(L.labels.size() == 3);
  CHECK(L.labels[0] == "max");
  CHECK(L.labels[1] == "nom");
  CHECK(L.labels[2] == "min");
  // one shared control track (6 offtake rates), three copies of 56 states
  CHECK(nlp.n() == 3 * 56 + 6);

  auto rep = check_derivatives(nlp, nlp.x0);
  REQUIRE(rep.pass());
  CHECK(rep.max_rel_error() <= 1e-5);
}

TEST_CASE("gas: scenario copies order with the withdrawal envelopes") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 25e3);
  TimeGrid grid = short_grid();
  const auto& P = net.pipes[0];
  SparseNLP nlp;
  auto a = assemble_robust(net, seg, grid, fan_bounds(grid.n_opt()), nlp);
  compose_objective(nlp, {a.cost});
  auto res = solve(nlp, {});
  REQUIRE(res.status == SolveStatus::Optimal);

  const auto& L = a.layout;
  // heavier withdrawal cannot raise any density: min >= nom >= max pointwise
  for (int t = 0; t <= L.n_steps; ++t)
    for (int nd = 0; nd < L.n_node; ++nd) {
      CHECK(res.x[L.rho(2, nd, t)] >= res.x[L.rho(1, nd, t)] - 1e-7);
      CHECK(res.x[L.rho(1, nd, t)] >= res.x[L.rho(0, nd, t)] - 1e-7);
    }
  // each copy settles on the steady profile of its own total offtake
  const int out = seg.segments(0);
  CHECK(res.x[L.rho(0, out, 0)] ==
        Catch::Approx(steady_rho(P, 64.0, 250.0 / P.area, P.length)).epsilon(1e-3));
  CHECK(res.x[L.rho(1, out, 0)] ==
        Catch::Approx(steady_rho(P, 64.0, 200.0 / P.area, P.length)).epsilon(1e-3));
  CHECK(res.x[L.rho(2, out, 0)] ==
        Catch::Approx(steady_rho(P, 64.0, 150.0 / P.area, P.length)).epsilon(1e-3));
}

TEST_CASE("gas: degenerate envelopes collapse to one trajectory") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 25e3);
  TimeGrid grid = short_grid();
  RobustBounds rb = fan_bounds(grid.n_opt());
  rb.d_max = rb.d_min = rb.d_nom;
  SparseNLP nlp;
  auto a = assemble_robust(net, seg, grid, rb, nlp);
  compose_objective(nlp, {a.cost});
  auto res = solve(nlp, {});
  REQUIRE(res.status == SolveStatus::Optimal);

  const auto& L = a.layout;
  double spread = 0;
  for (int t = 0; t <= L.n_steps; ++t)
    for (int nd = 0; nd < L.n_node; ++nd) {
      spread = std::max(spread, std::abs(res.x[L.rho(0, nd, t)] - res.x[L.rho(1, nd, t)]));
      spread = std::max(spread, std::abs(res.x[L.rho(2, nd, t)] - res.x[L.rho(1, nd, t)]));
    }
  CHECK(spread <= 1e-7);
}

TEST_CASE("gas: robust overload is detected as infeasible") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 25e3);
  TimeGrid grid = short_grid();
  RobustBounds rb = fan_bounds(grid.n_opt());
  // 500 kg/s total would need a density drop past vacuum
  rb.d_max.setConstant(400.0);
  SparseNLP nlp;
  auto a = assemble_robust(net, seg, grid, rb, nlp);
  compose_objective(nlp, {a.cost});
  auto res = solve(nlp, {});
  CHECK(res.status == SolveStatus::Infeasible);
}

TEST_CASE("gas: malformed envelopes are rejected") {
  GasNetwork net = pipe_net();
  auto seg = segment_network(net, 25e3);
  TimeGrid grid = short_grid();

  RobustBounds crossed = fan_bounds(grid.n_opt());
  crossed.d_min.setConstant(120.0);
  SparseNLP nlp1;
  CHECK_THROWS_AS(assemble_robust(net, seg, grid, crossed, nlp1), OrderingError);

  RobustBounds ragged = fan_bounds(grid.n_opt());
  ragged.d_nom = Eigen::MatrixXd::Constant(1, grid.n_opt() - 1, 100.0);
  SparseNLP nlp2;
  CHECK_THROWS_AS(assemble_robust(net, seg, grid, ragged, nlp2), LayoutError);

  RobustBounds astray = fan_bounds(grid.n_opt());
  astray.junction = {7};
  SparseNLP nlp3;
  CHECK_THROWS_AS(assemble_robust(net, seg, grid, astray, nlp3), MappingError);
}

TEST_CASE("gas: billed objectives integrate the decision") {
  GasNetwork net;
  net.junctions.push_back({"S", 1.0, 1e9, true, Profile::constant(64.0)});
  Injection d;
  d.id = "D1";
  d.junction = 0;
  d.role = InjectionRole::Consumer;
  d.flow_min = Profile::constant(0.0);
  d.flow_max = Profile::constant(20.0);
  d.price = Profile::constant(2.0);
  net.injections.push_back(d);

  TimeGrid grid;
  grid.horizon_s = 86400;
  grid.extended_s = 108000;
  grid.opt_step_s = 1800;
  grid.sim_step_s = 600;
  const int npts = grid.n_opt() + 1;

  GasDecision dec;
  dec.step_s = 1800;
  dec.alpha.resize(0, npts);
  dec.mdot.resize(0, npts);
  dec.w = Eigen::MatrixXd::Constant(1, npts, 10.0);

  // 10 kg/s at 2 $/kg for 24 h
  auto costs = gas_objectives(net, dec, grid);
  CHECK(costs.trade == Catch::Approx(1728000.0).epsilon(1e-12));
  CHECK(costs.compression_energy == 0.0);

  Compressor c;
  c.id = "C1";
  c.pipe = 0;
  c.coeff = 2.0;
  c.exponent = 0.2857;
  net.compressors.push_back(c);
  dec.alpha = Eigen::MatrixXd::Constant(1, npts, 1.0);
  dec.mdot = Eigen::MatrixXd::Constant(1, npts, 77.0);
  costs = gas_objectives(net, dec, grid);
  CHECK(costs.compression_energy == 0.0);  // unit ratio moves no energy

  dec.alpha.setConstant(1.4);
  dec.mdot.setConstant(100.0);
  costs = gas_objectives(net, dec, grid);
  CHECK(costs.compression_energy == Catch::Approx(20.180460376706044 * 86400).epsilon(1e-12));
}

TEST_CASE("gas: trapezoid quadrature tracks a dense reference") {
  GasNetwork net;
  net.junctions.push_back({"S", 1.0, 1e9, true, Profile::constant(64.0)});
  Compressor c;
  c.id = "C1";
  c.pipe = 0;
  c.coeff = 2e5;
  c.exponent = 0.2857;
  net.compressors.push_back(c);

  TimeGrid grid;
  grid.horizon_s = 86400;
  grid.extended_s = 108000;
  grid.opt_step_s = 1800;
  grid.sim_step_s = 600;
  const int npts = grid.n_opt() + 1;

  auto ratio = [](double tau) { return 1.2 + 0.15 * std::sin(2 * M_PI * tau / 86400.0); };
  GasDecision dec;
  dec.step_s = 1800;
  dec.w.resize(0, npts);
  dec.alpha.resize(1, npts);
  dec.mdot = Eigen::MatrixXd::Constant(1, npts, 100.0);
  for (int t = 0; t < npts; ++t) dec.alpha(0, t) = ratio(t * 1800.0);

  double dense = 0;
  const int steps = 86400;
  for (int i = 0; i <= steps; ++i) {
    const double wt = (i == 0 || i == steps) ? 0.5 : 1.0;
    dense += wt * 2e5 * 100.0 * (std::pow(ratio(static_cast<double>(i)), 0.2857) - 1.0);
  }
  const auto costs = gas_objectives(net, dec, grid);
  CHECK(costs.compression_energy == Catch::Approx(dense).epsilon(5e-3));
}

TEST_CASE("gas: objective guards reject malformed decisions") {
  GasNetwork net;
  net.junctions.push_back({"S", 1.0, 1e9, true, Profile::constant(64.0)});
  TimeGrid grid = short_grid();

  GasDecision dec;
  dec.step_s = 0.0;
  CHECK_THROWS_AS(gas_objectives(net, dec, grid), DomainError);

  dec.step_s = 1700.0;  // does not tile the 7200 s billing window
  dec.alpha.resize(0, 8);
  dec.mdot.resize(0, 8);
  dec.w.resize(0, 8);
  CHECK_THROWS_AS(gas_objectives(net, dec, grid), ConfigError);

  dec.step_s = 1800.0;
  dec.alpha.resize(0, 3);
  dec.mdot.resize(0, 3);
  dec.w.resize(0, 3);  // needs 5 points to span the window
  CHECK_THROWS_AS(gas_objectives(net, dec, grid), CoverageError);
}
