#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gasgrid/errors.hpp"
#include "gasgrid/profile.hpp"
#include "gasgrid/time_grid.hpp"
#include "gasgrid/units.hpp"

namespace gasgrid {

// All stored quantities are SI: W, J, kg/s, kg/m^3, m, s, $ and combinations.
// Conversions happen in network_io.

struct Bus {
  std::string id;
  Profile load;  // W
};

struct Line {
  std::string id;
  int from = -1, to = -1;  // bus indices
  double susceptance = 0.0;  // p.u.
  double limit = 0.0;        // W
};

struct Generator {
  std::string id;
  int bus = -1;
  double pmin = 0.0, pmax = 0.0;          // W
  double ramp = 0.0;                      // W per optimization step
  double r_up_max = 0.0, r_dn_max = 0.0;  // W
  double cost_energy = 0.0;               // $/J
  double cost_reserve = 0.0;              // $/W/s of procurement
  bool gas_fired = false;
  int gas_node = -1;       // junction index when gas_fired
  double heat_c0 = 0.0;    // kg/s
  double heat_c1 = 0.0;    // (kg/s)/W
};

struct PowerNetwork {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  int slack_bus = 0;

  int find_bus(const std::string& id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == id) return static_cast<int>(i);
    return -1;
  }
};

struct Junction {
  std::string id;
  double rho_min = 0.0, rho_max = 0.0;  // kg/m^3
  bool slack = false;
  Profile slack_density;  // kg/m^3, used only when slack
};

struct Pipe {
  std::string id;
  int from = -1, to = -1;  // junction indices
  double length = 0.0;     // m
  double diameter = 0.0;   // m
  double friction = 0.0;   // lambda, dimensionless
  double area = 0.0;       // m^2, defaults to pi D^2 / 4
  double wave_speed = 0.0; // m/s, defaults to the network reference
};

struct Compressor {
  std::string id;
  int pipe = -1;
  int orientation = +1;  // +1 boosts the pipe inlet, -1 the outlet
  double alpha_min = 1.0, alpha_max = 1.0;
  double power_max = 0.0;  // W
  double coeff = 0.0;      // epsilon, W s/kg
  double exponent = 0.0;   // h_g, in (0, 1)
};

enum class InjectionRole { Consumer, Supplier };

struct Injection {
  std::string id;
  int junction = -1;
  InjectionRole role = InjectionRole::Consumer;
  Profile flow_min, flow_max;  // kg/s; consumers >= 0, suppliers <= 0
  Profile price;               // $/kg
};

struct GasNetwork {
  std::vector<Junction> junctions;
  std::vector<Pipe> pipes;
  std::vector<Compressor> compressors;
  std::vector<Injection> injections;

  int find_junction(const std::string& id) const {
    for (std::size_t i = 0; i < junctions.size(); ++i)
      if (junctions[i].id == id) return static_cast<int>(i);
    return -1;
  }
  int find_pipe(const std::string& id) const {
    for (std::size_t i = 0; i < pipes.size(); ++i)
      if (pipes[i].id == id) return static_cast<int>(i);
    return -1;
  }
  /// Compressor attached to pipe p, or nullptr.
  const Compressor* compressor_on(int p) const {
    for (const auto& c : compressors)
      if (c.pipe == p) return &c;
    return nullptr;
  }
};

struct Uncertainty {
  enum class Kind { None, LoadFraction, Diagonal, Dense };
  Kind kind = Kind::None;
  double fraction = 0.0;     // std as a fraction of the bus load
  Eigen::VectorXd std_w;     // W, per bus (Diagonal)
  Eigen::MatrixXd cov_w2;    // W^2 (Dense)
  double eps_gen = 0.01;
  double eps_line = 0.1;

  /// Covariance of omega(t) across buses, W^2. LoadFraction tracks the load
  /// profile; the other kinds are constant in time.
  Eigen::MatrixXd cov_at(const PowerNetwork& power, double t_seconds) const {
    const Eigen::Index n = static_cast<Eigen::Index>(power.buses.size());
    switch (kind) {
      case Kind::None:
        return Eigen::MatrixXd::Zero(n, n);
      case Kind::LoadFraction: {
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double s = fraction * sample_profile(power.buses[i].load, t_seconds);
          cov(i, i) = s * s;
        }
        return cov;
      }
      case Kind::Diagonal: {
        if (std_w.size() != n) throw DomainError("uncertainty: std vector size mismatch");
        return std_w.array().square().matrix().asDiagonal();
      }
      case Kind::Dense:
        if (cov_w2.rows() != n || cov_w2.cols() != n)
          throw DomainError("uncertainty: covariance size mismatch");
        return cov_w2;
    }
    return Eigen::MatrixXd::Zero(n, n);
  }
};

struct JointNetwork {
  PowerNetwork power;
  GasNetwork gas;
  TimeGrid grid;
  Uncertainty uncertainty;
  UnitSystem units;
};

struct ValidationFinding {
  std::string where;
  std::string message;
};
using ValidationReport = std::vector<ValidationFinding>;

namespace detail {

template <class Edge>
bool connected(std::size_t n_nodes, const std::vector<Edge>& edges) {
  if (n_nodes == 0) return true;
  std::vector<int> parent(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) parent[i] = static_cast<int>(i);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : edges) {
    if (e.from < 0 || e.to < 0) continue;
    parent[find(e.from)] = find(e.to);
  }
  const int root = find(0);
  for (std::size_t i = 1; i < n_nodes; ++i)
    if (find(static_cast<int>(i)) != root) return false;
  return true;
}

inline bool profile_nonnegative(const Profile& p) {
  for (double v : p.values)
    if (v < 0) return false;
  return true;
}

inline bool profile_nonpositive(const Profile& p) {
  for (double v : p.values)
    if (v > 0) return false;
  return true;
}

}  // namespace detail

/// Checks every structural invariant and returns the violations found. An
/// empty report means the network is usable.
inline ValidationReport validate(const JointNetwork& net) {
  ValidationReport report;
  auto flag = [&](const std::string& where, const std::string& message) {
    report.push_back({where, message});
  };

  const auto& pw = net.power;
  if (pw.buses.empty()) flag("power", "no buses");
  if (!detail::connected(pw.buses.size(), pw.lines))
    flag("power", "bus graph is not connected");
  if (pw.slack_bus < 0 || pw.slack_bus >= static_cast<int>(pw.buses.size()))
    flag("power", "slack bus index out of range");
  for (const auto& l : pw.lines) {
    if (l.limit <= 0) flag("line " + l.id, "nonpositive flow limit");
    if (l.susceptance <= 0) flag("line " + l.id, "nonpositive susceptance");
  }
  for (const auto& g : pw.generators) {
    if (g.pmin > g.pmax) flag("generator " + g.id, "p_min exceeds p_max");
    if (g.r_up_max < 0 || g.r_dn_max < 0) flag("generator " + g.id, "negative reserve cap");
    if (g.ramp < 0) flag("generator " + g.id, "negative ramp limit");
    if (g.gas_fired &&
        (g.gas_node < 0 || g.gas_node >= static_cast<int>(net.gas.junctions.size())))
      flag("generator " + g.id, "gas generator references no existing junction");
  }

  const auto& gs = net.gas;
  if (!gs.junctions.empty() && !detail::connected(gs.junctions.size(), gs.pipes))
    flag("gas", "junction graph is not connected");
  for (const auto& j : gs.junctions) {
    if (!(j.rho_min < j.rho_max)) flag("junction " + j.id, "rho_min must be below rho_max");
    if (j.rho_min < 0) flag("junction " + j.id, "negative density bound");
    if (j.slack && j.slack_density.empty())
      flag("junction " + j.id, "slack junction without density profile");
  }
  for (const auto& p : gs.pipes) {
    if (p.length <= 0) flag("pipe " + p.id, "nonpositive length");
    if (p.diameter <= 0) flag("pipe " + p.id, "nonpositive diameter");
    if (p.area <= 0) flag("pipe " + p.id, "nonpositive area");
    if (p.friction <= 0) flag("pipe " + p.id, "nonpositive friction");
    if (p.wave_speed <= 0) flag("pipe " + p.id, "nonpositive wave speed");
  }
  for (const auto& c : gs.compressors) {
    if (c.pipe < 0 || c.pipe >= static_cast<int>(gs.pipes.size()))
      flag("compressor " + c.id, "references no existing pipe");
    if (c.alpha_min < 1.0) flag("compressor " + c.id, "alpha_min below 1");
    if (c.alpha_min > c.alpha_max) flag("compressor " + c.id, "alpha_min exceeds alpha_max");
    if (!(c.exponent > 0.0 && c.exponent < 1.0))
      flag("compressor " + c.id, "exponent h_g outside (0, 1)");
    if (c.power_max < 0) flag("compressor " + c.id, "negative power limit");
  }
  for (const auto& w : gs.injections) {
    if (w.junction < 0 || w.junction >= static_cast<int>(gs.junctions.size()))
      flag("injection " + w.id, "references no existing junction");
    if (w.role == InjectionRole::Consumer) {
      if (!detail::profile_nonnegative(w.flow_min) || !detail::profile_nonnegative(w.flow_max))
        flag("injection " + w.id, "consumer flows must be nonnegative");
    } else {
      if (!detail::profile_nonpositive(w.flow_min) || !detail::profile_nonpositive(w.flow_max))
        flag("injection " + w.id, "supplier flows must be nonpositive");
    }
  }

  try {
    net.grid.validate();
  } catch (const ConfigError& e) {
    flag("grid", e.what());
  }

  const auto& u = net.uncertainty;
  if (!(u.eps_gen > 0.0 && u.eps_gen < 0.5)) flag("uncertainty", "eps_gen outside (0, 0.5)");
  if (!(u.eps_line > 0.0 && u.eps_line < 0.5)) flag("uncertainty", "eps_line outside (0, 0.5)");
  if (u.kind == Uncertainty::Kind::Dense) {
    const auto& s = u.cov_w2;
    if (s.rows() != s.cols() ||
        s.rows() != static_cast<Eigen::Index>(pw.buses.size())) {
      flag("uncertainty", "covariance dimension mismatch");
    } else {
      if (!s.isApprox(s.transpose(), 1e-10)) flag("uncertainty", "sigma not symmetric");
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
      const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
      if (es.eigenvalues().minCoeff() < -1e-9 * scale) flag("uncertainty", "sigma not PSD");
    }
  }
  if (u.kind == Uncertainty::Kind::LoadFraction && u.fraction < 0)
    flag("uncertainty", "negative load fraction");

  if (net.units.calorific_j_per_kg <= 0) flag("units", "calorific value must be positive");
  if (net.units.sound_speed <= 0) flag("units", "sound speed must be positive");
  return report;
}

/// Profile resampled at consecutive grid points: values[k] = profile(k * step).
inline std::vector<double> sample_series(const Profile& p, double step_s, int n_points,
                                         bool allow_wrap = true) {
  if (!allow_wrap && !p.empty() && p.period_s() < step_s * (n_points - 1) - 1e-9)
    throw CoverageError("profile shorter than requested span and wrap disabled");
  std::vector<double> out(static_cast<std::size_t>(n_points));
  for (int k = 0; k < n_points; ++k) out[static_cast<std::size_t>(k)] = sample_profile(p, k * step_s);
  return out;
}

}  // namespace gasgrid
