#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "gasgrid/network.hpp"

namespace gasgrid {

using nlohmann::json;

namespace io_detail {

inline const json& req(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end())
    throw SchemaError(where + ": missing field '" + key + "'");
  return *it;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw SchemaError(where + ": expected a number");
  return j.get<double>();
}

/// Physical scalar: {"value": x, "unit": "..."} or a bare number taken as SI.
inline double quantity(const json& j, Dimension dim, const UnitSystem& sys,
                       const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_object()) throw SchemaError(where + ": expected {value, unit} or number");
  const double v = number(req(j, "value", where), where + ".value");
  const std::string unit = req(j, "unit", where).get<std::string>();
  try {
    return to_si(v, unit, dim, sys);
  } catch (const UnitError& e) {
    throw UnitError(where + ": " + e.what());
  }
}

/// Profile: bare number or {value, unit} for constants, or
/// {"unit": ..., "values": [...], "step": duration (default 1 h)}.
inline Profile profile(const json& j, Dimension dim, const UnitSystem& sys,
                       const std::string& where) {
  Profile p;
  if (j.is_number() || (j.is_object() && j.contains("value"))) {
    p.values = {quantity(j, dim, sys, where)};
    return p;
  }
  if (!j.is_object() || !j.contains("values"))
    throw SchemaError(where + ": expected a profile with 'values'");
  const std::string unit =
      j.contains("unit") ? j.at("unit").get<std::string>() : std::string();
  if (j.contains("step"))
    p.step_s = quantity(j.at("step"), Dimension::Duration, sys, where + ".step");
  for (const auto& v : j.at("values")) {
    const double raw = number(v, where + ".values[]");
    p.values.push_back(unit.empty() ? raw : to_si(raw, unit, dim, sys));
  }
  if (p.values.empty()) throw SchemaError(where + ": profile has no samples");
  return p;
}

inline json quantity_out(double si_value, const char* si_unit) {
  return json{{"value", si_value}, {"unit", si_unit}};
}

inline json profile_out(const Profile& p, const char* si_unit) {
  json j;
  j["unit"] = si_unit;
  j["step"] = quantity_out(p.step_s, "s");
  j["values"] = p.values;
  return j;
}

}  // namespace io_detail

/// Parses a network document. Fills defaults, converts to SI, resolves all id
/// references. Throws SchemaError, UnitError, or ReferenceError.
inline JointNetwork parse_network(const json& doc) {
  using namespace io_detail;
  if (!doc.is_object()) throw SchemaError("document: expected a JSON object");
  JointNetwork net;

  if (doc.contains("units")) {
    const json& u = doc.at("units");
    if (u.contains("calorific_value"))
      net.units.calorific_j_per_kg = [&] {
        const json& c = u.at("calorific_value");
        const double v = number(req(c, "value", "units.calorific_value"), "units.calorific_value");
        const std::string unit = req(c, "unit", "units.calorific_value").get<std::string>();
        if (unit == "J/kg") return v;
        if (unit == "MJ/kg") return v * 1e6;
        if (unit == "GJ/kg") return v * 1e9;
        throw UnitError("units.calorific_value: unknown unit tag '" + unit + "'");
      }();
    if (u.contains("sound_speed"))
      net.units.sound_speed =
          quantity(u.at("sound_speed"), Dimension::Velocity, net.units, "units.sound_speed");
  }
  const UnitSystem& sys = net.units;

  if (doc.contains("grid")) {
    const json& g = doc.at("grid");
    auto dur = [&](const char* key, double dflt) {
      return g.contains(key) ? quantity(g.at(key), Dimension::Duration, sys,
                                        std::string("grid.") + key)
                             : dflt;
    };
    net.grid.horizon_s = dur("horizon", net.grid.horizon_s);
    net.grid.extended_s = dur("extended", net.grid.extended_s);
    net.grid.opt_step_s = dur("opt_step", net.grid.opt_step_s);
    net.grid.sim_step_s = dur("sim_step", net.grid.sim_step_s);
  }

  // Power side.
  const json& pw = req(doc, "power", "document");
  for (const auto& jb : req(pw, "buses", "power")) {
    Bus b;
    b.id = req(jb, "id", "power.buses[]").get<std::string>();
    b.load = profile(req(jb, "load", "bus " + b.id), Dimension::Power, sys, "bus " + b.id + ".load");
    net.power.buses.push_back(std::move(b));
  }
  auto bus_index = [&](const std::string& id, const std::string& where) {
    const int k = net.power.find_bus(id);
    if (k < 0) throw ReferenceError(where + ": unknown bus '" + id + "'");
    return k;
  };
  if (pw.contains("lines"))
    for (const auto& jl : pw.at("lines")) {
      Line l;
      l.id = req(jl, "id", "power.lines[]").get<std::string>();
      const std::string where = "line " + l.id;
      l.from = bus_index(req(jl, "from", where).get<std::string>(), where);
      l.to = bus_index(req(jl, "to", where).get<std::string>(), where);
      l.susceptance = quantity(req(jl, "susceptance", where), Dimension::Scalar, sys,
                               where + ".susceptance");
      l.limit = quantity(req(jl, "limit", where), Dimension::Power, sys, where + ".limit");
      net.power.lines.push_back(std::move(l));
    }
  for (const auto& jg : req(pw, "generators", "power")) {
    Generator g;
    g.id = req(jg, "id", "power.generators[]").get<std::string>();
    const std::string where = "generator " + g.id;
    g.bus = bus_index(req(jg, "bus", where).get<std::string>(), where);
    g.pmin = quantity(req(jg, "pmin", where), Dimension::Power, sys, where + ".pmin");
    g.pmax = quantity(req(jg, "pmax", where), Dimension::Power, sys, where + ".pmax");
    g.ramp = jg.contains("ramp")
                 ? quantity(jg.at("ramp"), Dimension::Power, sys, where + ".ramp")
                 : (g.pmax - g.pmin);
    g.r_up_max = jg.contains("reserve_up_max")
                     ? quantity(jg.at("reserve_up_max"), Dimension::Power, sys, where)
                     : 0.0;
    g.r_dn_max = jg.contains("reserve_down_max")
                     ? quantity(jg.at("reserve_down_max"), Dimension::Power, sys, where)
                     : 0.0;
    g.cost_energy = quantity(req(jg, "cost_energy", where), Dimension::EnergyPrice, sys,
                             where + ".cost_energy");
    g.cost_reserve = jg.contains("cost_reserve")
                         ? quantity(jg.at("cost_reserve"), Dimension::CapacityPrice, sys,
                                    where + ".cost_reserve")
                         : 0.0;
    net.power.generators.push_back(std::move(g));
  }
  {
    const std::string slack = req(pw, "slack_bus", "power").get<std::string>();
    net.power.slack_bus = bus_index(slack, "power.slack_bus");
  }

  // Gas side.
  const json& gs = req(doc, "gas", "document");
  for (const auto& jj : req(gs, "junctions", "gas")) {
    Junction j;
    j.id = req(jj, "id", "gas.junctions[]").get<std::string>();
    const std::string where = "junction " + j.id;
    j.rho_min = quantity(req(jj, "rho_min", where), Dimension::Density, sys, where + ".rho_min");
    j.rho_max = quantity(req(jj, "rho_max", where), Dimension::Density, sys, where + ".rho_max");
    const std::string kind =
        jj.contains("kind") ? jj.at("kind").get<std::string>() : "nonslack";
    if (kind != "slack" && kind != "nonslack")
      throw SchemaError(where + ": kind must be 'slack' or 'nonslack'");
    j.slack = (kind == "slack");
    if (j.slack)
      j.slack_density =
          profile(req(jj, "sigma", where), Dimension::Density, sys, where + ".sigma");
    net.gas.junctions.push_back(std::move(j));
  }
  auto junction_index = [&](const std::string& id, const std::string& where) {
    const int k = net.gas.find_junction(id);
    if (k < 0) throw ReferenceError(where + ": unknown junction '" + id + "'");
    return k;
  };
  for (const auto& jp : req(gs, "pipes", "gas")) {
    Pipe p;
    p.id = req(jp, "id", "gas.pipes[]").get<std::string>();
    const std::string where = "pipe " + p.id;
    p.from = junction_index(req(jp, "from", where).get<std::string>(), where);
    p.to = junction_index(req(jp, "to", where).get<std::string>(), where);
    p.length = quantity(req(jp, "length", where), Dimension::Length, sys, where + ".length");
    p.diameter =
        quantity(req(jp, "diameter", where), Dimension::Length, sys, where + ".diameter");
    p.friction =
        quantity(req(jp, "friction", where), Dimension::Scalar, sys, where + ".friction");
    p.area = jp.contains("area")
                 ? quantity(jp.at("area"), Dimension::Area, sys, where + ".area")
                 : M_PI * p.diameter * p.diameter / 4.0;
    p.wave_speed = jp.contains("wave_speed")
                       ? quantity(jp.at("wave_speed"), Dimension::Velocity, sys, where)
                       : sys.sound_speed;
    net.gas.pipes.push_back(std::move(p));
  }
  if (gs.contains("compressors"))
    for (const auto& jc : gs.at("compressors")) {
      Compressor c;
      c.id = req(jc, "id", "gas.compressors[]").get<std::string>();
      const std::string where = "compressor " + c.id;
      const std::string pipe_id = req(jc, "pipe", where).get<std::string>();
      c.pipe = net.gas.find_pipe(pipe_id);
      if (c.pipe < 0) throw ReferenceError(where + ": unknown pipe '" + pipe_id + "'");
      const std::string orient = req(jc, "orientation", where).get<std::string>();
      if (orient != "+" && orient != "-")
        throw SchemaError(where + ": orientation must be '+' or '-'");
      c.orientation = (orient == "+") ? +1 : -1;
      c.alpha_min = quantity(req(jc, "alpha_min", where), Dimension::Scalar, sys, where);
      c.alpha_max = quantity(req(jc, "alpha_max", where), Dimension::Scalar, sys, where);
      c.power_max = quantity(req(jc, "power_max", where), Dimension::Power, sys, where);
      c.coeff = quantity(req(jc, "coefficient", where), Dimension::Scalar, sys, where);
      c.exponent = quantity(req(jc, "exponent", where), Dimension::Scalar, sys, where);
      net.gas.compressors.push_back(std::move(c));
    }
  if (gs.contains("injections"))
    for (const auto& jw : gs.at("injections")) {
      Injection w;
      w.id = req(jw, "id", "gas.injections[]").get<std::string>();
      const std::string where = "injection " + w.id;
      w.junction = junction_index(req(jw, "junction", where).get<std::string>(), where);
      const std::string role = req(jw, "role", where).get<std::string>();
      if (role != "consumer" && role != "supplier")
        throw SchemaError(where + ": role must be 'consumer' or 'supplier'");
      w.role = (role == "consumer") ? InjectionRole::Consumer : InjectionRole::Supplier;
      w.flow_min =
          profile(req(jw, "flow_min", where), Dimension::MassFlow, sys, where + ".flow_min");
      w.flow_max =
          profile(req(jw, "flow_max", where), Dimension::MassFlow, sys, where + ".flow_max");
      w.price = jw.contains("price")
                    ? profile(jw.at("price"), Dimension::MassPrice, sys, where + ".price")
                    : Profile::constant(0.0);
      net.gas.injections.push_back(std::move(w));
    }

  // Coupling: the only place generators acquire gas identity.
  if (doc.contains("coupling"))
    for (const auto& jc : doc.at("coupling")) {
      const std::string gen_id = req(jc, "generator", "coupling[]").get<std::string>();
      const std::string where = "coupling " + gen_id;
      Generator* gen = nullptr;
      for (auto& g : net.power.generators)
        if (g.id == gen_id) gen = &g;
      if (!gen) throw ReferenceError(where + ": unknown generator '" + gen_id + "'");
      gen->gas_fired = true;
      gen->gas_node =
          junction_index(req(jc, "gas_node", where).get<std::string>(), where);
      gen->heat_c0 = jc.contains("c0")
                         ? quantity(jc.at("c0"), Dimension::FuelOffset, sys, where + ".c0")
                         : 0.0;
      gen->heat_c1 = quantity(req(jc, "c1", where), Dimension::FuelSlope, sys, where + ".c1");
    }

  // Uncertainty.
  if (doc.contains("uncertainty")) {
    const json& ju = doc.at("uncertainty");
    const std::string type =
        ju.contains("type") ? ju.at("type").get<std::string>() : "none";
    auto& u = net.uncertainty;
    if (type == "none") {
      u.kind = Uncertainty::Kind::None;
    } else if (type == "load_fraction") {
      u.kind = Uncertainty::Kind::LoadFraction;
      u.fraction = number(req(ju, "fraction", "uncertainty"), "uncertainty.fraction");
    } else if (type == "diagonal") {
      u.kind = Uncertainty::Kind::Diagonal;
      const json& js = req(ju, "std", "uncertainty");
      const std::string unit =
          js.contains("unit") ? js.at("unit").get<std::string>() : "W";
      const auto& vals = req(js, "values", "uncertainty.std");
      u.std_w.resize(static_cast<Eigen::Index>(vals.size()));
      Eigen::Index i = 0;
      for (const auto& v : vals)
        u.std_w[i++] = to_si(number(v, "uncertainty.std.values[]"), unit, Dimension::Power, sys);
    } else if (type == "dense") {
      u.kind = Uncertainty::Kind::Dense;
      const json& jc = req(ju, "cov", "uncertainty");
      const std::string unit =
          jc.contains("unit") ? jc.at("unit").get<std::string>() : "W2";
      double f = 1.0;
      if (unit == "W2") f = 1.0;
      else if (unit == "MW2") f = 1e12;
      else throw UnitError("uncertainty.cov: unknown unit tag '" + unit + "'");
      const auto& rows = req(jc, "matrix", "uncertainty.cov");
      const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
      u.cov_w2.resize(n, n);
      Eigen::Index r = 0;
      for (const auto& row : rows) {
        if (static_cast<Eigen::Index>(row.size()) != n)
          throw SchemaError("uncertainty.cov: matrix must be square");
        Eigen::Index c = 0;
        for (const auto& v : row) u.cov_w2(r, c++) = f * number(v, "uncertainty.cov[]");
        ++r;
      }
    } else {
      throw SchemaError("uncertainty.type must be none|load_fraction|diagonal|dense");
    }
    if (ju.contains("eps_gen")) u.eps_gen = number(ju.at("eps_gen"), "uncertainty.eps_gen");
    if (ju.contains("eps_line")) u.eps_line = number(ju.at("eps_line"), "uncertainty.eps_line");
  }

  return net;
}

inline JointNetwork parse_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open network file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("network file is not valid JSON: ") + e.what());
  }
  return parse_network(doc);
}

/// Canonical serialization: SI unit tags, defaults written out, references by
/// id. parse_network(serialize(net)) reproduces net exactly.
inline json serialize(const JointNetwork& net) {
  using namespace io_detail;
  json doc;
  doc["units"] = {{"calorific_value", quantity_out(net.units.calorific_j_per_kg / 1e6, "MJ/kg")},
                  {"sound_speed", quantity_out(net.units.sound_speed, "m/s")}};
  doc["grid"] = {{"horizon", quantity_out(net.grid.horizon_s, "s")},
                 {"extended", quantity_out(net.grid.extended_s, "s")},
                 {"opt_step", quantity_out(net.grid.opt_step_s, "s")},
                 {"sim_step", quantity_out(net.grid.sim_step_s, "s")}};

  json buses = json::array();
  for (const auto& b : net.power.buses)
    buses.push_back({{"id", b.id}, {"load", profile_out(b.load, "W")}});
  json lines = json::array();
  for (const auto& l : net.power.lines)
    lines.push_back({{"id", l.id},
                     {"from", net.power.buses[static_cast<std::size_t>(l.from)].id},
                     {"to", net.power.buses[static_cast<std::size_t>(l.to)].id},
                     {"susceptance", quantity_out(l.susceptance, "p.u.")},
                     {"limit", quantity_out(l.limit, "W")}});
  json gens = json::array();
  json coupling = json::array();
  for (const auto& g : net.power.generators) {
    gens.push_back({{"id", g.id},
                    {"bus", net.power.buses[static_cast<std::size_t>(g.bus)].id},
                    {"pmin", quantity_out(g.pmin, "W")},
                    {"pmax", quantity_out(g.pmax, "W")},
                    {"ramp", quantity_out(g.ramp, "W")},
                    {"reserve_up_max", quantity_out(g.r_up_max, "W")},
                    {"reserve_down_max", quantity_out(g.r_dn_max, "W")},
                    {"cost_energy", quantity_out(g.cost_energy, "$/J")},
                    {"cost_reserve", quantity_out(g.cost_reserve, "$/W/s")}});
    if (g.gas_fired)
      coupling.push_back(
          {{"generator", g.id},
           {"gas_node", net.gas.junctions[static_cast<std::size_t>(g.gas_node)].id},
           {"c0", quantity_out(g.heat_c0, "kg/s")},
           {"c1", quantity_out(g.heat_c1, "(kg/s)/W")}});
  }
  doc["power"] = {{"buses", buses},
                  {"lines", lines},
                  {"generators", gens},
                  {"slack_bus", net.power.buses[static_cast<std::size_t>(net.power.slack_bus)].id}};
  doc["coupling"] = coupling;

  json junctions = json::array();
  for (const auto& j : net.gas.junctions) {
    json jj = {{"id", j.id},
               {"rho_min", quantity_out(j.rho_min, "kg/m3")},
               {"rho_max", quantity_out(j.rho_max, "kg/m3")},
               {"kind", j.slack ? "slack" : "nonslack"}};
    if (j.slack) jj["sigma"] = profile_out(j.slack_density, "kg/m3");
    junctions.push_back(std::move(jj));
  }
  json pipes = json::array();
  for (const auto& p : net.gas.pipes)
    pipes.push_back({{"id", p.id},
                     {"from", net.gas.junctions[static_cast<std::size_t>(p.from)].id},
                     {"to", net.gas.junctions[static_cast<std::size_t>(p.to)].id},
                     {"length", quantity_out(p.length, "m")},
                     {"diameter", quantity_out(p.diameter, "m")},
                     {"friction", quantity_out(p.friction, "1")},
                     {"area", quantity_out(p.area, "m2")},
                     {"wave_speed", quantity_out(p.wave_speed, "m/s")}});
  json compressors = json::array();
  for (const auto& c : net.gas.compressors)
    compressors.push_back({{"id", c.id},
                           {"pipe", net.gas.pipes[static_cast<std::size_t>(c.pipe)].id},
                           {"orientation", c.orientation > 0 ? "+" : "-"},
                           {"alpha_min", quantity_out(c.alpha_min, "1")},
                           {"alpha_max", quantity_out(c.alpha_max, "1")},
                           {"power_max", quantity_out(c.power_max, "W")},
                           {"coefficient", quantity_out(c.coeff, "1")},
                           {"exponent", quantity_out(c.exponent, "1")}});
  json injections = json::array();
  for (const auto& w : net.gas.injections)
    injections.push_back(
        {{"id", w.id},
         {"junction", net.gas.junctions[static_cast<std::size_t>(w.junction)].id},
         {"role", w.role == InjectionRole::Consumer ? "consumer" : "supplier"},
         {"flow_min", profile_out(w.flow_min, "kg/s")},
         {"flow_max", profile_out(w.flow_max, "kg/s")},
         {"price", profile_out(w.price, "$/kg")}});
  doc["gas"] = {{"junctions", junctions},
                {"pipes", pipes},
                {"compressors", compressors},
                {"injections", injections}};

  json ju;
  switch (net.uncertainty.kind) {
    case Uncertainty::Kind::None:
      ju["type"] = "none";
      break;
    case Uncertainty::Kind::LoadFraction:
      ju["type"] = "load_fraction";
      ju["fraction"] = net.uncertainty.fraction;
      break;
    case Uncertainty::Kind::Diagonal: {
      ju["type"] = "diagonal";
      std::vector<double> vals(net.uncertainty.std_w.data(),
                               net.uncertainty.std_w.data() + net.uncertainty.std_w.size());
      ju["std"] = {{"unit", "W"}, {"values", vals}};
      break;
    }
    case Uncertainty::Kind::Dense: {
      ju["type"] = "dense";
      json rows = json::array();
      for (Eigen::Index r = 0; r < net.uncertainty.cov_w2.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < net.uncertainty.cov_w2.cols(); ++c)
          row.push_back(net.uncertainty.cov_w2(r, c));
        rows.push_back(std::move(row));
      }
      ju["cov"] = {{"unit", "W2"}, {"matrix", rows}};
      break;
    }
  }
  ju["eps_gen"] = net.uncertainty.eps_gen;
  ju["eps_line"] = net.uncertainty.eps_line;
  doc["uncertainty"] = ju;
  return doc;
}

}  // namespace gasgrid
