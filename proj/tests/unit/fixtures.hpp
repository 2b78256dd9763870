#pragma once

#include <json.hpp>

// Small, valid network documents shared across test files.
namespace fixtures {

/// 2 buses, 1 line, 2 generators (one gas fired), 2 junctions, 1 pipe,
/// 1 supplier. The smallest instance that exercises every schema block.
inline nlohmann::json minimal_doc() {
  return nlohmann::json::parse(R"json({
    "units": {
      "calorific_value": {"value": 52.0, "unit": "MJ/kg"},
      "sound_speed": {"value": 370.0, "unit": "m/s"}
    },
    "grid": {
      "horizon": {"value": 24, "unit": "h"},
      "extended": {"value": 30, "unit": "h"},
      "opt_step": {"value": 30, "unit": "min"},
      "sim_step": {"value": 10, "unit": "min"}
    },
    "power": {
      "slack_bus": "K1",
      "buses": [
        {"id": "K1", "load": {"unit": "MW", "values": [100, 110, 105]}},
        {"id": "K2", "load": {"unit": "MW", "values": [50, 55, 52]}}
      ],
      "lines": [
        {"id": "L1", "from": "K1", "to": "K2",
         "susceptance": {"value": 10.0, "unit": "p.u."},
         "limit": {"value": 150, "unit": "MW"}}
      ],
      "generators": [
        {"id": "G1", "bus": "K1",
         "pmin": {"value": 0, "unit": "MW"}, "pmax": {"value": 200, "unit": "MW"},
         "ramp": {"value": 60, "unit": "MW"},
         "reserve_up_max": {"value": 50, "unit": "MW"},
         "reserve_down_max": {"value": 50, "unit": "MW"},
         "cost_energy": {"value": 25, "unit": "$/MWh"},
         "cost_reserve": {"value": 5, "unit": "$/MW/h"}},
        {"id": "G2", "bus": "K2",
         "pmin": {"value": 0, "unit": "MW"}, "pmax": {"value": 120, "unit": "MW"},
         "ramp": {"value": 60, "unit": "MW"},
         "reserve_up_max": {"value": 40, "unit": "MW"},
         "reserve_down_max": {"value": 40, "unit": "MW"},
         "cost_energy": {"value": 32, "unit": "$/MWh"},
         "cost_reserve": {"value": 6, "unit": "$/MW/h"}}
      ]
    },
    "coupling": [
      {"generator": "G2", "gas_node": "J2",
       "c0": {"value": 0, "unit": "mmbtu/h"},
       "c1": {"value": 15, "unit": "mmbtu/MWh"}}
    ],
    "gas": {
      "junctions": [
        {"id": "J1", "rho_min": {"value": 30, "unit": "kg/m3"},
         "rho_max": {"value": 65, "unit": "kg/m3"}, "kind": "slack",
         "sigma": {"unit": "kg/m3", "values": [48]}},
        {"id": "J2", "rho_min": {"value": 30, "unit": "kg/m3"},
         "rho_max": {"value": 65, "unit": "kg/m3"}}
      ],
      "pipes": [
        {"id": "P1", "from": "J1", "to": "J2",
         "length": {"value": 20, "unit": "km"},
         "diameter": {"value": 0.9144, "unit": "m"},
         "friction": {"value": 0.011, "unit": "1"}}
      ],
      "compressors": [
        {"id": "C1", "pipe": "P1", "orientation": "+",
         "alpha_min": {"value": 1.0, "unit": "1"},
         "alpha_max": {"value": 1.6, "unit": "1"},
         "power_max": {"value": 3, "unit": "MW"},
         "coefficient": {"value": 200.0, "unit": "1"},
         "exponent": {"value": 0.2857, "unit": "1"}}
      ],
      "injections": [
        {"id": "W1", "junction": "J1", "role": "supplier",
         "flow_min": {"unit": "kg/s", "values": [-120]},
         "flow_max": {"unit": "kg/s", "values": [0]},
         "price": {"unit": "$/kg", "values": [0.08]}}
      ]
    },
    "uncertainty": {
      "type": "load_fraction", "fraction": 0.035,
      "eps_gen": 0.01, "eps_line": 0.1
    }
  })json");
}

}  // namespace fixtures
