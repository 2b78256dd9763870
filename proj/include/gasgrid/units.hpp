#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "gasgrid/errors.hpp"

namespace gasgrid {

// Internal representation is SI throughout: Pa, kg/m^3, kg/s, W, J, m, s,
// and $ for money. Anything else is converted at the I/O boundary.
inline constexpr double kPsi = 6894.757;          // Pa
inline constexpr double kMmbtu = 1.055056e9;      // J
inline constexpr double kMegawattHour = 3.6e9;    // J
inline constexpr double kDefaultCalorific = 52.0e6;  // J/kg

/// Conversion context for unit tags whose factor is not fixed: pressure tags
/// applied to density fields (via pi = a^2 rho) and fuel tags (via the
/// calorific value of the gas).
struct UnitSystem {
  double calorific_j_per_kg = kDefaultCalorific;
  double sound_speed = 370.0;  // m/s, reference wave speed for psi<->kg/m^3

  double pressure_to_density(double pa) const { return pa / (sound_speed * sound_speed); }
  double density_to_pressure(double rho) const { return rho * sound_speed * sound_speed; }
};

/// Dimension family of a physical field; selects the accepted unit tags.
enum class Dimension {
  Length,       // m, km
  Duration,     // s, min, h
  Power,        // W, kW, MW, GW
  MassFlow,     // kg/s
  Density,      // kg/m3, or any pressure tag via a^2
  Pressure,     // Pa, kPa, MPa, bar, psi
  Area,         // m2
  Velocity,     // m/s
  EnergyPrice,  // $/MWh, $/J
  CapacityPrice,  // $/MW/h (also accepts $/MW, interpreted per hour)
  MassPrice,    // $/kg
  FuelOffset,   // kg/s, mmbtu/h
  FuelSlope,    // (kg/s)/W, mmbtu/MWh
  Scalar,       // dimensionless
};

namespace detail {

inline double fixed_factor(Dimension dim, std::string_view unit) {
  switch (dim) {
    case Dimension::Length:
      if (unit == "m") return 1.0;
      if (unit == "km") return 1e3;
      break;
    case Dimension::Duration:
      if (unit == "s") return 1.0;
      if (unit == "min") return 60.0;
      if (unit == "h") return 3600.0;
      break;
    case Dimension::Power:
      if (unit == "W") return 1.0;
      if (unit == "kW") return 1e3;
      if (unit == "MW") return 1e6;
      if (unit == "GW") return 1e9;
      break;
    case Dimension::MassFlow:
      if (unit == "kg/s") return 1.0;
      break;
    case Dimension::Pressure:
      if (unit == "Pa") return 1.0;
      if (unit == "kPa") return 1e3;
      if (unit == "MPa") return 1e6;
      if (unit == "bar") return 1e5;
      if (unit == "psi") return kPsi;
      break;
    case Dimension::Area:
      if (unit == "m2") return 1.0;
      break;
    case Dimension::Velocity:
      if (unit == "m/s") return 1.0;
      break;
    case Dimension::EnergyPrice:
      if (unit == "$/J") return 1.0;
      if (unit == "$/MWh") return 1.0 / kMegawattHour;
      break;
    case Dimension::CapacityPrice:
      // Internal: $ per W per second of procurement.
      if (unit == "$/W/s") return 1.0;
      if (unit == "$/MW/h" || unit == "$/MW") return 1.0 / (1e6 * 3600.0);
      break;
    case Dimension::MassPrice:
      if (unit == "$/kg") return 1.0;
      break;
    case Dimension::Scalar:
      if (unit.empty() || unit == "1" || unit == "p.u." || unit == "pu") return 1.0;
      break;
    default:
      break;
  }
  return 0.0;  // unknown
}

inline bool is_pressure_tag(std::string_view unit) {
  return fixed_factor(Dimension::Pressure, unit) != 0.0;
}

}  // namespace detail

/// Convert `value` tagged with `unit` into internal SI for the given
/// dimension. Throws UnitError on an unrecognized tag.
inline double to_si(double value, std::string_view unit, Dimension dim,
                    const UnitSystem& sys = {}) {
  switch (dim) {
    case Dimension::Density:
      if (unit == "kg/m3") return value;
      if (detail::is_pressure_tag(unit))
        return sys.pressure_to_density(value * detail::fixed_factor(Dimension::Pressure, unit));
      break;
    case Dimension::FuelOffset:
      if (unit == "kg/s") return value;
      if (unit == "mmbtu/h") return value * kMmbtu / 3600.0 / sys.calorific_j_per_kg;
      break;
    case Dimension::FuelSlope:
      if (unit == "kg/J" || unit == "(kg/s)/W") return value;
      if (unit == "mmbtu/MWh")
        return value * kMmbtu / kMegawattHour / sys.calorific_j_per_kg;
      break;
    default: {
      const double f = detail::fixed_factor(dim, unit);
      if (f != 0.0) return value * f;
      break;
    }
  }
  throw UnitError("unknown unit tag '" + std::string(unit) + "'");
}

/// Inverse of to_si for the same tag; to_si(from_si(x, u), u) == x.
inline double from_si(double value, std::string_view unit, Dimension dim,
                      const UnitSystem& sys = {}) {
  switch (dim) {
    case Dimension::Density:
      if (unit == "kg/m3") return value;
      if (detail::is_pressure_tag(unit))
        return sys.density_to_pressure(value) / detail::fixed_factor(Dimension::Pressure, unit);
      break;
    case Dimension::FuelOffset:
      if (unit == "kg/s") return value;
      if (unit == "mmbtu/h") return value / (kMmbtu / 3600.0 / sys.calorific_j_per_kg);
      break;
    case Dimension::FuelSlope:
      if (unit == "kg/J" || unit == "(kg/s)/W") return value;
      if (unit == "mmbtu/MWh")
        return value / (kMmbtu / kMegawattHour / sys.calorific_j_per_kg);
      break;
    default: {
      const double f = detail::fixed_factor(dim, unit);
      if (f != 0.0) return value / f;
      break;
    }
  }
  throw UnitError("unknown unit tag '" + std::string(unit) + "'");
}

inline double pa_from_psi(double psi) { return psi * kPsi; }
inline double psi_from_pa(double pa) { return pa / kPsi; }

}  // namespace gasgrid
