#pragma once

// Canonical units: seconds, newtons, MPa, mm^2, mm, degrees C, grams.
namespace dtf::units {

inline constexpr double kMinute = 60.0;
inline constexpr double kHour = 3600.0;
inline constexpr double kDay = 86400.0;
inline constexpr double kYear = 365.0 * kDay;

// 1 MPa acting on 1 mm^2 is exactly 1 N.
inline constexpr double kNewtonPerMpaMm2 = 1.0;

inline constexpr double force_from_stress(double stress_mpa, double area_mm2) {
    return stress_mpa * area_mm2 * kNewtonPerMpaMm2;
}

}  // namespace dtf::units
