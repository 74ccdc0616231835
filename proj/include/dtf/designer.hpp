#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dtf/device.hpp"
#include "dtf/matlib.hpp"

namespace dtf::design {

inline constexpr int kMaxCount = 1000;
inline constexpr double kMinArea = 1e-3;  // mm^2
inline constexpr double kMaxArea = 1e3;

struct TimeWindow {
    double lo_s = 0.0;
    double hi_s = std::numeric_limits<double>::infinity();
};

// Failure times under the lo/hi calibration curves for the chosen design;
// nullopt means no failure.
struct Bracket {
    std::optional<double> lo_s;
    std::optional<double> hi_s;
};

struct CountResult {
    int count = 0;
    std::optional<double> failure_time_s;  // mid curve
    Bracket bracket;
};

struct AreaResult {
    double a0_mm2 = 0.0;
    std::optional<double> failure_time_s;
    Bracket bracket;
    bool geometry_extrapolation = true;
};

// Failure time of n constraints of one material and area against f_res,
// on the given calibration curve. Infinity when it never fails.
double failure_time(const MaterialLibrary& lib, const std::string& material, const std::string& condition,
                    Calibration calib, int count, double a0_mm2, double f_res_n);

// Smallest n in [1, 1000] whose failure time lies in the window.
// Throws Infeasible or MissingCurve.
CountResult solve_count(const MaterialLibrary& lib, const std::string& material, const std::string& condition,
                        double a0_mm2, double f_res_n, TimeWindow window);

// Area in [1e-3, 1e3] mm^2 placing the failure time in the window, as close
// as possible to the material's tested A0 (or hitting the window middle when
// no tested A0 is recorded). Throws Infeasible or MissingCurve.
AreaResult solve_area(const MaterialLibrary& lib, const std::string& material, const std::string& condition,
                      int count, double f_res_n, TimeWindow window);

struct MarginRow {
    std::string constraint_id;
    std::string storage_id;
    double f_max0_n = 0.0;  // group aggregate
    double f_res_n = 0.0;
    double ratio = 0.0;
    double margin = 0.0;
    bool pass = false;
};

// pass iff f_max0 >= (1 + m) * f_res, boundary inclusive.
std::vector<MarginRow> margin_report(const DeviceSpec& spec, const MaterialLibrary& lib, double margin = 0.2);

bool margin_passes(double f_max0_n, double f_res_n, double margin);

}  // namespace dtf::design
