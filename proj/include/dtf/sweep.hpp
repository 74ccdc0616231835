#pragma once

#include <span>
#include <string>
#include <vector>

#include "dtf/device.hpp"
#include "dtf/matlib.hpp"
#include "dtf/simengine.hpp"

// Batch kernels over independent failure-time evaluations. Each parallel
// kernel has a `_serial` twin with the same contract; tests hold them equal
// and dtf_bench compares their throughput.
namespace dtf::sweep {

// Failure time (infinity = never) for every count 1..max_count of
// constraints with per-unit capacity `unit_capacity_n`.
std::vector<double> count_failure_times(const DegradationCurve& curve, double unit_capacity_n, double f_res_n,
                                        int max_count);
std::vector<double> count_failure_times_serial(const DegradationCurve& curve, double unit_capacity_n,
                                               double f_res_n, int max_count);

// Failure time for each cross-section in `areas_mm2`.
std::vector<double> area_failure_times(const DegradationCurve& curve, double sigma_i_mpa, int count,
                                       double f_res_n, std::span<const double> areas_mm2);
std::vector<double> area_failure_times_serial(const DegradationCurve& curve, double sigma_i_mpa, int count,
                                              double f_res_n, std::span<const double> areas_mm2);

struct RunRequest {
    const DeviceSpec* device = nullptr;
    const Scenario* scenario = nullptr;
    sim::SimOptions options;
};

struct RunResult {
    sim::TimelineReport report;
    std::string error;  // non-empty when the run threw
};

// Independent simulations over one shared library snapshot.
std::vector<RunResult> simulate_batch(std::span<const RunRequest> runs, const MaterialLibrary& lib);
std::vector<RunResult> simulate_batch_serial(std::span<const RunRequest> runs, const MaterialLibrary& lib);

}  // namespace dtf::sweep
