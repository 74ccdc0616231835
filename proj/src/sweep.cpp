#include "dtf/sweep.hpp"

#include <limits>

#include "dtf/units.hpp"

namespace dtf::sweep {

namespace {

double never_to_inf(std::optional<double> t) { return t ? *t : std::numeric_limits<double>::infinity(); }

RunResult run_one(const RunRequest& r, const MaterialLibrary& lib) {
    RunResult out;
    try {
        out.report = sim::simulate(*r.device, *r.scenario, lib, r.options);
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

}  // namespace

std::vector<double> count_failure_times(const DegradationCurve& curve, double unit_capacity_n, double f_res_n,
                                        int max_count) {
    std::vector<double> out(static_cast<std::size_t>(std::max(0, max_count)));
    const int n = static_cast<int>(out.size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        out[i] = never_to_inf(sim::single_group_failure_time(curve, (i + 1) * unit_capacity_n, f_res_n));
    return out;
}

std::vector<double> count_failure_times_serial(const DegradationCurve& curve, double unit_capacity_n,
                                               double f_res_n, int max_count) {
    std::vector<double> out;
    for (int i = 0; i < max_count; ++i)
        out.push_back(never_to_inf(sim::single_group_failure_time(curve, (i + 1) * unit_capacity_n, f_res_n)));
    return out;
}

std::vector<double> area_failure_times(const DegradationCurve& curve, double sigma_i_mpa, int count,
                                       double f_res_n, std::span<const double> areas_mm2) {
    std::vector<double> out(areas_mm2.size());
    const long n = static_cast<long>(areas_mm2.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
        out[i] = never_to_inf(sim::single_group_failure_time(
            curve, count * units::force_from_stress(sigma_i_mpa, areas_mm2[i]), f_res_n));
    return out;
}

std::vector<double> area_failure_times_serial(const DegradationCurve& curve, double sigma_i_mpa, int count,
                                              double f_res_n, std::span<const double> areas_mm2) {
    std::vector<double> out;
    out.reserve(areas_mm2.size());
    for (double a : areas_mm2)
        out.push_back(never_to_inf(
            sim::single_group_failure_time(curve, count * units::force_from_stress(sigma_i_mpa, a), f_res_n)));
    return out;
}

std::vector<RunResult> simulate_batch(std::span<const RunRequest> runs, const MaterialLibrary& lib) {
    std::vector<RunResult> out(runs.size());
    const long n = static_cast<long>(runs.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) out[i] = run_one(runs[i], lib);
    return out;
}

std::vector<RunResult> simulate_batch_serial(std::span<const RunRequest> runs, const MaterialLibrary& lib) {
    std::vector<RunResult> out;
    out.reserve(runs.size());
    for (const auto& r : runs) out.push_back(run_one(r, lib));
    return out;
}

}  // namespace dtf::sweep
