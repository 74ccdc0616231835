#include "dtf/designer.hpp"

#include <algorithm>
#include <cmath>

#include "dtf/error.hpp"
#include "dtf/simengine.hpp"
#include "dtf/specdsl.hpp"
#include "dtf/units.hpp"

namespace dtf::design {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Problem {
    const Material* material = nullptr;
    const DegradationCurve* mid = nullptr;
    const DegradationCurve* lo = nullptr;
    const DegradationCurve* hi = nullptr;
};

Problem resolve(const MaterialLibrary& lib, const std::string& material, const std::string& condition) {
    Problem p;
    p.material = lib.find_material(material);
    if (!p.material) throw NotFoundError("unknown material '" + material + "'");
    if (!p.material->sigma_i_mpa) throw InsufficientData("material '" + material + "' has no sigma-i");
    p.mid = lib.find_curve(material, condition, Calibration::mid);
    if (!p.mid)
        throw MissingCurve("no degradation curve for material '" + material + "' under condition '" + condition + "'");
    p.lo = find_calibrated_curve(lib, material, condition, Calibration::lo);
    p.hi = find_calibrated_curve(lib, material, condition, Calibration::hi);
    return p;
}

double time_on(const DegradationCurve& curve, double capacity_n, double f_res_n) {
    auto t = sim::single_group_failure_time(curve, capacity_n, f_res_n);
    return t ? *t : kInf;
}

std::optional<double> finite(double t) { return std::isfinite(t) ? std::optional<double>(t) : std::nullopt; }

bool in_window(double t, const TimeWindow& w) { return t >= w.lo_s && t <= w.hi_s; }

std::string days(double t) { return std::isfinite(t) ? dsl::format_number(t / units::kDay) + " d" : "never"; }

std::string window_text(const TimeWindow& w) { return "[" + days(w.lo_s) + ", " + days(w.hi_s) + "]"; }

void check_window(const TimeWindow& w) {
    if (!(w.lo_s >= 0.0) || !(w.hi_s >= w.lo_s)) throw Error("time window must satisfy 0 <= lo <= hi");
}

}  // namespace

double failure_time(const MaterialLibrary& lib, const std::string& material, const std::string& condition,
                    Calibration calib, int count, double a0_mm2, double f_res_n) {
    const auto* m = lib.find_material(material);
    if (!m) throw NotFoundError("unknown material '" + material + "'");
    if (!m->sigma_i_mpa) throw InsufficientData("material '" + material + "' has no sigma-i");
    const auto* curve = find_calibrated_curve(lib, material, condition, calib);
    if (!curve)
        throw MissingCurve("no degradation curve for material '" + material + "' under condition '" + condition + "'");
    return time_on(*curve, count * units::force_from_stress(*m->sigma_i_mpa, a0_mm2), f_res_n);
}

CountResult solve_count(const MaterialLibrary& lib, const std::string& material, const std::string& condition,
                        double a0_mm2, double f_res_n, TimeWindow window) {
    check_window(window);
    if (!(a0_mm2 > 0.0) || !(f_res_n > 0.0)) throw Error("a0 and f_res must be positive");
    const auto p = resolve(lib, material, condition);
    const double unit = units::force_from_stress(*p.material->sigma_i_mpa, a0_mm2);

    double first = kInf, last = kInf;
    for (int n = 1; n <= kMaxCount; ++n) {
        const double t = time_on(*p.mid, n * unit, f_res_n);
        if (n == 1) first = t;
        last = t;
        if (in_window(t, window)) {
            CountResult r;
            r.count = n;
            r.failure_time_s = finite(t);
            r.bracket = {finite(time_on(*p.lo, n * unit, f_res_n)), finite(time_on(*p.hi, n * unit, f_res_n))};
            return r;
        }
        // Failure time never decreases with n.
        if (t > window.hi_s) break;
    }
    throw Infeasible("no count in [1, " + std::to_string(kMaxCount) + "] puts failure in " + window_text(window) +
                     "; n = 1 fails at " + days(first) + ", the last count tried at " + days(last));
}

AreaResult solve_area(const MaterialLibrary& lib, const std::string& material, const std::string& condition,
                      int count, double f_res_n, TimeWindow window) {
    check_window(window);
    if (count < 1 || !(f_res_n > 0.0)) throw Error("count must be >= 1 and f_res positive");
    const auto p = resolve(lib, material, condition);
    const double sigma = *p.material->sigma_i_mpa;
    auto T = [&](const DegradationCurve& c, double a) {
        return time_on(c, count * units::force_from_stress(sigma, a), f_res_n);
    };
    auto finish = [&](double a) {
        AreaResult r;
        r.a0_mm2 = a;
        r.failure_time_s = finite(T(*p.mid, a));
        r.bracket = {finite(T(*p.lo, a)), finite(T(*p.hi, a))};
        r.geometry_extrapolation = !(p.material->tested_a0_mm2 && *p.material->tested_a0_mm2 == a);
        return r;
    };

    const auto& tested = p.material->tested_a0_mm2;
    if (tested && *tested >= kMinArea && *tested <= kMaxArea && in_window(T(*p.mid, *tested), window))
        return finish(*tested);

    const double t_min = T(*p.mid, kMinArea);
    const double t_max = T(*p.mid, kMaxArea);
    if (t_max < window.lo_s || t_min > window.hi_s)
        throw Infeasible("no area in [" + dsl::format_number(kMinArea) + ", " + dsl::format_number(kMaxArea) +
                         "] mm2 puts failure in " + window_text(window) + "; achievable " + days(t_min) + " to " +
                         days(t_max));

    // Bisection in log(area); T is non-decreasing in area. `pred(a)` true
    // marks the upper part of the range.
    auto bisect = [&](auto pred) {
        double lo = std::log(kMinArea), hi = std::log(kMaxArea);
        for (int i = 0; i < 200 && hi - lo > 1e-13; ++i) {
            const double mid = 0.5 * (lo + hi);
            (pred(std::exp(mid)) ? hi : lo) = mid;
        }
        return std::pair{std::exp(lo), std::exp(hi)};
    };
    // Smallest area reaching lo, largest area not past hi.
    const double a_lo = t_min >= window.lo_s ? kMinArea : bisect([&](double a) { return T(*p.mid, a) >= window.lo_s; }).second;
    const double a_hi = t_max <= window.hi_s ? kMaxArea : bisect([&](double a) { return T(*p.mid, a) > window.hi_s; }).first;
    if (a_lo > a_hi || !in_window(T(*p.mid, a_lo), window))
        throw Infeasible("failure-time window " + window_text(window) + " falls between achievable areas");

    if (tested) return finish(std::clamp(*tested, a_lo, a_hi));

    // No tested geometry: aim at the middle of the window.
    if (!std::isfinite(window.hi_s)) return finish(a_lo);
    const double target = 0.5 * (window.lo_s + window.hi_s);
    double a = bisect([&](double x) { return T(*p.mid, x) >= target; }).second;
    a = std::clamp(a, a_lo, a_hi);
    return finish(a);
}

bool margin_passes(double f_max0_n, double f_res_n, double margin) {
    return f_max0_n / f_res_n >= 1.0 + margin - 1e-9;
}

std::vector<MarginRow> margin_report(const DeviceSpec& spec, const MaterialLibrary& lib, double margin) {
    std::vector<MarginRow> rows;
    std::vector<const ConstraintPart*> cs;
    for (const auto& c : spec.constraints) cs.push_back(&c);
    std::sort(cs.begin(), cs.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    for (const auto* c : cs) {
        const auto* s = spec.find_storage(c->restrains);
        if (!s) throw ReferenceError("constraint '" + c->id + "' restrains unknown storage '" + c->restrains + "'",
                                     c->restrains);
        MarginRow r;
        r.constraint_id = c->id;
        r.storage_id = s->id;
        r.f_max0_n = group_capacity(spec, lib, s->id);
        r.f_res_n = s->f_res_n;
        r.ratio = r.f_max0_n / r.f_res_n;
        r.margin = c->margin.value_or(margin);
        r.pass = margin_passes(r.f_max0_n, r.f_res_n, r.margin);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace dtf::design
