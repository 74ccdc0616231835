#include "dtf/kinetics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dtf/error.hpp"

namespace dtf::kinetics {

namespace {

// Slope of the last segment (fraction per second), or 0 for a single sample.
double tail_slope(const DegradationCurve& c) {
    const auto n = c.samples.size();
    if (n < 2) return 0.0;
    const auto& a = c.samples[n - 2];
    const auto& b = c.samples[n - 1];
    return (b.fraction - a.fraction) / (b.time_s - a.time_s);
}

}  // namespace

double fraction_at(const DegradationCurve& curve, double t) {
    const auto& s = curve.samples;
    if (s.empty()) return 1.0;
    if (t <= s.front().time_s) return s.front().fraction;

    auto it = std::upper_bound(s.begin(), s.end(), t,
                               [](double v, const CurveSample& x) { return v < x.time_s; });
    if (it == s.end()) {
        const auto& last = s.back();
        if (curve.censored) return last.fraction;
        const double slope = tail_slope(curve);
        return std::max(0.0, last.fraction + slope * (t - last.time_s));
    }
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double u = (t - a.time_s) / (b.time_s - a.time_s);
    return a.fraction + u * (b.fraction - a.fraction);
}

std::optional<double> zero_crossing(const DegradationCurve& curve) {
    if (curve.samples.empty()) return std::nullopt;
    const auto& last = curve.samples.back();
    if (last.fraction <= 0.0) {
        for (const auto& s : curve.samples) {
            if (s.fraction <= 0.0) return s.time_s;
        }
    }
    if (curve.censored) return std::nullopt;
    const double slope = tail_slope(curve);
    if (!(slope < 0.0)) return std::nullopt;
    return last.time_s + last.fraction / -slope;
}

std::optional<double> invert_fraction(const DegradationCurve& curve, double target) {
    const auto& s = curve.samples;
    if (s.empty()) return target >= 1.0 ? std::optional<double>(0.0) : std::nullopt;
    if (target <= 0.0) return zero_crossing(curve);
    if (s.front().fraction <= target) return s.front().time_s;

    for (std::size_t i = 1; i < s.size(); ++i) {
        const auto& a = s[i - 1];
        const auto& b = s[i];
        if (b.fraction <= target) {
            // a.fraction > target here, so the segment strictly decreases.
            const double u = (a.fraction - target) / (a.fraction - b.fraction);
            return a.time_s + u * (b.time_s - a.time_s);
        }
    }
    if (curve.censored) return std::nullopt;
    const double slope = tail_slope(curve);
    if (!(slope < 0.0)) return std::nullopt;
    const auto& last = s.back();
    return last.time_s + (last.fraction - target) / -slope;
}

ReciprocalFit fit_reciprocal(const DegradationCurve& curve) {
    const auto& s = curve.samples;
    if (s.size() < 3) throw InsufficientData("reciprocal fit needs at least 3 samples");
    if (std::all_of(s.begin(), s.end(), [](const CurveSample& x) { return x.fraction >= 1.0; }))
        throw InsufficientData("reciprocal fit needs at least one sample below 1");

    auto sse = [&](double log_tau) {
        const double tau = std::exp(log_tau);
        double acc = 0.0;
        for (const auto& x : s) {
            const double r = tau / (tau + x.time_s) - x.fraction;
            acc += r * r;
        }
        return acc;
    };

    // Coarse scan to bracket the global minimum, then golden-section refine.
    const double lo = std::log(kFitTauMin);
    const double hi = std::log(kFitTauMax);
    constexpr int kGrid = 256;
    const double step = (hi - lo) / kGrid;
    int best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= kGrid; ++i) {
        const double v = sse(lo + i * step);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    double a = lo + std::max(0, best - 1) * step;
    double b = lo + std::min(kGrid, best + 1) * step;

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = sse(c);
    double fd = sse(d);
    while (b - a > 1e-12) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sse(d);
        }
    }
    const double log_tau = 0.5 * (a + b);

    ReciprocalFit fit;
    fit.tau_s = std::exp(log_tau);
    fit.material_id = curve.material_id;
    fit.condition_id = curve.condition_id;
    fit.rms_error = std::sqrt(sse(log_tau) / static_cast<double>(s.size()));
    return fit;
}

double DegradationState::fraction_after(double dt) const {
    if (!curve) return current_fraction;
    return std::min(current_fraction, fraction_at(*curve, equivalent_exposure + dt));
}

void DegradationState::advance(double dt) {
    current_fraction = fraction_after(dt);
    equivalent_exposure += dt;
}

DegradationState fresh_state(const DegradationCurve& curve) { return {&curve, 1.0, 0.0}; }

DegradationState switch_condition(const DegradationState& state, const DegradationCurve& new_curve) {
    DegradationState next;
    next.curve = &new_curve;
    next.current_fraction = state.current_fraction;
    const auto t = invert_fraction(new_curve, state.current_fraction);
    next.equivalent_exposure = t ? *t : 0.0;
    return next;
}

std::optional<double> time_to_fraction(const DegradationState& state, double target) {
    if (state.current_fraction <= target) return 0.0;
    if (!state.curve) return std::nullopt;
    const auto t = invert_fraction(*state.curve, target);
    if (!t) return std::nullopt;
    return std::max(0.0, *t - state.equivalent_exposure);
}

}  // namespace dtf::kinetics
