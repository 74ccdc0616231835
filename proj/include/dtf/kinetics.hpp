#pragma once

#include <optional>
#include <string>

#include "dtf/matlib.hpp"

// Degradation kinetics over empirical curves.
//
// Curves are interpolated piecewise-linearly in linear time. Interpolating in
// log time was considered and rejected: the first sample sits at t = 0 and
// the threshold protocol produces sparse, roughly evenly spaced crossings, so
// log spacing adds distortion near the origin without a fitting benefit.
namespace dtf::kinetics {

inline constexpr double kFractionTolerance = 1e-9;
inline constexpr double kTimeTolerance = 1e-3;  // seconds

// Piecewise-linear fraction at exposure time t >= 0. Beyond the last sample
// the curve is constant when censored, otherwise the last segment is
// extended and clamped at zero.
double fraction_at(const DegradationCurve& curve, double t);

// Smallest t with fraction_at(t) <= target, or nullopt if the curve never
// gets there. Targets <= 0 resolve to the time the curve reaches zero.
std::optional<double> invert_fraction(const DegradationCurve& curve, double target);

// Time at which a non-censored curve's extrapolated tail reaches zero.
std::optional<double> zero_crossing(const DegradationCurve& curve);

// Regularised reciprocal law f(t) = tau / (tau + t).
struct ReciprocalFit {
    double tau_s = 0.0;
    std::string material_id;
    std::string condition_id;
    double rms_error = 0.0;

    double operator()(double t) const { return tau_s / (tau_s + t); }
};

inline constexpr double kFitTauMin = 1.0;
inline constexpr double kFitTauMax = 10.0 * 365.0 * 86400.0;

// Least-squares tau via golden-section search over log(tau). Throws
// InsufficientData for fewer than 3 samples or a curve that never drops.
ReciprocalFit fit_reciprocal(const DegradationCurve& curve);

// Strength carried across condition changes. The fraction only ever goes
// down: when a new curve cannot reach the current fraction (it starts above
// it and never decays that far) the exposure resets to 0 and the fraction
// holds.
struct DegradationState {
    const DegradationCurve* curve = nullptr;
    double current_fraction = 1.0;
    double equivalent_exposure = 0.0;

    // Fraction after a further dt seconds on the current curve.
    double fraction_after(double dt) const;
    void advance(double dt);
};

DegradationState fresh_state(const DegradationCurve& curve);

// Strength-matched time shift onto new_curve.
DegradationState switch_condition(const DegradationState& state, const DegradationCurve& new_curve);

// Time (from now) until the state's fraction first drops to <= target, or
// nullopt if never.
std::optional<double> time_to_fraction(const DegradationState& state, double target);

}  // namespace dtf::kinetics
