#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtf/device.hpp"
#include "dtf/kinetics.hpp"
#include "dtf/matlib.hpp"

namespace dtf::sim {

enum class EventKind {
    constraint_failed,
    transformation_fired,
    context_changed,
    courier_depleted,
    incentive_consumed,
    horizon_reached,
};
std::string_view to_string(EventKind);
std::optional<EventKind> parse_event_kind(std::string_view);

struct SimEvent {
    double time_s = 0.0;
    EventKind kind = EventKind::horizon_reached;
    std::string subject;
    std::string detail;  // `key=value` pairs joined by ';'
    bool operator==(const SimEvent&) const = default;
};

struct TracePoint {
    double time_s = 0.0;
    double value = 0.0;
    bool operator==(const TracePoint&) const = default;
};

struct TimelineReport {
    std::string device_id;
    std::string scenario_id;
    Calibration calib = Calibration::mid;
    double horizon_s = 0.0;
    std::vector<SimEvent> events;
    // F_max in newtons, keyed by constraint id and, for group aggregates,
    // by the restrained storage part id.
    std::map<std::string, std::vector<TracePoint>> traces;
    // Released payload in grams, keyed by courier id.
    std::map<std::string, std::vector<TracePoint>> release_traces;
    std::string final_context;
    bool operator==(const TimelineReport&) const = default;
};

struct SimOptions {
    Calibration calib = Calibration::mid;
    std::size_t trace_points = 200;
    std::size_t max_events = 1'000'000;
};

// count * fraction * sigma_i * a0, MPa * mm^2 -> N.
double f_max(const ConstraintPart& constraint, double fraction, const Material& material);

// Released grams t seconds after the courier started. The full payload is
// out once an uncensored curve ends; a censored one holds its last value.
double courier_release(const CourierPart& courier, const CourierCurve& curve, double t_since_start);

// One live constraint as seen by the crossing solver.
struct LoadedState {
    kinetics::DegradationState state;
    double capacity_n = 0.0;  // count * sigma_i * a0
};

// Time from now until sum(capacity * fraction) first drops to <= f_res, or
// nullopt if it never does. Homogeneous groups (one curve, one state) go
// through invert_fraction; mixed groups are solved on the merged breakpoint
// set of the member curves.
std::optional<double> group_crossing_time(std::span<const LoadedState> members, double f_res_n);
std::optional<double> group_crossing_time_scan(std::span<const LoadedState> members, double f_res_n);

// Failure time of a fresh single-material group of total capacity
// `capacity_n` under one curve.
std::optional<double> single_group_failure_time(const DegradationCurve& curve, double capacity_n,
                                                double f_res_n);

// Throws MissingCurve, UnmappedState or SimulationError.
TimelineReport simulate(const DeviceSpec& spec, const Scenario& scenario, const MaterialLibrary& lib,
                        const SimOptions& opts = {});

enum class Pattern { simultaneous, staggered, cascaded };
std::string_view to_string(Pattern);

// Throws Error when the report has no constraint failures.
std::set<Pattern> classify_pattern(const TimelineReport& report, double sync_window_s);
std::set<Pattern> classify_pattern(const TimelineReport& report);  // 1% of horizon

// `key=value;key=value` lookup in an event detail string.
std::optional<std::string> detail_field(std::string_view detail, std::string_view key);

// Export. CSV columns: events `time_s,kind,subject,detail`; traces
// `time_s,part,f_max_N`; releases `time_s,courier,released_g`.
std::string events_csv(const TimelineReport& report);
std::string traces_csv(const TimelineReport& report);
std::string releases_csv(const TimelineReport& report);
std::string timeline_svg(const TimelineReport& report);

// Reads an events CSV back into a report (events and horizon only).
TimelineReport report_from_events_csv(std::string_view csv);

}  // namespace dtf::sim
