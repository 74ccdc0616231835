#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtf/matlib.hpp"

namespace dtf {

enum class BindingKind { binding_connector, binding_ribbon, bonding };
std::string_view to_string(BindingKind);
std::optional<BindingKind> parse_binding_kind(std::string_view);

struct ConstraintPart {
    std::string id;
    std::string material_id;
    double a0_mm2 = 0.0;
    int count = 1;
    BindingKind binding = BindingKind::binding_connector;
    std::string restrains;           // EnergyStoragePart id
    std::optional<double> margin;    // overrides the default safety margin
    bool operator==(const ConstraintPart&) const = default;
};

struct EnergyStoragePart {
    std::string id;
    StorageForm form = StorageForm::compression;
    std::string material_id;
    double f_res_n = 0.0;
    std::string description;
    bool operator==(const EnergyStoragePart&) const = default;
};

struct CourierPart {
    std::string id;
    std::string shell_material_id;
    std::string payload_name;
    double payload_mass_g = 0.0;
    std::string curve_id;  // CourierCurve id in the library
    bool operator==(const CourierPart&) const = default;
};

struct IncentivePart {
    std::string id;
    std::string material_id;
    std::string record_id;  // IncentiveRecord id in the library
    bool operator==(const IncentivePart&) const = default;
};

enum class TriggerKind { all_failed, courier_depleted, incentive_consumed };
std::string_view to_string(TriggerKind);

struct Trigger {
    TriggerKind kind = TriggerKind::all_failed;
    std::vector<std::string> subjects;  // sorted; exactly one for the timer kinds
    bool operator==(const Trigger&) const = default;
};

// `expose` starts an incentive's consumption timer. Couriers start on a
// `start_courier` effect; a courier or incentive no effect refers to is live
// from t = 0.
enum class EffectKind { release_motion, detach, open, set_context, start_courier, expose };
std::string_view to_string(EffectKind);
std::optional<EffectKind> parse_effect_kind(std::string_view);

struct Effect {
    EffectKind kind = EffectKind::open;
    std::string target;
    bool operator==(const Effect&) const = default;
};

struct Transformation {
    std::string id;
    Trigger trigger;
    std::vector<Effect> effects;
    bool operator==(const Transformation&) const = default;
};

struct DeviceSpec {
    std::string id;
    std::string initial_context;
    std::vector<ConstraintPart> constraints;
    std::vector<EnergyStoragePart> storages;
    std::vector<CourierPart> couriers;
    std::vector<IncentivePart> incentives;
    std::vector<Transformation> transformations;
    bool operator==(const DeviceSpec&) const = default;

    const ConstraintPart* find_constraint(std::string_view id) const;
    const EnergyStoragePart* find_storage(std::string_view id) const;
    const CourierPart* find_courier(std::string_view id) const;
    const IncentivePart* find_incentive(std::string_view id) const;
    bool has_part(std::string_view id) const;
};

struct ConditionOverride {
    std::string id;
    std::string state;
    double t0_s = 0.0;  // [t0, t1)
    double t1_s = 0.0;
    std::string condition_id;
    bool operator==(const ConditionOverride&) const = default;
};

struct Scenario {
    std::string id;
    std::optional<std::string> device_id;  // restricts validation pairing
    double horizon_s = 0.0;
    std::map<std::string, std::string> context_conditions;
    std::vector<ConditionOverride> overrides;
    bool operator==(const Scenario&) const = default;
};

// Sorts every part list (and all_failed subject sets) by id. Parsing and
// the engine work on the canonical form.
void canonicalize(DeviceSpec& spec);
void canonicalize(Scenario& scenario);

// Condition active for `state` at time t: a covering override, else the
// base mapping. Throws UnmappedState.
const std::string& effective_condition(const Scenario& scenario, std::string_view state, double t);

// Aggregate initial capacity sum(count * sigma_i * a0) in newtons of all
// constraints restraining `storage_id`.
double group_capacity(const DeviceSpec& spec, const MaterialLibrary& lib, std::string_view storage_id);

enum class Severity { error, warning, info };
std::string_view to_string(Severity);

struct Finding {
    Severity severity = Severity::error;
    std::string code;
    std::string subject;
    std::string message;
    bool operator==(const Finding&) const = default;
};

struct ValidateOptions {
    double margin = 0.2;
    std::string shelf_condition = "room";
    double shelf_horizon_s = 90.0 * 86400.0;
    double function_window_s = 14.0 * 86400.0;
};

// Static checks of a (device, scenario) pair against a library. Findings are
// sorted by (subject, code, message).
std::vector<Finding> validate(const DeviceSpec& spec, const Scenario& scenario, const MaterialLibrary& lib,
                              const ValidateOptions& opts = {});

bool has_errors(const std::vector<Finding>& findings);

}  // namespace dtf
