#include "dtf/device.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <set>
#include <utility>

#include "dtf/error.hpp"
#include "dtf/kinetics.hpp"
#include "dtf/simengine.hpp"
#include "dtf/specdsl.hpp"
#include "dtf/units.hpp"

namespace dtf {

namespace {
constexpr std::array<std::pair<BindingKind, std::string_view>, 3> kBinding{{
    {BindingKind::binding_connector, "binding-connector"},
    {BindingKind::binding_ribbon, "binding-ribbon"},
    {BindingKind::bonding, "bonding"},
}};
constexpr std::array<std::pair<EffectKind, std::string_view>, 6> kEffect{{
    {EffectKind::release_motion, "release-motion"},
    {EffectKind::detach, "detach"},
    {EffectKind::open, "open"},
    {EffectKind::set_context, "set-context"},
    {EffectKind::start_courier, "start-courier"},
    {EffectKind::expose, "expose"},
}};

template <typename Part>
const Part* find_part(const std::vector<Part>& parts, std::string_view id) {
    for (const auto& p : parts) {
        if (p.id == id) return &p;
    }
    return nullptr;
}

template <typename Part>
void sort_by_id(std::vector<Part>& parts) {
    std::sort(parts.begin(), parts.end(), [](const Part& a, const Part& b) { return a.id < b.id; });
}

std::string num(double v) { return dsl::format_number(v); }
}  // namespace

std::string_view to_string(BindingKind b) {
    for (const auto& [k, n] : kBinding)
        if (k == b) return n;
    return "?";
}
std::optional<BindingKind> parse_binding_kind(std::string_view s) {
    for (const auto& [k, n] : kBinding)
        if (n == s) return k;
    return std::nullopt;
}
std::string_view to_string(EffectKind e) {
    for (const auto& [k, n] : kEffect)
        if (k == e) return n;
    return "?";
}
std::optional<EffectKind> parse_effect_kind(std::string_view s) {
    for (const auto& [k, n] : kEffect)
        if (n == s) return k;
    return std::nullopt;
}
std::string_view to_string(TriggerKind t) {
    switch (t) {
        case TriggerKind::all_failed: return "on-failed";
        case TriggerKind::courier_depleted: return "on-depleted";
        case TriggerKind::incentive_consumed: return "on-consumed";
    }
    return "?";
}
std::string_view to_string(Severity s) {
    switch (s) {
        case Severity::error: return "error";
        case Severity::warning: return "warning";
        case Severity::info: return "info";
    }
    return "?";
}

const ConstraintPart* DeviceSpec::find_constraint(std::string_view id) const { return find_part(constraints, id); }
const EnergyStoragePart* DeviceSpec::find_storage(std::string_view id) const { return find_part(storages, id); }
const CourierPart* DeviceSpec::find_courier(std::string_view id) const { return find_part(couriers, id); }
const IncentivePart* DeviceSpec::find_incentive(std::string_view id) const { return find_part(incentives, id); }

bool DeviceSpec::has_part(std::string_view id) const {
    return find_constraint(id) || find_storage(id) || find_courier(id) || find_incentive(id);
}

void canonicalize(DeviceSpec& spec) {
    sort_by_id(spec.constraints);
    sort_by_id(spec.storages);
    sort_by_id(spec.couriers);
    sort_by_id(spec.incentives);
    sort_by_id(spec.transformations);
    for (auto& t : spec.transformations) std::sort(t.trigger.subjects.begin(), t.trigger.subjects.end());
}

void canonicalize(Scenario& scenario) { sort_by_id(scenario.overrides); }

const std::string& effective_condition(const Scenario& scenario, std::string_view state, double t) {
    for (const auto& o : scenario.overrides) {
        if (o.state == state && t >= o.t0_s && t < o.t1_s) return o.condition_id;
    }
    auto it = scenario.context_conditions.find(std::string(state));
    if (it == scenario.context_conditions.end())
        throw UnmappedState("context state '" + std::string(state) + "' has no condition in scenario '" +
                            scenario.id + "'");
    return it->second;
}

double group_capacity(const DeviceSpec& spec, const MaterialLibrary& lib, std::string_view storage_id) {
    double total = 0.0;
    for (const auto& c : spec.constraints) {
        if (c.restrains != storage_id) continue;
        const auto* m = lib.find_material(c.material_id);
        if (!m || !m->sigma_i_mpa) continue;
        total += c.count * units::force_from_stress(*m->sigma_i_mpa, c.a0_mm2);
    }
    return total;
}

bool has_errors(const std::vector<Finding>& findings) {
    return std::any_of(findings.begin(), findings.end(),
                       [](const Finding& f) { return f.severity == Severity::error; });
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

namespace {

struct Checker {
    const DeviceSpec& spec;
    const Scenario& scenario;
    const MaterialLibrary& lib;
    const ValidateOptions& opts;
    std::vector<Finding> out;

    void add(Severity s, std::string code, std::string subject, std::string msg) {
        out.push_back({s, std::move(code), std::move(subject), std::move(msg)});
    }

    void structure() {
        std::set<std::string> ids;
        auto claim = [&](const std::string& id) {
            if (!ids.insert(id).second)
                add(Severity::error, "duplicate-part", id, "part id '" + id + "' is used more than once");
        };
        for (const auto& c : spec.constraints) claim(c.id);
        for (const auto& s : spec.storages) claim(s.id);
        for (const auto& c : spec.couriers) claim(c.id);
        for (const auto& i : spec.incentives) claim(i.id);

        for (const auto& c : spec.constraints) {
            if (!(c.a0_mm2 > 0.0)) add(Severity::error, "invalid-part", c.id, "a0 must be > 0");
            if (c.count < 1) add(Severity::error, "invalid-part", c.id, "count must be >= 1");
            if (!spec.find_storage(c.restrains))
                add(Severity::error, "dangling-reference", c.id,
                    "restrains unknown storage part '" + c.restrains + "'");
            const auto* m = lib.find_material(c.material_id);
            if (!m) {
                add(Severity::error, "dangling-reference", c.id, "unknown material '" + c.material_id + "'");
            } else if (!m->roles.contains(Role::constraint) || !m->sigma_i_mpa) {
                add(Severity::error, "invalid-material", c.id,
                    "material '" + c.material_id + "' is not a constraint material");
            }
        }
        for (const auto& s : spec.storages) {
            if (!(s.f_res_n > 0.0)) add(Severity::error, "invalid-part", s.id, "f-res must be > 0");
            if (!lib.find_material(s.material_id))
                add(Severity::error, "dangling-reference", s.id, "unknown material '" + s.material_id + "'");
        }
        for (const auto& c : spec.couriers) {
            if (!(c.payload_mass_g > 0.0)) add(Severity::error, "invalid-part", c.id, "payload mass must be > 0");
            if (!lib.find_courier_curve_by_id(c.curve_id))
                add(Severity::error, "dangling-reference", c.id, "unknown courier curve '" + c.curve_id + "'");
        }
        for (const auto& i : spec.incentives) {
            if (!lib.find_incentive(i.record_id))
                add(Severity::error, "dangling-reference", i.id, "unknown incentive record '" + i.record_id + "'");
        }
        for (const auto& t : spec.transformations) {
            if (t.effects.empty()) add(Severity::error, "invalid-transformation", t.id, "no effects");
            switch (t.trigger.kind) {
                case TriggerKind::all_failed:
                    if (t.trigger.subjects.empty())
                        add(Severity::error, "invalid-transformation", t.id, "on-failed lists no constraints");
                    for (const auto& s : t.trigger.subjects)
                        if (!spec.find_constraint(s))
                            add(Severity::error, "dangling-reference", t.id, "unknown constraint '" + s + "'");
                    break;
                case TriggerKind::courier_depleted:
                    for (const auto& s : t.trigger.subjects)
                        if (!spec.find_courier(s))
                            add(Severity::error, "dangling-reference", t.id, "unknown courier '" + s + "'");
                    break;
                case TriggerKind::incentive_consumed:
                    for (const auto& s : t.trigger.subjects)
                        if (!spec.find_incentive(s))
                            add(Severity::error, "dangling-reference", t.id, "unknown incentive '" + s + "'");
                    break;
            }
            for (const auto& e : t.effects) {
                switch (e.kind) {
                    case EffectKind::release_motion:
                        if (!spec.find_storage(e.target))
                            add(Severity::error, "dangling-reference", t.id,
                                "release-motion of unknown storage part '" + e.target + "'");
                        break;
                    case EffectKind::detach:
                        if (!spec.has_part(e.target))
                            add(Severity::error, "dangling-reference", t.id, "detach of unknown part '" + e.target + "'");
                        break;
                    case EffectKind::start_courier:
                        if (!spec.find_courier(e.target))
                            add(Severity::error, "dangling-reference", t.id, "unknown courier '" + e.target + "'");
                        break;
                    case EffectKind::expose:
                        if (!spec.find_incentive(e.target))
                            add(Severity::error, "dangling-reference", t.id, "unknown incentive '" + e.target + "'");
                        break;
                    case EffectKind::set_context:
                        if (!scenario.context_conditions.contains(e.target))
                            add(Severity::error, "unmapped-context", t.id,
                                "set-context target '" + e.target + "' is not declared in scenario '" +
                                    scenario.id + "'");
                        break;
                    case EffectKind::open: break;
                }
            }
        }
        trigger_cycles();
    }

    // Edge t1 -> t2 when an effect of t1 can satisfy the trigger of t2.
    void trigger_cycles() {
        const auto& ts = spec.transformations;
        const std::size_t n = ts.size();
        std::vector<std::vector<std::size_t>> edges(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (const auto& e : ts[i].effects) {
                for (std::size_t j = 0; j < n; ++j) {
                    const auto& tr = ts[j].trigger;
                    const bool hit =
                        (e.kind == EffectKind::start_courier && tr.kind == TriggerKind::courier_depleted) ||
                        (e.kind == EffectKind::expose && tr.kind == TriggerKind::incentive_consumed);
                    if (hit && std::find(tr.subjects.begin(), tr.subjects.end(), e.target) != tr.subjects.end())
                        edges[i].push_back(j);
                }
            }
        }
        std::vector<int> color(n, 0);
        std::function<bool(std::size_t)> dfs = [&](std::size_t u) {
            color[u] = 1;
            for (auto v : edges[u]) {
                if (color[v] == 1) return true;
                if (color[v] == 0 && dfs(v)) return true;
            }
            color[u] = 2;
            return false;
        };
        for (std::size_t i = 0; i < n; ++i) {
            if (color[i] == 0 && dfs(i)) {
                add(Severity::error, "cyclic-trigger", ts[i].id, "transformation trigger graph has a cycle");
                return;
            }
        }
    }

    std::vector<std::string> reachable_states() const {
        std::set<std::string> states{spec.initial_context};
        for (const auto& t : spec.transformations)
            for (const auto& e : t.effects)
                if (e.kind == EffectKind::set_context) states.insert(e.target);
        return {states.begin(), states.end()};
    }

    std::set<std::string> reachable_conditions() {
        std::set<std::string> conds;
        if (!(scenario.horizon_s > 0.0))
            add(Severity::error, "invalid-scenario", scenario.id, "horizon must be > 0");
        for (const auto& [state, cond] : scenario.context_conditions) {
            if (!lib.find_condition(cond))
                add(Severity::error, "dangling-reference", scenario.id,
                    "context '" + state + "' maps to unknown condition '" + cond + "'");
        }
        for (std::size_t i = 0; i < scenario.overrides.size(); ++i) {
            const auto& o = scenario.overrides[i];
            if (!(o.t1_s > o.t0_s) || o.t0_s < 0.0)
                add(Severity::error, "invalid-scenario", o.id, "override interval must satisfy 0 <= from < to");
            if (!lib.find_condition(o.condition_id))
                add(Severity::error, "dangling-reference", o.id, "unknown condition '" + o.condition_id + "'");
            for (std::size_t j = i + 1; j < scenario.overrides.size(); ++j) {
                const auto& p = scenario.overrides[j];
                if (p.state == o.state && o.t0_s < p.t1_s && p.t0_s < o.t1_s)
                    add(Severity::error, "invalid-scenario", o.id,
                        "override overlaps '" + p.id + "' for state '" + o.state + "'");
            }
        }
        for (const auto& state : reachable_states()) {
            auto it = scenario.context_conditions.find(state);
            if (it == scenario.context_conditions.end()) {
                add(Severity::error, "unmapped-context", state == spec.initial_context ? spec.id : state,
                    "context '" + state + "' has no condition in scenario '" + scenario.id + "'");
            } else if (lib.find_condition(it->second)) {
                conds.insert(it->second);
            }
            for (const auto& o : scenario.overrides)
                if (o.state == state && lib.find_condition(o.condition_id)) conds.insert(o.condition_id);
        }
        return conds;
    }

    void kinetics(const std::set<std::string>& conditions) {
        std::set<std::string> bad_constraints;
        for (const auto& c : spec.constraints) {
            for (const auto& cond : conditions) {
                if (!lib.find_curve(c.material_id, cond)) {
                    add(Severity::error, "missing-curve", c.id,
                        "no degradation curve for (" + c.material_id + ", " + cond + ")");
                    bad_constraints.insert(c.id);
                }
            }
        }

        for (const auto& s : spec.storages) {
            std::vector<const ConstraintPart*> group;
            for (const auto& c : spec.constraints)
                if (c.restrains == s.id) group.push_back(&c);
            if (group.empty() || !(s.f_res_n > 0.0)) continue;

            double capacity = 0.0;
            bool usable = true;
            for (const auto* c : group) {
                const auto* m = lib.find_material(c->material_id);
                if (!m || !m->sigma_i_mpa) {
                    usable = false;
                    continue;
                }
                if (bad_constraints.contains(c->id)) usable = false;
                capacity += c->count * units::force_from_stress(*m->sigma_i_mpa, c->a0_mm2);
            }

            for (const auto* c : group) {
                const double m = c->margin.value_or(opts.margin);
                const auto* mat = lib.find_material(c->material_id);
                if (!mat || !mat->sigma_i_mpa) continue;
                if (capacity < (1.0 + m) * s.f_res_n * (1.0 - kinetics::kFractionTolerance)) {
                    add(Severity::error, "margin-violation", c->id,
                        "F_max(0) = " + num(capacity) + " N is below (1 + " + num(m) + ") * F_res = " +
                            num((1.0 + m) * s.f_res_n) + " N of '" + s.id + "'");
                }
            }
            if (!usable) continue;

            shelf_life(s, group);
            function_window(s, group, conditions);
        }
    }

    // Failure time of a fresh group under one condition (mid curves).
    std::optional<double> fresh_failure(const EnergyStoragePart& s, const std::vector<const ConstraintPart*>& group,
                                        const std::string& cond) const {
        std::vector<sim::LoadedState> members;
        for (const auto* c : group) {
            const auto* curve = lib.find_curve(c->material_id, cond);
            if (!curve) return std::nullopt;
            const auto* m = lib.find_material(c->material_id);
            members.push_back({kinetics::fresh_state(*curve),
                               c->count * units::force_from_stress(*m->sigma_i_mpa, c->a0_mm2)});
        }
        return sim::group_crossing_time(members, s.f_res_n);
    }

    void shelf_life(const EnergyStoragePart& s, const std::vector<const ConstraintPart*>& group) {
        double fmax = 0.0;
        for (const auto* c : group) {
            const auto* curve = lib.find_curve(c->material_id, opts.shelf_condition);
            if (!curve) {
                add(Severity::info, "shelf-life-unknown", c->id,
                    "no '" + opts.shelf_condition + "' curve for '" + c->material_id + "'");
                return;
            }
            const auto* m = lib.find_material(c->material_id);
            fmax += sim::f_max(*c, kinetics::fraction_at(*curve, opts.shelf_horizon_s), *m);
        }
        if (fmax < s.f_res_n) {
            add(Severity::warning, "shelf-life", group.front()->id,
                "under '" + opts.shelf_condition + "' F_max after " + num(opts.shelf_horizon_s / units::kDay) +
                    " d is " + num(fmax) + " N < F_res " + num(s.f_res_n) + " N of '" + s.id + "'");
            return;
        }
        if (auto t = fresh_failure(s, group, opts.shelf_condition); t && *t < 180.0 * units::kDay) {
            add(Severity::info, "shelf-life-tier", group.front()->id,
                "predicted shelf life " + num(*t / units::kDay) + " d is under six months");
        }
    }

    void function_window(const EnergyStoragePart& s, const std::vector<const ConstraintPart*>& group,
                         const std::set<std::string>& conditions) {
        std::optional<double> best;
        std::string best_cond;
        for (const auto& cond : conditions) {
            if (cond == opts.shelf_condition) continue;
            auto t = fresh_failure(s, group, cond);
            if (t && (!best || *t < *best)) {
                best = t;
                best_cond = cond;
            }
        }
        if (!best) {
            add(Severity::info, "no-trigger", group.front()->id,
                "no reachable condition makes the group on '" + s.id + "' fail");
            return;
        }
        if (*best > opts.function_window_s) {
            add(Severity::warning, "function-window", group.front()->id,
                "fastest failure (" + num(*best / units::kDay) + " d under '" + best_cond + "') exceeds " +
                    num(opts.function_window_s / units::kDay) + " d");
        }
    }
};

}  // namespace

std::vector<Finding> validate(const DeviceSpec& spec_in, const Scenario& scenario, const MaterialLibrary& lib,
                              const ValidateOptions& opts) {
    DeviceSpec spec = spec_in;
    canonicalize(spec);
    Checker ck{spec, scenario, lib, opts, {}};
    ck.structure();
    const auto conds = ck.reachable_conditions();
    ck.kinetics(conds);

    auto out = std::move(ck.out);
    std::sort(out.begin(), out.end(), [](const Finding& a, const Finding& b) {
        return std::tie(a.subject, a.code, a.message) < std::tie(b.subject, b.code, b.message);
    });
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace dtf
