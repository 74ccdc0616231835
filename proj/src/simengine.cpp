#include "dtf/simengine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <tuple>

#include "dtf/error.hpp"
#include "dtf/specdsl.hpp"
#include "dtf/units.hpp"

namespace dtf::sim {

namespace {
constexpr std::array<std::pair<EventKind, std::string_view>, 6> kEventNames{{
    {EventKind::constraint_failed, "constraint_failed"},
    {EventKind::transformation_fired, "transformation_fired"},
    {EventKind::context_changed, "context_changed"},
    {EventKind::courier_depleted, "courier_depleted"},
    {EventKind::incentive_consumed, "incentive_consumed"},
    {EventKind::horizon_reached, "horizon_reached"},
}};
}  // namespace

std::string_view to_string(EventKind k) {
    for (const auto& [e, n] : kEventNames)
        if (e == k) return n;
    return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
    for (const auto& [e, n] : kEventNames)
        if (n == s) return e;
    return std::nullopt;
}

double f_max(const ConstraintPart& constraint, double fraction, const Material& material) {
    return constraint.count * fraction * units::force_from_stress(material.sigma_i_mpa.value_or(0.0), constraint.a0_mm2);
}

double courier_release(const CourierPart& courier, const CourierCurve& curve, double t) {
    const auto& s = curve.samples;
    if (t <= 0.0 || s.empty()) return 0.0;
    // A censored curve stopped being observed before release finished.
    if (t >= s.back().time_s) return courier.payload_mass_g * (curve.censored ? s.back().released_fraction : 1.0);
    double t0 = 0.0, f0 = 0.0;
    for (const auto& x : s) {
        if (t <= x.time_s) {
            const double u = x.time_s > t0 ? (t - t0) / (x.time_s - t0) : 1.0;
            return courier.payload_mass_g * (f0 + u * (x.released_fraction - f0));
        }
        t0 = x.time_s;
        f0 = x.released_fraction;
    }
    return courier.payload_mass_g;
}

// ---------------------------------------------------------------------------
// Crossing solvers
// ---------------------------------------------------------------------------

namespace {

double group_force(std::span<const LoadedState> members, double dt) {
    double f = 0.0;
    for (const auto& m : members) f += m.capacity_n * m.state.fraction_after(dt);
    return f;
}

bool homogeneous(std::span<const LoadedState> members) {
    const auto& a = members.front().state;
    return std::all_of(members.begin(), members.end(), [&](const LoadedState& m) {
        return m.state.curve == a.curve && m.state.current_fraction == a.current_fraction &&
               m.state.equivalent_exposure == a.equivalent_exposure;
    });
}

}  // namespace

std::optional<double> group_crossing_time_scan(std::span<const LoadedState> members, double f_res_n) {
    if (members.empty()) return std::nullopt;
    if (group_force(members, 0.0) <= f_res_n) return 0.0;

    // Every member is linear in dt between these points.
    std::vector<double> bps{0.0};
    for (const auto& m : members) {
        const auto& st = m.state;
        if (!st.curve) continue;
        const double e = st.equivalent_exposure;
        for (const auto& s : st.curve->samples)
            if (s.time_s > e) bps.push_back(s.time_s - e);
        if (auto t = kinetics::invert_fraction(*st.curve, st.current_fraction); t && *t > e) bps.push_back(*t - e);
        if (auto z = kinetics::zero_crossing(*st.curve); z && *z > e) bps.push_back(*z - e);
    }
    std::sort(bps.begin(), bps.end());
    bps.erase(std::unique(bps.begin(), bps.end()), bps.end());

    double prev_t = 0.0;
    double prev_f = group_force(members, 0.0);
    for (std::size_t i = 1; i < bps.size(); ++i) {
        const double t = bps[i];
        const double f = group_force(members, t);
        if (f <= f_res_n) {
            // prev_f > f_res >= f, linear in between.
            const double u = (prev_f - f_res_n) / (prev_f - f);
            return prev_t + u * (t - prev_t);
        }
        prev_t = t;
        prev_f = f;
    }
    // Past the last breakpoint every member is flat or still sloping on an
    // extrapolated tail that ends in a zero crossing already listed, so the
    // force is constant.
    return std::nullopt;
}

std::optional<double> group_crossing_time(std::span<const LoadedState> members, double f_res_n) {
    if (members.empty()) return std::nullopt;
    if (!homogeneous(members)) return group_crossing_time_scan(members, f_res_n);
    double capacity = 0.0;
    for (const auto& m : members) capacity += m.capacity_n;
    if (!(capacity > 0.0)) return 0.0;
    return kinetics::time_to_fraction(members.front().state, f_res_n / capacity);
}

std::optional<double> single_group_failure_time(const DegradationCurve& curve, double capacity_n, double f_res_n) {
    const LoadedState m{kinetics::fresh_state(curve), capacity_n};
    return group_crossing_time(std::span<const LoadedState>(&m, 1), f_res_n);
}

// ---------------------------------------------------------------------------
// Event loop
// ---------------------------------------------------------------------------

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double instant_tolerance(double t) { return 1e-9 * std::max(1.0, std::fabs(t)); }

struct LiveConstraint {
    const ConstraintPart* part = nullptr;
    const Material* material = nullptr;
    double capacity_n = 0.0;
    kinetics::DegradationState state;
    bool failed = false;
    bool detached = false;
};

struct Group {
    const EnergyStoragePart* storage = nullptr;
    std::vector<std::size_t> members;  // indices into constraints, sorted by id
    bool failed = false;
    bool detached = false;
};

struct LiveCourier {
    const CourierPart* part = nullptr;
    const CourierCurve* curve = nullptr;
    std::optional<double> start_s;
    bool depleted = false;
    bool detached = false;
    // Censored release curves never finish.
    double end_time() const {
        if (curve->censored) return std::numeric_limits<double>::infinity();
        return *start_s + (curve->samples.empty() ? 0.0 : curve->samples.back().time_s);
    }
};

struct LiveIncentive {
    const IncentivePart* part = nullptr;
    const IncentiveRecord* record = nullptr;
    std::optional<double> exposed_s;
    bool consumed = false;
    bool detached = false;
};

struct Stamped {
    double time;
    std::size_t round;
    SimEvent event;
};

class Engine {
public:
    Engine(const DeviceSpec& spec, const Scenario& scenario, const MaterialLibrary& lib, const SimOptions& opts)
        : spec_(spec), scenario_(scenario), lib_(lib), opts_(opts) {
        canonicalize(spec_);
        canonicalize(scenario_);
        if (!(scenario_.horizon_s > 0.0)) throw SimulationError("scenario '" + scenario_.id + "' has no positive horizon");
        setup();
    }

    TimelineReport run() {
        report_.device_id = spec_.id;
        report_.scenario_id = scenario_.id;
        report_.calib = opts_.calib;
        report_.horizon_s = scenario_.horizon_s;

        const double horizon = scenario_.horizon_s;
        condition_ = effective_condition(scenario_, context_, 0.0);
        load_curves(true);
        process_instant();

        while (t_ < horizon) {
            const double t_end = std::min(horizon, next_boundary());
            const double t_next = std::min(next_event_time(), t_end);
            record_segment(t_, t_next);
            advance_to(t_next);
            const std::string cond = effective_condition(scenario_, context_, t_);
            if (cond != condition_) {
                condition_ = cond;
                load_curves(false);
            }
            process_instant();
        }
        record_point(t_);
        emit(EventKind::horizon_reached, scenario_.id, "context=" + context_ + ";condition=" + condition_);
        flush();
        report_.final_context = context_;
        return std::move(report_);
    }

private:
    DeviceSpec spec_;
    Scenario scenario_;
    const MaterialLibrary& lib_;
    SimOptions opts_;

    std::vector<LiveConstraint> constraints_;
    std::vector<Group> groups_;
    std::vector<LiveCourier> couriers_;
    std::vector<LiveIncentive> incentives_;
    std::vector<bool> fired_;

    double t_ = 0.0;
    std::string context_;
    std::string condition_;
    std::size_t round_ = 0;
    std::vector<Stamped> pending_;
    TimelineReport report_;

    void setup() {
        context_ = spec_.initial_context;
        for (const auto& c : spec_.constraints) {
            LiveConstraint lc;
            lc.part = &c;
            lc.material = lib_.find_material(c.material_id);
            if (!lc.material) throw SimulationError("constraint '" + c.id + "' uses unknown material '" + c.material_id + "'");
            if (!lc.material->sigma_i_mpa)
                throw SimulationError("material '" + c.material_id + "' has no initial strength sigma-i");
            lc.capacity_n = c.count * units::force_from_stress(*lc.material->sigma_i_mpa, c.a0_mm2);
            constraints_.push_back(lc);
        }
        for (const auto& s : spec_.storages) {
            Group g;
            g.storage = &s;
            for (std::size_t i = 0; i < constraints_.size(); ++i)
                if (constraints_[i].part->restrains == s.id) g.members.push_back(i);
            groups_.push_back(std::move(g));
        }
        for (const auto& c : spec_.constraints)
            if (!spec_.find_storage(c.restrains))
                throw SimulationError("constraint '" + c.id + "' restrains unknown storage '" + c.restrains + "'");

        auto targeted = [&](EffectKind kind, const std::string& id) {
            for (const auto& t : spec_.transformations)
                for (const auto& e : t.effects)
                    if (e.kind == kind && e.target == id) return true;
            return false;
        };
        for (const auto& c : spec_.couriers) {
            LiveCourier lc;
            lc.part = &c;
            lc.curve = lib_.find_courier_curve_by_id(c.curve_id);
            if (!lc.curve) throw MissingCurve("courier '" + c.id + "' uses unknown courier curve '" + c.curve_id + "'");
            if (!targeted(EffectKind::start_courier, c.id)) lc.start_s = 0.0;
            couriers_.push_back(lc);
        }
        for (const auto& i : spec_.incentives) {
            LiveIncentive li;
            li.part = &i;
            li.record = lib_.find_incentive(i.record_id);
            if (!li.record) throw SimulationError("incentive '" + i.id + "' uses unknown record '" + i.record_id + "'");
            if (!targeted(EffectKind::expose, i.id)) li.exposed_s = 0.0;
            incentives_.push_back(li);
        }
        fired_.assign(spec_.transformations.size(), false);
    }

    // Puts every constraint onto the curve for the current condition.
    void load_curves(bool fresh) {
        for (auto& c : constraints_) {
            if (c.detached) continue;
            const auto* curve =
                find_calibrated_curve(lib_, c.part->material_id, condition_, opts_.calib);
            if (!curve) {
                if (!c.failed)
                    throw MissingCurve("no degradation curve for material '" + c.part->material_id +
                                       "' under condition '" + condition_ + "' (constraint '" + c.part->id + "')");
                c.state = {nullptr, c.state.current_fraction, 0.0};
                continue;
            }
            c.state = fresh ? kinetics::fresh_state(*curve) : kinetics::switch_condition(c.state, *curve);
        }
    }

    double next_boundary() const {
        double b = kInf;
        for (const auto& o : scenario_.overrides) {
            if (o.state != context_) continue;
            if (o.t0_s > t_) b = std::min(b, o.t0_s);
            if (o.t1_s > t_) b = std::min(b, o.t1_s);
        }
        return b;
    }

    std::vector<LoadedState> members_of(const Group& g) const {
        std::vector<LoadedState> out;
        for (auto i : g.members) {
            const auto& c = constraints_[i];
            if (!c.detached) out.push_back({c.state, c.capacity_n});
        }
        return out;
    }

    double group_force_now(const Group& g) const {
        double f = 0.0;
        for (auto i : g.members)
            if (!constraints_[i].detached) f += constraints_[i].capacity_n * constraints_[i].state.current_fraction;
        return f;
    }

    bool group_live(const Group& g) const {
        if (g.failed || g.detached) return false;
        return std::any_of(g.members.begin(), g.members.end(),
                           [&](std::size_t i) { return !constraints_[i].detached; });
    }

    double next_event_time() const {
        double best = kInf;
        for (const auto& g : groups_) {
            if (!group_live(g)) continue;
            const auto m = members_of(g);
            if (auto dt = group_crossing_time(m, g.storage->f_res_n)) best = std::min(best, t_ + *dt);
        }
        for (const auto& c : couriers_)
            if (c.start_s && !c.depleted && !c.detached) best = std::min(best, c.end_time());
        for (const auto& i : incentives_)
            if (i.exposed_s && !i.consumed && !i.detached)
                best = std::min(best, *i.exposed_s + i.record->consumption_delay_s);
        return best;
    }

    void advance_to(double t) {
        const double dt = t - t_;
        if (dt > 0.0)
            for (auto& c : constraints_)
                if (!c.detached) c.state.advance(dt);
        t_ = t;
    }

    void emit(EventKind kind, std::string subject, std::string detail) {
        pending_.push_back({t_, round_, {t_, kind, std::move(subject), std::move(detail)}});
        if (report_.events.size() + pending_.size() > opts_.max_events)
            throw SimulationError("event limit of " + std::to_string(opts_.max_events) + " exceeded");
    }

    void flush() {
        std::stable_sort(pending_.begin(), pending_.end(), [](const Stamped& a, const Stamped& b) {
            return std::tie(a.time, a.round) < std::tie(b.time, b.round);
        });
        for (auto& p : pending_) report_.events.push_back(std::move(p.event));
        pending_.clear();
    }

    // Detection and firing rounds at the current instant until nothing new
    // happens.
    void process_instant() {
        const double tol = instant_tolerance(t_);
        for (;;) {
            bool any = false;

            // Detection round: failures and timers due now, ordered by id.
            std::vector<SimEvent> found;
            for (auto& g : groups_) {
                if (!group_live(g)) continue;
                const auto m = members_of(g);
                const auto dt = group_crossing_time(m, g.storage->f_res_n);
                if (!dt || *dt > tol) continue;
                g.failed = true;
                const double force = group_force_now(g);
                for (auto i : g.members) {
                    auto& c = constraints_[i];
                    if (c.detached || c.failed) continue;
                    c.failed = true;
                    found.push_back({t_, EventKind::constraint_failed, c.part->id,
                                     "storage=" + g.storage->id + ";condition=" + condition_ + ";context=" + context_ +
                                         ";f_max_N=" + dsl::format_number(force) +
                                         ";f_res_N=" + dsl::format_number(g.storage->f_res_n)});
                }
            }
            for (auto& c : couriers_) {
                if (!c.start_s || c.depleted || c.detached || c.end_time() > t_ + tol) continue;
                c.depleted = true;
                found.push_back({t_, EventKind::courier_depleted, c.part->id,
                                 "payload=" + c.part->payload_name +
                                     ";released_g=" + dsl::format_number(c.part->payload_mass_g)});
            }
            for (auto& i : incentives_) {
                if (!i.exposed_s || i.consumed || i.detached ||
                    *i.exposed_s + i.record->consumption_delay_s > t_ + tol)
                    continue;
                i.consumed = true;
                found.push_back({t_, EventKind::incentive_consumed, i.part->id, "record=" + i.record->id});
            }
            if (!found.empty()) {
                std::stable_sort(found.begin(), found.end(),
                                 [](const SimEvent& a, const SimEvent& b) { return a.subject < b.subject; });
                for (auto& e : found) emit(e.kind, std::move(e.subject), std::move(e.detail));
                ++round_;
                any = true;
            }

            // Firing round.
            bool fired_any = false;
            for (std::size_t k = 0; k < spec_.transformations.size(); ++k) {
                if (fired_[k] || !triggered(spec_.transformations[k])) continue;
                fired_[k] = true;
                fire(spec_.transformations[k]);
                fired_any = true;
            }
            if (fired_any) {
                ++round_;
                any = true;
            }
            if (!any) break;
        }
        flush();
    }

    bool triggered(const Transformation& t) const {
        const auto& subj = t.trigger.subjects;
        switch (t.trigger.kind) {
            case TriggerKind::all_failed:
                return !subj.empty() && std::all_of(subj.begin(), subj.end(), [&](const std::string& id) {
                    for (const auto& c : constraints_)
                        if (c.part->id == id) return c.failed;
                    return false;
                });
            case TriggerKind::courier_depleted:
                return !subj.empty() && std::all_of(subj.begin(), subj.end(), [&](const std::string& id) {
                    for (const auto& c : couriers_)
                        if (c.part->id == id) return c.depleted;
                    return false;
                });
            case TriggerKind::incentive_consumed:
                return !subj.empty() && std::all_of(subj.begin(), subj.end(), [&](const std::string& id) {
                    for (const auto& i : incentives_)
                        if (i.part->id == id) return i.consumed;
                    return false;
                });
        }
        return false;
    }

    void fire(const Transformation& t) {
        std::string effects;
        for (const auto& e : t.effects) {
            if (!effects.empty()) effects += ',';
            effects += std::string(to_string(e.kind)) + ":" + e.target;
        }
        emit(EventKind::transformation_fired, t.id,
             "trigger=" + std::string(to_string(t.trigger.kind)) + ";effects=" + effects);

        for (const auto& e : t.effects) {
            switch (e.kind) {
                case EffectKind::release_motion:
                case EffectKind::open: break;
                case EffectKind::detach: detach(e.target); break;
                case EffectKind::start_courier:
                    for (auto& c : couriers_)
                        if (c.part->id == e.target && !c.start_s) c.start_s = t_;
                    break;
                case EffectKind::expose:
                    for (auto& i : incentives_)
                        if (i.part->id == e.target && !i.exposed_s) i.exposed_s = t_;
                    break;
                case EffectKind::set_context: {
                    if (e.target == context_) break;
                    const std::string from = context_;
                    context_ = e.target;
                    const std::string cond = effective_condition(scenario_, context_, t_);
                    emit(EventKind::context_changed, context_, "from=" + from + ";condition=" + cond);
                    if (cond != condition_) {
                        condition_ = cond;
                        load_curves(false);
                    }
                    break;
                }
            }
        }
    }

    void detach(const std::string& id) {
        for (auto& c : constraints_)
            if (c.part->id == id) c.detached = true;
        for (auto& g : groups_)
            if (g.storage->id == id) g.detached = true;
        for (auto& c : couriers_)
            if (c.part->id == id) c.detached = true;
        for (auto& i : incentives_)
            if (i.part->id == id) i.detached = true;
    }

    // Trace sampling over [a, b] with the states as of time a.
    void record_segment(double a, double b) {
        const std::size_t n = std::max<std::size_t>(2, opts_.trace_points);
        for (std::size_t k = 0; k < n; ++k) {
            const double tau = k + 1 == n ? b : a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
            record_at(tau, tau - a);
            if (b == a) break;
        }
    }

    void record_point(double t) { record_at(t, 0.0); }

    void record_at(double t, double dt) {
        auto push = [&](const std::string& key, double v, auto& traces) {
            auto& tr = traces[key];
            if (!tr.empty() && tr.back().time_s == t) {
                tr.back().value = v;
                return;
            }
            tr.push_back({t, v});
        };
        for (const auto& g : groups_) {
            double sum = 0.0;
            bool any = false;
            for (auto i : g.members) {
                const auto& c = constraints_[i];
                if (c.detached) continue;
                const double f = f_max(*c.part, c.state.fraction_after(dt), *c.material);
                push(c.part->id, f, report_.traces);
                sum += f;
                any = true;
            }
            if (any && !g.detached) push(g.storage->id, sum, report_.traces);
        }
        for (const auto& c : couriers_) {
            const double released = c.start_s ? courier_release(*c.part, *c.curve, t - *c.start_s) : 0.0;
            push(c.part->id, released, report_.release_traces);
        }
    }
};

}  // namespace

TimelineReport simulate(const DeviceSpec& spec, const Scenario& scenario, const MaterialLibrary& lib,
                        const SimOptions& opts) {
    return Engine(spec, scenario, lib, opts).run();
}

}  // namespace dtf::sim
