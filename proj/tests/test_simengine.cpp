#include <doctest.h>

#include <algorithm>
#include <random>

#include "dtf/error.hpp"
#include "dtf/simengine.hpp"
#include "support.hpp"

using namespace dtf;
using namespace dtf::sim;
using dtf::test::days;
using dtf::test::document;
using dtf::test::hours;
using dtf::test::oracle_first_below;
using dtf::test::oracle_fraction;
using dtf::test::seed;

namespace {

std::vector<SimEvent> of_kind(const TimelineReport& r, EventKind k) {
    std::vector<SimEvent> out;
    for (const auto& e : r.events)
        if (e.kind == k) out.push_back(e);
    return out;
}

// A two-condition lab library and a one-strip device used to probe the
// engine with hand-computable numbers.
const char* kLab = R"(
matlib lab {
  condition dry {
    medium: air
    temperature: 25 C
    rh: 40 pct
  }
  condition wet {
    medium: immersion
    temperature: 25 C
  }
  material strip {
    name: "Strip"
    roles: [constraint]
    sigma-i: 10 MPa
  }
  material band {
    name: "Band"
    roles: [constraint]
    sigma-i: 4 MPa
  }
  material shell {
    name: "Shell"
    roles: [courier]
  }
  curve strip-dry {
    material: strip
    condition: dry
    samples: [(0 s, 1), (10 d, 0.5)]
    censored: true
  }
  curve strip-wet {
    material: strip
    condition: wet
    samples: [(0 s, 1), (2 d, 0.5), (4 d, 0)]
  }
  curve band-dry {
    material: band
    condition: dry
    samples: [(0 s, 1), (1 d, 0.9), (3 d, 0.3)]
  }
  curve band-wet {
    material: band
    condition: wet
    samples: [(0 s, 1), (1 d, 0.2)]
  }
  courier-curve shell-release {
    material: shell
    samples: [(0 s, 0), (1 h, 0.5), (3 h, 0.9)]
    censored: true
  }
}

device probe {
  initial-context: field
  constraint strip-a {
    material: strip
    a0: 1 mm2
    restrains: spring
  }
  storage spring {
    form: compression
    material: strip
    f-res: 4 N
  }
}
)";

struct Lab {
    dsl::Document doc = dsl::parse_document(kLab);
    const MaterialLibrary& lib() const { return *doc.library; }
    const DeviceSpec& probe() const { return doc.devices.at(0); }
};

Scenario scenario(std::string base, double horizon) {
    Scenario s;
    s.id = "probe-run";
    s.horizon_s = horizon;
    s.context_conditions["field"] = std::move(base);
    return s;
}

}  // namespace

TEST_CASE("lab library parses") {
    Lab lab;
    REQUIRE(lab.doc.diagnostics.empty());
    REQUIRE(lab.doc.library);
}

TEST_CASE("soil restorer: failure time matches an independent oracle on every calibration") {
    const auto doc = document("fixtures/soil.dtf");
    const auto& d = doc.devices.at(0);
    const auto& s = doc.scenarios.at(0);
    for (auto calib : {Calibration::lo, Calibration::mid, Calibration::hi}) {
        const auto& curve = lookup_curve(seed(), "mg", "ph4-immersion", calib);
        const auto expected = oracle_first_below([&](double t) { return 9.6 * oracle_fraction(curve, t); }, 8.0,
                                                 s.horizon_s);
        REQUIRE(expected);
        const auto r = simulate(d, s, seed(), {calib});
        const auto failed = of_kind(r, EventKind::constraint_failed);
        REQUIRE(failed.size() == 1);
        CHECK(failed[0].subject == "mg-strip");
        CHECK(failed[0].time_s == doctest::Approx(*expected).epsilon(1e-9));

        // The transformation fires at the same instant and starts the courier.
        const auto fired = of_kind(r, EventKind::transformation_fired);
        REQUIRE(fired.size() == 1);
        CHECK(fired[0].time_s == failed[0].time_s);
        CHECK(fired[0].detail.find("start-courier:caco3-pellet") != std::string::npos);

        const auto depleted = of_kind(r, EventKind::courier_depleted);
        REQUIRE(depleted.size() == 1);
        CHECK(depleted[0].time_s == doctest::Approx(failed[0].time_s + hours(72)));
    }
}

TEST_CASE("soil restorer lo-calibration failure by hand") {
    // 9.6 N * f = 8 N on the first segment (0, 1) -> (3.7 h, 0.8).
    const double f = 8.0 / 9.6;
    const double t = hours(3.7) * (1.0 - f) / 0.2;
    const auto doc = document("fixtures/soil.dtf");
    const auto r = simulate(doc.devices.at(0), doc.scenarios.at(0), seed(), {Calibration::lo});
    CHECK(of_kind(r, EventKind::constraint_failed).at(0).time_s == doctest::Approx(t));
}

TEST_CASE("forest seeder: failure, exposure, consumption") {
    const auto doc = document("fixtures/seeder.dtf");
    const auto& d = doc.devices.at(0);
    const auto r = simulate(d, *doc.find_scenario("spring-forest"), seed());
    std::vector<EventKind> kinds;
    for (const auto& e : r.events) kinds.push_back(e.kind);
    CHECK(kinds == std::vector<EventKind>{EventKind::constraint_failed, EventKind::transformation_fired,
                                          EventKind::incentive_consumed, EventKind::transformation_fired,
                                          EventKind::horizon_reached});
    const double t_fail = r.events[0].time_s;
    CHECK(r.events[2].time_s == doctest::Approx(t_fail + days(2)));
    CHECK(r.events[3].subject == "seeds-carried");

    const auto shelf = simulate(d, *doc.find_scenario("shelf"), seed());
    CHECK(of_kind(shelf, EventKind::constraint_failed).empty());
    CHECK(shelf.events.back().kind == EventKind::horizon_reached);
    CHECK(shelf.events.back().time_s == days(90));
}

TEST_CASE("aquatic reef: two ordered failures and a context change") {
    const auto doc = document("fixtures/reef.dtf");
    const auto r = simulate(doc.devices.at(0), doc.scenarios.at(0), seed());
    const auto failed = of_kind(r, EventKind::constraint_failed);
    REQUIRE(failed.size() == 2);
    CHECK(failed[0].subject == "first-latch");
    CHECK(failed[1].subject == "second-latch");
    CHECK(r.final_context == "sunk");

    // Both groups age from t = 0 under the same condition; the second holds
    // 6 N against 2.5 N.
    const auto& curve = lookup_curve(seed(), "alginate", "underwater-microbes");
    auto t1 = oracle_first_below([&](double t) { return 3.0 * oracle_fraction(curve, t); }, 2.5, days(40));
    auto t2 = oracle_first_below([&](double t) { return 6.0 * oracle_fraction(curve, t); }, 2.5, days(40));
    REQUIRE(t1);
    REQUIRE(t2);
    CHECK(failed[0].time_s == doctest::Approx(*t1).epsilon(1e-9));
    CHECK(failed[1].time_s == doctest::Approx(*t2).epsilon(1e-9));

    const auto changed = of_kind(r, EventKind::context_changed);
    REQUIRE(changed.size() == 1);
    CHECK(changed[0].subject == "sunk");
    CHECK(changed[0].time_s == failed[0].time_s);
    CHECK(classify_pattern(r) == std::set<Pattern>{Pattern::staggered});
}

TEST_CASE("override switches condition with a strength-matched shift") {
    Lab lab;
    auto s = scenario("dry", days(20));
    s.overrides.push_back({"soak", "field", days(5), days(100), "wet"});
    const auto r = simulate(lab.probe(), s, lab.lib());
    // Dry for 5 d: f = 0.75. On the wet curve 0.75 is reached at 1 d; 0.4
    // (4 N / 10 N) at 2.4 d, so 1.4 d after the switch.
    const auto failed = of_kind(r, EventKind::constraint_failed);
    REQUIRE(failed.size() == 1);
    CHECK(failed[0].time_s == doctest::Approx(days(6.4)));
    CHECK(detail_field(failed[0].detail, "condition") == "wet");
}

TEST_CASE("a censored curve that stays above the load never fails") {
    Lab lab;
    const auto r = simulate(lab.probe(), scenario("dry", days(400)), lab.lib());
    CHECK(of_kind(r, EventKind::constraint_failed).empty());
    // F_max holds at 5 N beyond the last sample.
    CHECK(r.traces.at("strip-a").back().value == doctest::Approx(5.0));
}

TEST_CASE("mixed group fails when the sum drops below the load") {
    Lab lab;
    auto d = lab.probe();
    d.constraints.push_back({"band-a", "band", 1.5, 1, {}, "spring", {}});  // 6 N
    const auto& strip = lookup_curve(lab.lib(), "strip", "dry");
    const auto& band = lookup_curve(lab.lib(), "band", "dry");
    auto force = [&](double t) { return 10.0 * oracle_fraction(strip, t) + 6.0 * oracle_fraction(band, t); };
    const auto expected = oracle_first_below(force, 8.0, days(30));
    d.storages[0].f_res_n = 8.0;
    const auto r = simulate(d, scenario("dry", days(30)), lab.lib());
    const auto failed = of_kind(r, EventKind::constraint_failed);
    REQUIRE(expected);
    // One event per member, at the same instant, in id order.
    REQUIRE(failed.size() == 2);
    CHECK(failed[0].subject == "band-a");
    CHECK(failed[1].subject == "strip-a");
    CHECK(failed[0].time_s == failed[1].time_s);
    CHECK(failed[0].time_s == doctest::Approx(*expected).epsilon(1e-9));
    CHECK(detail_field(failed[0].detail, "storage") == "spring");
    CHECK(std::stod(*detail_field(failed[0].detail, "f_max_N")) == doctest::Approx(8.0));
}

TEST_CASE("crossing solver matches brute force on random mixed groups") {
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int solved = 0;
    for (int n = 0; n < 500; ++n) {
        const int k = 1 + static_cast<int>(rng() % 4);
        std::vector<DegradationCurve> curves;
        curves.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) curves.push_back(dtf::test::random_curve(rng));
        std::vector<LoadedState> members;
        double now = 0.0;
        for (const auto& c : curves) {
            auto st = kinetics::fresh_state(c);
            st.advance(u(rng) * c.samples.back().time_s);
            members.push_back({st, 0.5 + 10.0 * u(rng)});
            now += members.back().capacity_n * st.current_fraction;
        }
        const double f_res = now * (0.05 + 0.9 * u(rng));
        auto force = [&](double dt) {
            double acc = 0.0;
            for (const auto& m : members)
                acc += m.capacity_n *
                       std::min(m.state.current_fraction,
                                oracle_fraction(*m.state.curve, m.state.equivalent_exposure + dt));
            return acc;
        };
        const auto expected = oracle_first_below(force, f_res, 1e12);
        const auto got = group_crossing_time(members, f_res);
        const auto scan = group_crossing_time_scan(members, f_res);
        REQUIRE(expected.has_value() == got.has_value());
        REQUIRE(scan.has_value() == got.has_value());
        if (!got) continue;
        ++solved;
        CHECK(*got == doctest::Approx(*expected).epsilon(1e-6));
        CHECK(*scan == doctest::Approx(*got).epsilon(1e-9));
    }
    CHECK(solved > 100);
}

TEST_CASE("homogeneous and scan solvers agree on identical members") {
    std::mt19937_64 rng(5);
    for (int n = 0; n < 300; ++n) {
        const auto c = dtf::test::random_curve(rng);
        auto st = kinetics::fresh_state(c);
        st.advance(c.samples.back().time_s * 0.3);
        const std::vector<LoadedState> members(1 + rng() % 3, LoadedState{st, 2.0});
        const double f_res = 2.0 * static_cast<double>(members.size()) * st.current_fraction * 0.6;
        const auto a = group_crossing_time(members, f_res);
        const auto b = group_crossing_time_scan(members, f_res);
        REQUIRE(a.has_value() == b.has_value());
        if (a) CHECK(*a == doctest::Approx(*b).epsilon(1e-9));
    }
}

TEST_CASE("courier conservation") {
    const auto doc = document("fixtures/soil.dtf");
    const auto& pellet = doc.devices.at(0).couriers.at(0);
    for (const auto& [id, curve] : seed().courier_curves()) {
        INFO(id);
        double prev = 0.0;
        const double end = curve.samples.back().time_s;
        for (int i = 0; i <= 400; ++i) {
            const double t = end * 1.2 * i / 400.0;
            const double g = courier_release(pellet, curve, t);
            CHECK(g >= prev);
            CHECK(g <= pellet.payload_mass_g);
            if (t >= end) CHECK(g == pellet.payload_mass_g);
            prev = g;
        }
    }
    const auto r = simulate(doc.devices.at(0), doc.scenarios.at(0), seed());
    const auto& trace = r.release_traces.at("caco3-pellet");
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i].value >= trace[i - 1].value);
    CHECK(trace.back().value == 2.0);
}

TEST_CASE("a censored release curve holds its last value and never depletes") {
    Lab lab;
    CourierPart p{"cap", "shell", "dye", 4.0, "shell-release"};
    const auto& c = *lab.lib().find_courier_curve_by_id("shell-release");
    CHECK(courier_release(p, c, hours(1)) == doctest::Approx(2.0));
    CHECK(courier_release(p, c, hours(100)) == doctest::Approx(3.6));

    auto d = lab.probe();
    d.couriers.push_back(p);
    const auto r = simulate(d, scenario("dry", days(2)), lab.lib());
    CHECK(of_kind(r, EventKind::courier_depleted).empty());
    CHECK(r.release_traces.at("cap").back().value == doctest::Approx(3.6));
}

TEST_CASE("Alginate releases no faster than starch at every shared sample") {
    const auto* alginate = seed().find_courier_curve_for("alginate");
    const auto* starch = seed().find_courier_curve_for("starch");
    REQUIRE(alginate);
    REQUIRE(starch);
    int shared = 0;
    for (const auto& a : alginate->samples)
        for (const auto& s : starch->samples)
            if (a.time_s == s.time_s) {
                ++shared;
                CHECK(a.released_fraction <= s.released_fraction);
            }
    CHECK(shared >= 5);
}

TEST_CASE("part order does not change the report") {
    const auto doc = document("fixtures/reef.dtf");
    auto d = doc.devices.at(0);
    const auto base = simulate(d, doc.scenarios.at(0), seed());
    std::reverse(d.constraints.begin(), d.constraints.end());
    std::reverse(d.storages.begin(), d.storages.end());
    std::reverse(d.transformations.begin(), d.transformations.end());
    CHECK(simulate(d, doc.scenarios.at(0), seed()) == base);
    CHECK(simulate(doc.devices.at(0), doc.scenarios.at(0), seed()) == base);
}

TEST_CASE("events are time-ordered and traces are bounded") {
    for (const char* path : {"fixtures/soil.dtf", "fixtures/seeder.dtf", "fixtures/reef.dtf"}) {
        const auto doc = document(path);
        for (const auto& s : doc.scenarios) {
            const auto r = simulate(*doc.find_device(*s.device_id), s, seed());
            CHECK(std::is_sorted(r.events.begin(), r.events.end(),
                                 [](const SimEvent& a, const SimEvent& b) { return a.time_s < b.time_s; }));
            CHECK(r.events.back().kind == EventKind::horizon_reached);
            for (const auto& [key, pts] : r.traces) {
                CHECK(pts.front().time_s == 0.0);
                CHECK(pts.back().time_s == doctest::Approx(s.horizon_s));
                for (std::size_t i = 1; i < pts.size(); ++i) {
                    CHECK(pts[i].time_s > pts[i - 1].time_s);
                    CHECK(pts[i].value <= pts[i - 1].value + 1e-12);
                }
            }
        }
    }
}

TEST_CASE("engine errors") {
    Lab lab;
    CHECK_THROWS_AS(simulate(lab.probe(), scenario("mars", days(1)), lab.lib()), MissingCurve);
    CHECK_THROWS_AS(simulate(lab.probe(), scenario("dry", 0.0), lab.lib()), SimulationError);
    Scenario unmapped = scenario("dry", days(1));
    unmapped.context_conditions.clear();
    unmapped.context_conditions["elsewhere"] = "dry";
    CHECK_THROWS_AS(simulate(lab.probe(), unmapped, lab.lib()), UnmappedState);

    auto d = lab.probe();
    d.constraints[0].material_id = "ghost";
    CHECK_THROWS_AS(simulate(d, scenario("dry", days(1)), lab.lib()), SimulationError);

    const auto soil = document("fixtures/soil.dtf");
    SimOptions tight;
    tight.max_events = 1;
    CHECK_THROWS_AS(simulate(soil.devices.at(0), soil.scenarios.at(0), seed(), tight), SimulationError);
}

TEST_CASE("pattern suite") {
    const auto doc = document("tests/data/patterns.dtf");
    REQUIRE(doc.diagnostics.empty());
    auto run = [&](const char* scenario) {
        const auto* s = doc.find_scenario(scenario);
        return classify_pattern(simulate(*doc.find_device(*s->device_id), *s, seed()));
    };
    CHECK(run("sync-desert") == std::set<Pattern>{Pattern::simultaneous});
    CHECK(run("stagger-water") == std::set<Pattern>{Pattern::staggered});
    CHECK(run("cascade-run") == std::set<Pattern>{Pattern::cascaded});
}

TEST_CASE("classify_pattern needs failures and honours the window") {
    TimelineReport r;
    r.horizon_s = 100;
    CHECK_THROWS_AS(classify_pattern(r), Error);
    r.events = {{10, EventKind::constraint_failed, "a", "condition=x"},
                {12, EventKind::constraint_failed, "b", "condition=x"}};
    CHECK(classify_pattern(r) == std::set<Pattern>{Pattern::staggered});
    CHECK(classify_pattern(r, 2.0) == std::set<Pattern>{Pattern::simultaneous});
    r.events.push_back({50, EventKind::constraint_failed, "c", "condition=y"});
    CHECK(classify_pattern(r, 2.0) == std::set<Pattern>{Pattern::simultaneous, Pattern::cascaded});
}

TEST_CASE("events CSV round-trips through the classifier") {
    const auto doc = document("fixtures/reef.dtf");
    const auto r = simulate(doc.devices.at(0), doc.scenarios.at(0), seed());
    const auto back = report_from_events_csv(events_csv(r));
    CHECK(back.events == r.events);
    CHECK(back.horizon_s == r.horizon_s);
    CHECK(back.scenario_id == r.scenario_id);
    CHECK(classify_pattern(back) == classify_pattern(r));
    CHECK_THROWS_AS(report_from_events_csv("nope\n"), ParseError);
}

TEST_CASE("exports are deterministic") {
    const auto doc = document("fixtures/soil.dtf");
    const auto a = simulate(doc.devices.at(0), doc.scenarios.at(0), seed());
    const auto b = simulate(doc.devices.at(0), doc.scenarios.at(0), seed());
    CHECK(events_csv(a) == events_csv(b));
    CHECK(traces_csv(a) == traces_csv(b));
    CHECK(releases_csv(a) == releases_csv(b));
    const auto svg = timeline_svg(a);
    CHECK(svg == timeline_svg(b));
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(traces_csv(a).rfind("time_s,part,f_max_N\n", 0) == 0);
    CHECK(releases_csv(a).rfind("time_s,courier,released_g\n", 0) == 0);
}

TEST_CASE("aggregate trace is at or below F_res at every failure") {
    for (const char* path : {"fixtures/soil.dtf", "fixtures/seeder.dtf", "fixtures/reef.dtf", "tests/data/patterns.dtf"}) {
        const auto doc = document(path);
        for (const auto& s : doc.scenarios) {
            const auto* d = doc.find_device(*s.device_id);
            const auto r = simulate(*d, s, seed());
            for (const auto& e : of_kind(r, EventKind::constraint_failed)) {
                const auto storage = *detail_field(e.detail, "storage");
                const auto& pts = r.traces.at(storage);
                const auto it = std::find_if(pts.begin(), pts.end(),
                                             [&](const TracePoint& p) { return p.time_s == e.time_s; });
                REQUIRE(it != pts.end());
                CHECK(it->value <= d->find_storage(storage)->f_res_n + 1e-6);
            }
        }
    }
}
