#include <doctest.h>

#include <algorithm>

#include "dtf/device.hpp"
#include "dtf/error.hpp"
#include "support.hpp"

using namespace dtf;
using dtf::test::days;
using dtf::test::document;
using dtf::test::seed;

namespace {

bool has_code(const std::vector<Finding>& fs, std::string_view code, std::string_view subject = {}) {
    return std::any_of(fs.begin(), fs.end(),
                       [&](const Finding& f) { return f.code == code && (subject.empty() || f.subject == subject); });
}

}  // namespace

TEST_CASE("shipped fixtures validate without errors") {
    for (const char* path : {"fixtures/soil.dtf", "fixtures/seeder.dtf", "fixtures/reef.dtf"}) {
        INFO(path);
        const auto doc = document(path);
        REQUIRE(doc.diagnostics.empty());
        for (const auto& s : doc.scenarios) {
            const auto* d = doc.find_device(*s.device_id);
            REQUIRE(d);
            CHECK_FALSE(has_errors(validate(*d, s, seed())));
        }
    }
}

TEST_CASE("soil restorer has no findings; doubled load breaks the margin") {
    const auto doc = document("fixtures/soil.dtf");
    auto device = doc.devices.at(0);
    const auto& scenario = doc.scenarios.at(0);
    CHECK(validate(device, scenario, seed()).empty());

    device.storages.at(0).f_res_n *= 2.0;
    const auto fs = validate(device, scenario, seed());
    CHECK(has_code(fs, "margin-violation", "mg-strip"));
}

TEST_CASE("F_max(0) is count * sigma_i * a0") {
    const auto doc = document("fixtures/reef.dtf");
    const auto& reef = doc.devices.at(0);
    // 12 MPa * 0.25 mm2 = 3 N per alginate strip.
    CHECK(group_capacity(reef, seed(), "float-hinge") == doctest::Approx(3.0));
    CHECK(group_capacity(reef, seed(), "settle-hinge") == doctest::Approx(6.0));
    const auto soil = document("fixtures/soil.dtf");
    CHECK(group_capacity(soil.devices.at(0), seed(), "rubber-ring") == doctest::Approx(9.6));
}

TEST_CASE("beeswax under immersion only is a missing-curve finding") {
    const auto doc = dsl::parse_document(R"(
device wax {
  initial-context: wet
  constraint plug {
    material: beeswax
    a0: 4 mm2
    restrains: spring
  }
  storage spring {
    form: compression
    material: pha
    f-res: 2 N
  }
}
scenario soak {
  horizon: 10 d
  context wet {
    condition: underwater-microbes
  }
}
)");
    REQUIRE(doc.diagnostics.empty());
    const auto fs = validate(doc.devices.at(0), doc.scenarios.at(0), seed());
    CHECK(has_code(fs, "missing-curve", "plug"));
    CHECK(has_errors(fs));
}

TEST_CASE("unmapped reachable contexts are reported") {
    auto doc = document("fixtures/reef.dtf");
    auto scenario = doc.scenarios.at(0);
    scenario.context_conditions.erase("sunk");
    const auto fs = validate(doc.devices.at(0), scenario, seed());
    CHECK(has_code(fs, "unmapped-context", "sunk"));
}

TEST_CASE("slow groups get a function-window warning") {
    const auto doc = document("fixtures/reef.dtf");
    const auto fs = validate(doc.devices.at(0), doc.scenarios.at(0), seed());
    CHECK(has_code(fs, "function-window", "second-latch"));
    CHECK_FALSE(has_code(fs, "function-window", "first-latch"));
}

TEST_CASE("validate is pure and ordered") {
    const auto doc = document("fixtures/reef.dtf");
    const auto a = validate(doc.devices.at(0), doc.scenarios.at(0), seed());
    const auto b = validate(doc.devices.at(0), doc.scenarios.at(0), seed());
    CHECK(a == b);
    CHECK(std::is_sorted(a.begin(), a.end(), [](const Finding& x, const Finding& y) {
        return std::tie(x.subject, x.code, x.message) < std::tie(y.subject, y.code, y.message);
    }));
}

TEST_CASE("effective_condition: override, base mapping, unmapped state") {
    const auto doc = document("fixtures/reef.dtf");
    auto s = doc.scenarios.at(0);
    CHECK(effective_condition(s, "floating", days(1)) == "underwater-microbes");
    s.overrides.push_back({"storm", "floating", days(2), days(3), "room"});
    CHECK(effective_condition(s, "floating", days(2)) == "room");
    CHECK(effective_condition(s, "floating", days(2.5)) == "room");
    CHECK(effective_condition(s, "floating", days(3)) == "underwater-microbes");
    CHECK(effective_condition(s, "sunk", days(2.5)) == "underwater-microbes");
    CHECK_THROWS_AS(effective_condition(s, "buried", 0.0), UnmappedState);
}

TEST_CASE("canonicalize sorts parts and trigger subjects") {
    DeviceSpec d;
    d.constraints = {{"b", "mg", 1, 1, {}, "s", {}}, {"a", "mg", 1, 1, {}, "s", {}}};
    d.transformations = {{"t", {TriggerKind::all_failed, {"b", "a"}}, {{EffectKind::open, "x"}}}};
    canonicalize(d);
    CHECK(d.constraints.front().id == "a");
    CHECK(d.transformations.front().trigger.subjects == std::vector<std::string>{"a", "b"});
}
