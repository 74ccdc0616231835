#include <doctest.h>

#include "dtf/error.hpp"
#include "dtf/matlib.hpp"
#include "support.hpp"

using namespace dtf;
using dtf::test::days;
using dtf::test::seed;

namespace {

DegradationCurve curve(std::string id, std::vector<CurveSample> samples, bool censored = false) {
    DegradationCurve c;
    c.id = std::move(id);
    c.material_id = "agar-mixture";
    c.condition_id = "forest";
    c.samples = std::move(samples);
    c.censored = censored;
    return c;
}

}  // namespace

TEST_CASE("ids are lowercase kebab-case") {
    CHECK(is_valid_id("agar-mixture"));
    CHECK(is_valid_id("ph4-immersion"));
    CHECK(is_valid_id("a"));
    CHECK_FALSE(is_valid_id(""));
    CHECK_FALSE(is_valid_id("Agar"));
    CHECK_FALSE(is_valid_id("-agar"));
    CHECK_FALSE(is_valid_id("agar-"));
    CHECK_FALSE(is_valid_id("agar--mix"));
    CHECK_FALSE(is_valid_id("agar_mix"));
}

TEST_CASE("seed library loads and is self-consistent") {
    const auto& lib = seed();
    CHECK(lib.id() == "seed");
    CHECK_NOTHROW(lib.check_integrity());
    CHECK(lib.conditions().size() == 7);

    int constraints = 0;
    for (const auto& [id, m] : lib.materials()) {
        CHECK(invariant_violations(m).empty());
        if (m.roles.contains(Role::constraint)) ++constraints;
    }
    CHECK(constraints == 6);
    for (const auto& [id, c] : lib.curves()) {
        INFO(id);
        CHECK(invariant_violations(c).empty());
    }
    for (const auto& [id, c] : lib.courier_curves()) CHECK(invariant_violations(c).empty());
}

TEST_CASE("seed initial strengths match hand values") {
    // F_max(0) = sigma_i * a0 for the soil strip: 64 MPa * 0.15 mm2.
    const auto* mg = seed().find_material("mg");
    REQUIRE(mg);
    CHECK(*mg->sigma_i_mpa * 0.15 == doctest::Approx(9.6));
    const auto* alginate = seed().find_material("alginate");
    REQUIRE(alginate);
    CHECK(*alginate->sigma_i_mpa * 0.25 == doctest::Approx(3.0));
}

TEST_CASE("curve lookup is exact on (material, condition, calib)") {
    const auto& lib = seed();
    CHECK(lib.find_curve("mg", "ph4-immersion"));
    CHECK(lib.find_curve("mg", "ph4-immersion", Calibration::lo)->calib == Calibration::lo);
    CHECK_FALSE(lib.find_curve("beeswax", "ph4-immersion"));
    CHECK_FALSE(lib.find_curve("beeswax", "underwater-microbes"));
    CHECK_THROWS_AS(lookup_curve(lib, "beeswax", "ph4-immersion"), NotFoundError);

    // Missing calibration variants fall back to mid.
    const auto* fallback = find_calibrated_curve(lib, "beeswax", "desert", Calibration::hi);
    REQUIRE(fallback);
    CHECK(fallback->calib == Calibration::mid);
}

TEST_CASE("curve invariants") {
    CHECK(invariant_violations(curve("ok", {{0, 1}, {10, 0.8}, {20, 0.8}, {30, 0}})).empty());
    CHECK_FALSE(invariant_violations(curve("first", {{5, 1}, {10, 0.8}})).empty());
    CHECK_FALSE(invariant_violations(curve("rise", {{0, 1}, {10, 0.6}, {20, 0.7}})).empty());
    CHECK_FALSE(invariant_violations(curve("time", {{0, 1}, {10, 0.6}, {10, 0.5}})).empty());
    CHECK_FALSE(invariant_violations(curve("range", {{0, 1}, {10, -0.1}})).empty());
}

TEST_CASE("courier invariants require an uncensored curve to finish") {
    CourierCurve c;
    c.id = "x";
    c.material_id = "starch";
    c.samples = {{0, 0}, {60, 0.5}, {120, 0.9}};
    CHECK_FALSE(invariant_violations(c).empty());
    c.censored = true;
    CHECK(invariant_violations(c).empty());
    c.samples.push_back({200, 0.7});
    CHECK_FALSE(invariant_violations(c).empty());
}

TEST_CASE("merge_entry unions monotone curves") {
    const auto& lib = seed();
    auto extra = curve("agar-extra", {{0, 1}, {days(5), 0.9}, {days(10.2), 0.8}});
    const auto merged = merge_entry(lib, extra);
    const auto* c = merged.find_curve("agar-mixture", "forest");
    REQUIRE(c);
    CHECK(c->id == "agar-mixture-forest");
    const auto& s = c->samples;
    CHECK(std::any_of(s.begin(), s.end(), [](const CurveSample& x) { return x.time_s == days(5); }));
    for (std::size_t i = 1; i < s.size(); ++i) {
        CHECK(s[i].time_s > s[i - 1].time_s);
        CHECK(s[i].fraction <= s[i - 1].fraction);
    }
    // The original snapshot is untouched.
    CHECK(lib.find_curve("agar-mixture", "forest")->samples.size() + 1 == s.size());
}

TEST_CASE("merge_entry reports the offending pairs on a monotonicity break") {
    auto bad = curve("agar-bad", {{0, 1}, {days(11), 0.95}});
    try {
        (void)merge_entry(seed(), bad);
        FAIL("expected MergeConflict");
    } catch (const MergeConflict& e) {
        REQUIRE_FALSE(e.offending().empty());
        CHECK(e.offending().front().find("950400") != std::string::npos);
    }
}

TEST_CASE("merge_entry rejects invalid or dangling entries") {
    CHECK_THROWS_AS(merge_entry(seed(), curve("bad", {{0, 1}, {10, 1.2}})), InvariantError);
    auto ghost = curve("ghost-forest", {{0, 1}, {10, 0.5}});
    ghost.material_id = "ghost";
    CHECK_THROWS_AS(merge_entry(seed(), ghost), ReferenceError);
    auto nowhere = curve("agar-nowhere", {{0, 1}, {10, 0.5}});
    nowhere.condition_id = "mars";
    CHECK_THROWS_AS(merge_entry(seed(), nowhere), ReferenceError);
}

TEST_CASE("merging an identical record is a no-op, a different one conflicts") {
    const auto* rec = seed().find_incentive("starch-ants");
    REQUIRE(rec);
    CHECK(merge_entry(seed(), *rec) == seed());
    auto changed = *rec;
    changed.ant_visits_30min = 99;
    CHECK_THROWS_AS(merge_entry(seed(), changed), MergeConflict);
}

TEST_CASE("dangling library references are reported by id") {
    MaterialLibrary lib("tiny");
    lib.add(curve("orphan", {{0, 1}, {10, 0.5}}));
    try {
        lib.check_integrity();
        FAIL("expected ReferenceError");
    } catch (const ReferenceError& e) {
        CHECK(e.dangling_id() == "agar-mixture");
    }
}

TEST_CASE("duplicate keys are rejected on insertion") {
    MaterialLibrary lib("tiny");
    lib.add(curve("one", {{0, 1}, {10, 0.5}}));
    CHECK_THROWS_AS(lib.add(curve("one", {{0, 1}, {10, 0.4}})), InvariantError);
    CHECK_THROWS_AS(lib.add(curve("two", {{0, 1}, {10, 0.4}})), InvariantError);
}

TEST_CASE("sample CSV round-trip") {
    const auto* c = seed().find_curve("mg", "ph4-immersion");
    REQUIRE(c);
    CHECK(samples_from_csv(curve_to_csv(*c)) == c->samples);
    CHECK_THROWS_AS(samples_from_csv("t,f\n0,1\n"), ParseError);
    CHECK_THROWS_AS(samples_from_csv("time_s,fraction\n0,abc\n"), ParseError);
}

TEST_CASE("library files with malformed text raise ParseError") {
    CHECK_THROWS_AS(load_library_text("matlib x {\n  material m {\n"), ParseError);
    CHECK_THROWS_AS(load_library_text("device d { }"), ParseError);
}

TEST_CASE("a dangling material in a library file names that material") {
    try {
        (void)load_library(dtf::test::source_dir() / "tests/diagnostics/17-dangling-reference.dtf");
        FAIL("expected ReferenceError");
    } catch (const ReferenceError& e) {
        CHECK(e.dangling_id() == "ghost");
    }
}
