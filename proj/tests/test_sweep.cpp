#include <doctest.h>

#include <random>

#include "dtf/designer.hpp"
#include "dtf/sweep.hpp"
#include "support.hpp"

using namespace dtf;
using dtf::test::document;
using dtf::test::random_curve;
using dtf::test::seed;

namespace {

// Bitwise equality, with infinities matching each other.
bool same(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i] == b[i])) return false;
    return true;
}

}  // namespace

TEST_CASE("count kernel: parallel equals serial and matches failure_time") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n < 50; ++n) {
        const auto c = random_curve(rng);
        const double unit = 0.5 + 10 * u(rng);
        const double f_res = unit * (0.2 + 3 * u(rng));
        const auto par = sweep::count_failure_times(c, unit, f_res, 300);
        const auto ser = sweep::count_failure_times_serial(c, unit, f_res, 300);
        REQUIRE(par.size() == 300);
        CHECK(same(par, ser));
        for (std::size_t i = 1; i < par.size(); ++i) CHECK(par[i] >= par[i - 1]);
    }
    const auto& c = lookup_curve(seed(), "alginate", "underwater-microbes");
    const auto times = sweep::count_failure_times(c, 3.0, 2.5, 5);
    for (int k = 1; k <= 5; ++k)
        CHECK(times[k - 1] == design::failure_time(seed(), "alginate", "underwater-microbes", Calibration::mid, k,
                                                   0.25, 2.5));
}

TEST_CASE("area kernel: parallel equals serial") {
    std::mt19937_64 rng(5);
    std::vector<double> areas;
    for (double a = 0.01; a < 50; a *= 1.05) areas.push_back(a);
    for (int n = 0; n < 50; ++n) {
        const auto c = random_curve(rng);
        const auto par = sweep::area_failure_times(c, 20.0, 2, 4.0, areas);
        const auto ser = sweep::area_failure_times_serial(c, 20.0, 2, 4.0, areas);
        CHECK(same(par, ser));
    }
}

TEST_CASE("batch simulation: parallel equals serial, errors are captured") {
    std::vector<dtf::dsl::Document> docs;
    for (const char* p : {"fixtures/soil.dtf", "fixtures/seeder.dtf", "fixtures/reef.dtf", "tests/data/patterns.dtf"})
        docs.push_back(document(p));
    std::vector<sweep::RunRequest> runs;
    for (const auto& doc : docs)
        for (const auto& s : doc.scenarios)
            for (auto calib : {Calibration::lo, Calibration::mid, Calibration::hi}) {
                sweep::RunRequest r;
                r.device = doc.find_device(*s.device_id);
                r.scenario = &s;
                r.options.calib = calib;
                runs.push_back(r);
            }
    // One run that must fail: a non-positive horizon.
    Scenario broken = docs[0].scenarios.at(0);
    broken.horizon_s = 0;
    runs.push_back({docs[0].find_device(*broken.device_id), &broken, {}});

    const auto par = sweep::simulate_batch(runs, seed());
    const auto ser = sweep::simulate_batch_serial(runs, seed());
    REQUIRE(par.size() == runs.size());
    REQUIRE(ser.size() == runs.size());
    for (std::size_t i = 0; i < runs.size(); ++i) {
        CHECK(par[i].error == ser[i].error);
        CHECK(par[i].report.events == ser[i].report.events);
        CHECK(par[i].report.traces == ser[i].report.traces);
    }
    CHECK(par.back().error.size() > 0);
    CHECK(par.front().error.empty());
}
