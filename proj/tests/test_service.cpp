#include <doctest.h>
#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "dtf/service.hpp"
#include "support.hpp"

using namespace dtf;
using namespace dtf::service;
using dtf::test::read_text;
using dtf::test::seed;
using dtf::test::source_dir;
using json = nlohmann::json;

namespace {

Response get(Service& s, std::string path, std::map<std::string, std::string> query = {}) {
    return s.handle({"GET", std::move(path), std::move(query), "", ""});
}

Response post(Service& s, std::string path, const json& body) {
    return s.handle({"POST", std::move(path), {}, body.dump(), "application/json"});
}

std::string first_code(const Response& r) { return json::parse(r.body).at("diagnostics").at(0).at("code"); }

json rising_curve() {
    return {{"kind", "curve"},
            {"id", "agar-rising"},
            {"material", "agar-mixture"},
            {"condition", "room"},
            {"samples", {{0, 1.0}, {100, 0.7}, {200, 0.9}}}};
}

std::filesystem::path temp_log(const char* name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove(p);
    return p;
}

}  // namespace

TEST_CASE("health and material listing") {
    Service s(seed());
    const auto h = json::parse(get(s, "/api/health").body);
    CHECK(h["status"] == "ok");
    CHECK(h["library"] == "seed");

    const auto r = get(s, "/api/materials", {{"role", "constraint"}});
    CHECK(r.status == 200);
    CHECK(json::parse(r.body)["materials"].size() == 6);
    CHECK(get(s, "/api/materials", {{"role", "wizard"}}).status == 400);
    CHECK(json::parse(get(s, "/api/conditions").body)["conditions"].size() == 7);
}

TEST_CASE("material curves by id") {
    Service s(seed());
    const auto r = get(s, "/api/materials/mg/curves");
    REQUIRE(r.status == 200);
    const auto j = json::parse(r.body);
    CHECK(j["material"] == "mg");
    CHECK_FALSE(j["curves"].empty());
    for (const auto& c : j["curves"]) CHECK(c["material"] == "mg");
    CHECK(get(s, "/api/materials/ghost/curves").status == 404);
    CHECK(get(s, "/api/nowhere").status == 404);
}

TEST_CASE("simulate the soil fixture over JSON and text/plain") {
    Service s(seed());
    const std::string text = read_text(source_dir() / "fixtures/soil.dtf");
    for (const auto& r : {post(s, "/api/simulate", {{"document", text}}),
                          s.handle({"POST", "/api/simulate", {{"calib", "mid"}}, text, "text/plain"})}) {
        REQUIRE(r.status == 200);
        const auto report = json::parse(r.body)["report"];
        double first = -1;
        for (const auto& e : report["events"])
            if (e["kind"] == "constraint_failed") {
                first = e["time_s"];
                break;
            }
        CHECK(first >= 10800);
        CHECK(first <= 28800);
    }
}

TEST_CASE("simulate errors map to statuses") {
    Service s(seed());
    CHECK(s.handle({"POST", "/api/simulate", {}, "{not json", "application/json"}).status == 400);
    CHECK(post(s, "/api/simulate", json::object()).status == 400);
    const auto bad = post(s, "/api/simulate", {{"document", "devise x {}"}});
    CHECK(bad.status == 400);
    CHECK(first_code(bad) == "E001-unknown-keyword");
    const std::string text = read_text(source_dir() / "fixtures/soil.dtf");
    CHECK(post(s, "/api/simulate", {{"document", text}, {"scenario", "nope"}}).status == 404);
    CHECK(post(s, "/api/simulate", {{"document", text}, {"calib", "max"}}).status == 400);
}

TEST_CASE("validate and margin endpoints") {
    Service s(seed());
    const std::string reef = read_text(source_dir() / "fixtures/reef.dtf");
    const auto v = json::parse(post(s, "/api/validate", {{"document", reef}}).body);
    CHECK(v["ok"] == true);
    const auto m = post(s, "/api/design/margin", {{"document", reef}});
    REQUIRE(m.status == 200);
    const auto rows = json::parse(m.body)["rows"];
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["ratio"].get<double>() == doctest::Approx(1.2));
    CHECK(rows[0]["pass"] == true);
}

TEST_CASE("design endpoints") {
    Service s(seed());
    const auto count = post(s, "/api/design/count",
                            {{"material", "alginate"},
                             {"condition", "underwater-microbes"},
                             {"a0_mm2", 0.25},
                             {"f_res_n", 2.5},
                             {"window", {{"lo_s", 11 * 86400.0}, {"hi_s", 21 * 86400.0}}}});
    REQUIRE(count.status == 200);
    CHECK(json::parse(count.body)["count"] == 2);

    const auto area = post(s, "/api/design/area",
                           {{"material", "mg"},
                            {"condition", "ph4-immersion"},
                            {"count", 1},
                            {"f_res_n", 8.0},
                            {"window", {{"lo_s", 10800.0}, {"hi_s", 28800.0}}}});
    REQUIRE(area.status == 200);
    CHECK(json::parse(area.body)["a0_mm2"].get<double>() == doctest::Approx(0.15).epsilon(0.01));

    const auto infeasible = post(s, "/api/design/count",
                                 {{"material", "alginate"},
                                  {"condition", "underwater-microbes"},
                                  {"a0_mm2", 0.25},
                                  {"f_res_n", 2.5},
                                  {"window", {{"lo_s", 0.0}, {"hi_s", 60.0}}}});
    CHECK(infeasible.status == 422);
    CHECK(first_code(infeasible) == "infeasible");

    const auto missing = post(s, "/api/design/count",
                              {{"material", "beeswax"},
                               {"condition", "ph4-immersion"},
                               {"a0_mm2", 1.0},
                               {"f_res_n", 1.0},
                               {"window", {{"lo_s", 0.0}}}});
    CHECK(missing.status == 404);
    CHECK(post(s, "/api/design/count", {{"material", "mg"}}).status == 400);

    const auto never = post(s, "/api/design/failure-time",
                            {{"material", "mg"}, {"condition", "room"}, {"a0_mm2", 0.15}, {"f_res_n", 8.0}});
    REQUIRE(never.status == 200);
    CHECK(json::parse(never.body)["failure_time_s"].is_null());
}

TEST_CASE("contributions: rising curve is rejected, a valid one is logged and replayable") {
    const auto log = temp_log("dtf_contrib_test.jsonl");
    Service s(seed(), log);
    const auto bad = post(s, "/api/matlib/entries", rising_curve());
    CHECK(bad.status == 422);
    CHECK(first_code(bad) == "invariant-violation");
    CHECK(json::parse(bad.body)["diagnostics"][0]["message"].get<std::string>().find("fraction rises") !=
          std::string::npos);

    CHECK(post(s, "/api/matlib/entries", json{{"kind", "curve"}, {"id", "Bad_Id"}}).status == 422);

    const json good = {{"kind", "curve"},
                       {"id", "alginate-desert"},
                       {"material", "alginate"},
                       {"condition", "desert"},
                       {"samples", {{0, 1.0}, {86400, 0.9}, {864000, 0.6}}},
                       {"provenance", {{{"source", "measured"}, {"contributor", "lab-b"}, {"date", "2025-01-02"}}}}};
    const auto before = s.snapshot();
    const auto ok = post(s, "/api/matlib/entries", good);
    REQUIRE(ok.status == 201);
    CHECK(s.snapshot()->find_curve("alginate", "desert"));
    CHECK_FALSE(before->find_curve("alginate", "desert"));  // old snapshot is untouched

    auto replayed = seed();
    CHECK(replay_contributions(replayed, log) == 1);
    CHECK(replayed == *s.snapshot());
    std::filesystem::remove(log);
}

TEST_CASE("readers never observe a partial merge") {
    Service s(seed());
    const std::size_t base = seed().curves().size();
    std::atomic<bool> done{false};
    std::atomic<int> bad{0};
    std::thread reader([&] {
        while (!done) {
            const auto h = json::parse(get(s, "/api/health").body);
            const std::size_t n = h["curves"];
            if (n < base || n > base + 20) ++bad;
        }
    });
    for (int i = 0; i < 20; ++i) {
        const json c = {{"kind", "curve"},
                        {"id", "probe-" + std::to_string(i)},
                        {"material", "pla"},
                        {"condition", "room"},
                        {"calib", i % 2 ? "lo" : "hi"},
                        {"samples", {{0, 1.0}, {1000 + i, 0.5}}}};
        // Same (material, condition, calib) merges into one curve after the first.
        const auto r = post(s, "/api/matlib/entries", c);
        CHECK(r.status < 500);
    }
    done = true;
    reader.join();
    CHECK(bad == 0);
}

TEST_CASE("live HTTP round-trip on an ephemeral port") {
    Service s(seed());
    Server server(s);
    const int port = server.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);
    auto h = cli.Get("/api/health");
    REQUIRE(h);
    CHECK(h->status == 200);
    CHECK(json::parse(h->body)["status"] == "ok");

    auto sim = cli.Post("/api/simulate", read_text(source_dir() / "fixtures/soil.dtf"), "text/plain");
    REQUIRE(sim);
    CHECK(sim->status == 200);
    CHECK(json::parse(sim->body)["report"]["device"] == "soil-restorer");

    auto bad = cli.Post("/api/matlib/entries", rising_curve().dump(), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 422);
    server.stop();
}
