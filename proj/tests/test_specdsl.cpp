#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <random>

#include "dtf/specdsl.hpp"
#include "docgen.hpp"
#include "support.hpp"

using namespace dtf;
using namespace dtf::dsl;
using dtf::test::document;
using Gen = dtf::test::Gen;
using dtf::test::read_text;
using dtf::test::source_dir;

namespace {

struct GoldenCase {
    std::string file, code;
    int line = 0, column = 0;
};

std::vector<GoldenCase> golden() {
    std::vector<GoldenCase> out;
    std::istringstream in(read_text(source_dir() / "tests/diagnostics/golden.tsv"));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        GoldenCase g;
        std::istringstream row(line);
        row >> g.file >> g.code >> g.line >> g.column;
        out.push_back(g);
    }
    return out;
}

}  // namespace

TEST_CASE("diagnostics corpus matches golden (code, line, column)") {
    const auto cases = golden();
    REQUIRE(cases.size() == 20);
    for (const auto& g : cases) {
        INFO(g.file);
        const auto doc = document("tests/diagnostics/" + g.file);
        REQUIRE(doc.diagnostics.size() == 1);
        const auto& d = doc.diagnostics.front();
        CHECK(d.code == g.code);
        CHECK(d.span.line == g.line);
        CHECK(d.span.column == g.column);
        CHECK_FALSE(d.message.empty());
    }
}

TEST_CASE("fixtures parse cleanly") {
    const auto soil = document("fixtures/soil.dtf");
    CHECK(soil.diagnostics.empty());
    CHECK(soil.devices.size() == 1);
    CHECK(soil.scenarios.size() == 1);
    CHECK_FALSE(soil.library);
    CHECK(document("data/seed.dtf").diagnostics.empty());
}

TEST_CASE("empty document") {
    const auto doc = parse_document("");
    CHECK(doc.diagnostics.empty());
    CHECK(doc.devices.empty());
    CHECK(doc.scenarios.empty());
    CHECK_FALSE(doc.library);
    CHECK(parse_document("  # only a comment\n\n").diagnostics.empty());
}

TEST_CASE("an error suppresses only its own top-level block") {
    const auto doc = parse_document(R"(device broken {
  initial-context: idle
  constraint c {
    material: mg
    restrains: s
  }
  storage s {
    form: tension
    material: natural-rubber
    f-res: 8 N
  }
}
scenario fine {
  horizon: 1 d
  context idle {
    condition: room
  }
}
device also-fine {
  initial-context: idle
}
)");
    REQUIRE(doc.diagnostics.size() == 1);
    CHECK(doc.diagnostics[0].code == codes::kMissingField);
    CHECK(doc.diagnostics[0].span.line == 3);
    CHECK(doc.diagnostics[0].span.column == 3);
    CHECK(doc.devices.size() == 1);
    CHECK(doc.devices[0].id == "also-fine");
    CHECK(doc.scenarios.size() == 1);
}

TEST_CASE("warnings do not suppress the object") {
    const auto doc = document("tests/diagnostics/19-missing-unit.dtf");
    REQUIRE(doc.devices.size() == 1);
    CHECK(doc.devices[0].constraints[0].a0_mm2 == doctest::Approx(0.15));
    CHECK_FALSE(doc.has_errors());
}

TEST_CASE("units normalise to canonical values") {
    const auto doc = parse_document(R"(scenario s {
  horizon: 90 min
  context a {
    condition: room
  }
  override o {
    state: a
    from: 1.5 h
    to: 2 d
    condition: forest
  }
}
)");
    REQUIRE(doc.diagnostics.empty());
    const auto& s = doc.scenarios.at(0);
    CHECK(s.horizon_s == 5400.0);
    CHECK(s.overrides.at(0).t0_s == 5400.0);
    CHECK(s.overrides.at(0).t1_s == 172800.0);
}

TEST_CASE("columns count code points") {
    const auto doc = parse_document("matlib m {\n  condition c {\n    label: \"é\" @\n  }\n}\n");
    REQUIRE_FALSE(doc.diagnostics.empty());
    CHECK(doc.diagnostics[0].code == codes::kUnexpectedCharacter);
    CHECK(doc.diagnostics[0].span.line == 3);
    CHECK(doc.diagnostics[0].span.column == 16);
}

TEST_CASE("no input aborts the parser") {
    std::mt19937_64 rng(99);
    const std::string seed_text = read_text(source_dir() / "data/seed.dtf");
    for (int i = 0; i < 300; ++i) {
        std::string text = seed_text.substr(0, static_cast<std::size_t>(rng() % seed_text.size()));
        for (int k = 0; k < 5; ++k) {
            const auto pos = static_cast<std::size_t>(rng() % (text.size() + 1));
            text.insert(pos, 1, "{}()[],:\"#@x1 \n"[rng() % 15]);
        }
        CHECK_NOTHROW((void)parse_document(text));
    }
}

TEST_CASE("serializer is canonical") {
    const auto doc = parse_document(R"(device d {
  initial-context: idle
  storage s {
    form: tension
    material: natural-rubber
    f-res: 8 N
  }
  constraint zeta {
    material: mg
    a0: 1 mm2
    restrains: s
  }
  constraint alpha {
    material: mg
    a0: 1 mm2
    restrains: s
  }
}
)");
    REQUIRE(doc.diagnostics.empty());
    const auto text = serialize(doc);
    CHECK(text.find("constraint alpha") < text.find("constraint zeta"));
    CHECK(text.find("constraint zeta") < text.find("storage s"));
    CHECK(serialize(parse_document(text)) == text);
    CHECK(serialize(MaterialLibrary("empty")) == "matlib empty { }\n");
}

TEST_CASE("fixtures and seed survive parse -> serialize -> parse") {
    for (const char* path : {"fixtures/soil.dtf", "fixtures/seeder.dtf", "fixtures/reef.dtf", "data/seed.dtf",
                             "tests/data/patterns.dtf"}) {
        INFO(path);
        const auto a = document(path);
        const auto text = serialize(a);
        const auto b = parse_document(text);
        CHECK(b.diagnostics.empty());
        CHECK(a.library == b.library);
        CHECK(a.devices == b.devices);
        CHECK(a.scenarios == b.scenarios);
        CHECK(serialize(b) == text);
    }
}

TEST_CASE("round-trip on 200 generated documents") {
    const auto start = std::chrono::steady_clock::now();
    Gen g{std::mt19937_64(424242)};
    for (int n = 0; n < 200; ++n) {
        const auto lib = g.library();
        std::vector<DeviceSpec> devices;
        std::vector<Scenario> scenarios;
        for (int i = 0, k = 1 + g.below(3); i < k; ++i) devices.push_back(g.device(i));
        for (int i = 0, k = g.below(3); i < k; ++i) scenarios.push_back(g.scenario(i));

        SerializeInput in{&lib, {}, {}};
        for (const auto& d : devices) in.devices.push_back(&d);
        for (const auto& s : scenarios) in.scenarios.push_back(&s);
        const auto text = serialize(in);
        const auto doc = parse_document(text);
        INFO(text);
        REQUIRE(doc.diagnostics.empty());
        REQUIRE(doc.library);
        CHECK(*doc.library == lib);
        CHECK(doc.devices == devices);
        CHECK(doc.scenarios == scenarios);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(seconds < 5.0);
}

TEST_CASE("format_number is shortest round-trip") {
    CHECK(format_number(0.0) == "0");
    CHECK(format_number(-0.0) == "0");
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(86400) == "86400");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("format_diagnostic") {
    Diagnostic d{DiagSeverity::warning, {3, 7, 2}, "a0 has no unit", codes::kMissingUnit};
    CHECK(format_diagnostic(d) == "3:7: warning: a0 has no unit [W001-missing-unit]");
}
