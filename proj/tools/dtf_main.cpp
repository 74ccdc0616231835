// dtf: command-line front end for the Degrade-to-Function toolkit.
//
// stdout carries machine-readable output only (CSV or canonical DSL);
// prose and diagnostics go to stderr.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dtf/designer.hpp"
#include "dtf/device.hpp"
#include "dtf/error.hpp"
#include "dtf/kinetics.hpp"
#include "dtf/matlib.hpp"
#include "dtf/service.hpp"
#include "dtf/simengine.hpp"
#include "dtf/specdsl.hpp"
#include "dtf/sweep.hpp"
#include "dtf/units.hpp"

namespace fs = std::filesystem;
using namespace dtf;

namespace {

enum Exit { kOk = 0, kParseIo = 1, kValidation = 2, kInfeasible = 3, kMissingData = 4 };

struct ExitError {
    int code;
    std::string message;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ExitError{kParseIo, "cannot read " + p.string()};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ExitError{kParseIo, "cannot write " + p.string()};
    out << text;
}

dsl::Document load_document(const fs::path& p) {
    auto doc = dsl::parse_document(read_file(p));
    for (const auto& d : doc.diagnostics) std::cerr << p.string() << ":" << dsl::format_diagnostic(d) << "\n";
    if (doc.has_errors()) throw ExitError{kParseIo, "document has errors"};
    return doc;
}

MaterialLibrary load_library_file(const fs::path& p) {
    try {
        return load_library(p);
    } catch (const Error& e) {
        throw ExitError{kParseIo, p.string() + ": " + e.what()};
    }
}

// Document's own matlib, then --matlib, then $DTF_MATLIB, then the seed.
MaterialLibrary resolve_library(const dsl::Document* doc, const std::string& flag) {
    if (doc && doc->library) return *doc->library;
    if (!flag.empty()) return load_library_file(flag);
    if (const char* env = std::getenv("DTF_MATLIB"); env && *env) return load_library_file(env);
    return load_library_file(DTF_DEFAULT_MATLIB);
}

// "90000", "25 h", "11d", "30min" -> seconds.
double parse_time(const std::string& text) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw ExitError{kParseIo, "invalid time '" + text + "'"};
    }
    std::string unit = text.substr(pos);
    unit.erase(0, unit.find_first_not_of(' '));
    if (unit.empty() || unit == "s") return v;
    if (unit == "min") return v * units::kMinute;
    if (unit == "h") return v * units::kHour;
    if (unit == "d") return v * units::kDay;
    if (text == "inf") return std::numeric_limits<double>::infinity();
    throw ExitError{kParseIo, "unknown time unit '" + unit + "' (use s, min, h or d)"};
}

std::string num(double v) { return std::isfinite(v) ? dsl::format_number(v) : "inf"; }
std::string num(const std::optional<double>& v) { return v ? dsl::format_number(*v) : "never"; }

Calibration parse_calib_flag(const std::string& s) {
    auto c = parse_calibration(s);
    if (!c) throw ExitError{kParseIo, "calib must be lo, mid or hi"};
    return *c;
}

// (device, scenario) pairs a document defines: a scenario naming a device
// pairs with it alone, otherwise with every device.
std::vector<std::pair<const DeviceSpec*, const Scenario*>> pairs_of(const dsl::Document& doc) {
    std::vector<std::pair<const DeviceSpec*, const Scenario*>> out;
    for (const auto& s : doc.scenarios) {
        for (const auto& d : doc.devices)
            if (!s.device_id || *s.device_id == d.id) out.emplace_back(&d, &s);
    }
    return out;
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& file, const std::string& matlib, double margin) {
    const auto doc = load_document(file);
    const auto lib = resolve_library(&doc, matlib);
    try {
        lib.check_integrity();
    } catch (const Error& e) {
        std::cerr << "library: " << e.what() << "\n";
        return kValidation;
    }
    ValidateOptions opts;
    opts.margin = margin;
    bool errors = false;
    std::cout << "device,scenario,severity,code,subject,message\n";
    const auto pairs = pairs_of(doc);
    for (const auto& [d, s] : pairs) {
        for (const auto& f : validate(*d, *s, lib, opts)) {
            std::string msg = f.message;
            if (msg.find_first_of(",\"") != std::string::npos) {
                std::string q = "\"";
                for (char c : msg) q += c == '"' ? std::string("\"\"") : std::string(1, c);
                msg = q + "\"";
            }
            std::cout << d->id << "," << s->id << "," << to_string(f.severity) << "," << f.code << "," << f.subject
                      << "," << msg << "\n";
            errors |= f.severity == Severity::error;
        }
    }
    for (const auto& d : doc.devices) {
        const bool paired = std::any_of(pairs.begin(), pairs.end(), [&](const auto& p) { return p.first == &d; });
        if (!paired) std::cerr << "note: device '" << d.id << "' has no scenario; only parsed\n";
    }
    return errors ? kValidation : kOk;
}

struct SimulateArgs {
    std::string file, device, scenario, calib = "mid", out_csv, out_svg, matlib;
    bool all = false;
};

int cmd_simulate(const SimulateArgs& a) {
    const auto doc = load_document(a.file);
    const auto lib = resolve_library(&doc, a.matlib);
    sim::SimOptions opts;
    opts.calib = parse_calib_flag(a.calib);

    if (a.all) {
        std::vector<sweep::RunRequest> runs;
        for (const auto& [d, s] : pairs_of(doc)) runs.push_back({d, s, opts});
        const auto results = sweep::simulate_batch(runs, lib);
        std::cout << "device,scenario,failures,first_failure_s,patterns,error\n";
        int rc = kOk;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& r = results[i];
            std::size_t failures = 0;
            std::optional<double> first;
            for (const auto& e : r.report.events)
                if (e.kind == sim::EventKind::constraint_failed) {
                    ++failures;
                    if (!first) first = e.time_s;
                }
            std::string patterns;
            if (failures)
                for (auto p : sim::classify_pattern(r.report))
                    patterns += (patterns.empty() ? "" : "|") + std::string(to_string(p));
            std::cout << runs[i].device->id << "," << runs[i].scenario->id << "," << failures << "," << num(first)
                      << "," << patterns << "," << (r.error.empty() ? "" : "\"" + r.error + "\"") << "\n";
            if (!r.error.empty()) rc = kValidation;
            if (!a.out_csv.empty() && r.error.empty()) {
                const fs::path dir = fs::path(a.out_csv) / (runs[i].device->id + "__" + runs[i].scenario->id);
                write_file(dir / "events.csv", sim::events_csv(r.report));
                write_file(dir / "traces.csv", sim::traces_csv(r.report));
                write_file(dir / "releases.csv", sim::releases_csv(r.report));
            }
        }
        return rc;
    }

    std::string device = a.device, scenario = a.scenario;
    if (scenario.empty() && doc.scenarios.size() == 1) scenario = doc.scenarios.front().id;
    const Scenario* s = doc.find_scenario(scenario);
    if (!s) throw ExitError{kParseIo, "no scenario '" + scenario + "' in " + a.file};
    if (device.empty() && s->device_id) device = *s->device_id;
    if (device.empty() && doc.devices.size() == 1) device = doc.devices.front().id;
    const DeviceSpec* d = doc.find_device(device);
    if (!d) throw ExitError{kParseIo, "no device '" + device + "' in " + a.file};

    const auto report = sim::simulate(*d, *s, lib, opts);
    const std::string events = sim::events_csv(report);
    std::cout << events;
    if (!a.out_csv.empty()) {
        write_file(fs::path(a.out_csv) / "events.csv", events);
        write_file(fs::path(a.out_csv) / "traces.csv", sim::traces_csv(report));
        write_file(fs::path(a.out_csv) / "releases.csv", sim::releases_csv(report));
    }
    if (!a.out_svg.empty()) write_file(a.out_svg, sim::timeline_svg(report));
    return kOk;
}

int cmd_fit(const std::string& file, const std::string& material, const std::string& condition, bool censored) {
    DegradationCurve c;
    c.id = "fit";
    c.material_id = material;
    c.condition_id = condition;
    c.censored = censored;
    try {
        c.samples = samples_from_csv(read_file(file));
    } catch (const ParseError& e) {
        throw ExitError{kParseIo, file + ": " + e.what()};
    }
    const auto fit = kinetics::fit_reciprocal(c);
    std::cout << "material,condition,tau_s,rms_error\n"
              << material << "," << condition << "," << num(fit.tau_s) << "," << num(fit.rms_error) << "\n";
    std::cerr << "tau = " << fit.tau_s / units::kHour << " h\n";
    return kOk;
}

struct DesignArgs {
    std::string material, condition, window_lo = "0", window_hi = "inf", matlib, file, device;
    double a0 = 0.0, f_res = 0.0, margin = 0.2;
    int count = 1;
};

design::TimeWindow window_of(const DesignArgs& a) {
    return {parse_time(a.window_lo), a.window_hi == "inf" ? std::numeric_limits<double>::infinity()
                                                          : parse_time(a.window_hi)};
}

int cmd_design_count(const DesignArgs& a) {
    const auto lib = resolve_library(nullptr, a.matlib);
    const auto r = design::solve_count(lib, a.material, a.condition, a.a0, a.f_res, window_of(a));
    std::cout << "count,failure_time_s,lo_s,hi_s\n"
              << r.count << "," << num(r.failure_time_s) << "," << num(r.bracket.lo_s) << "," << num(r.bracket.hi_s)
              << "\n";
    return kOk;
}

int cmd_design_area(const DesignArgs& a) {
    const auto lib = resolve_library(nullptr, a.matlib);
    const auto r = design::solve_area(lib, a.material, a.condition, a.count, a.f_res, window_of(a));
    std::cout << "a0_mm2,failure_time_s,lo_s,hi_s,geometry_extrapolation\n"
              << num(r.a0_mm2) << "," << num(r.failure_time_s) << "," << num(r.bracket.lo_s) << ","
              << num(r.bracket.hi_s) << "," << (r.geometry_extrapolation ? "true" : "false") << "\n";
    if (r.geometry_extrapolation)
        std::cerr << "warning: a0 differs from the tested geometry; degradation rate is extrapolated\n";
    return kOk;
}

int cmd_design_margin(const DesignArgs& a) {
    const auto doc = load_document(a.file);
    const auto lib = resolve_library(&doc, a.matlib);
    std::string device = a.device;
    if (device.empty() && doc.devices.size() == 1) device = doc.devices.front().id;
    const auto* d = doc.find_device(device);
    if (!d) throw ExitError{kParseIo, "no device '" + device + "' in " + a.file};
    bool ok = true;
    std::cout << "constraint,storage,f_max0_N,f_res_N,ratio,margin,pass\n";
    for (const auto& r : design::margin_report(*d, lib, a.margin)) {
        std::cout << r.constraint_id << "," << r.storage_id << "," << num(r.f_max0_n) << "," << num(r.f_res_n) << ","
                  << num(r.ratio) << "," << num(r.margin) << "," << (r.pass ? "true" : "false") << "\n";
        ok &= r.pass;
    }
    return ok ? kOk : kValidation;
}

void emit_library(const MaterialLibrary& lib, const std::string& out) {
    const std::string text = dsl::serialize(lib);
    if (out.empty())
        std::cout << text;
    else
        write_file(out, text);
}

int cmd_matlib_list(const std::string& matlib, const std::string& role) {
    const auto lib = resolve_library(nullptr, matlib);
    std::optional<Role> r;
    if (!role.empty()) {
        r = parse_role(role);
        if (!r) throw ExitError{kParseIo, "unknown role '" + role + "'"};
    }
    std::cout << "id,name,roles,sigma_i_mpa,curves\n";
    for (const auto& [id, m] : lib.materials()) {
        if (r && !m.roles.contains(*r)) continue;
        std::string roles;
        for (auto x : m.roles) roles += (roles.empty() ? "" : "|") + std::string(to_string(x));
        std::size_t curves = 0;
        for (const auto& [cid, c] : lib.curves()) curves += c.material_id == id;
        std::cout << id << ",\"" << m.name << "\"," << roles << ","
                  << (m.sigma_i_mpa ? num(*m.sigma_i_mpa) : std::string()) << "," << curves << "\n";
    }
    return kOk;
}

struct ImportArgs {
    std::string csv, id, material, condition, calib = "mid", matlib, out, contributor = "cli", date;
    bool censored = false;
};

int cmd_matlib_import(const ImportArgs& a) {
    auto lib = resolve_library(nullptr, a.matlib);
    DegradationCurve c;
    c.id = a.id;
    c.material_id = a.material;
    c.condition_id = a.condition;
    c.calib = parse_calib_flag(a.calib);
    c.censored = a.censored;
    c.provenance = {{"contributed", a.contributor, a.date}};
    try {
        c.samples = samples_from_csv(read_file(a.csv));
    } catch (const ParseError& e) {
        throw ExitError{kParseIo, a.csv + ": " + e.what()};
    }
    if (!is_valid_id(c.id)) throw ExitError{kValidation, "'" + c.id + "' is not a valid lowercase kebab-case id"};
    if (auto problems = invariant_violations(c); !problems.empty()) {
        for (const auto& p : problems) std::cerr << "invariant: " << p << "\n";
        return kValidation;
    }
    emit_library(merge_entry(lib, c), a.out);
    return kOk;
}

// Adds everything from `extra` into `base`.
MaterialLibrary merge_libraries(MaterialLibrary base, const MaterialLibrary& extra) {
    for (const auto& [id, c] : extra.conditions()) {
        if (const auto* have = base.find_condition(id)) {
            if (!(*have == c)) throw MergeConflict("condition '" + id + "' differs between libraries", {id});
        } else {
            base.add(c);
        }
    }
    for (const auto& [id, m] : extra.materials()) {
        if (const auto* have = base.find_material(id)) {
            if (!(*have == m)) throw MergeConflict("material '" + id + "' differs between libraries", {id});
        } else {
            base.add(m);
        }
    }
    for (const auto& [id, c] : extra.curves()) base = merge_entry(base, c);
    for (const auto& [id, c] : extra.courier_curves()) base = merge_entry(base, c);
    for (const auto& [id, r] : extra.incentive_records()) base = merge_entry(base, r);
    for (const auto& [id, r] : extra.storage_records()) base = merge_entry(base, r);
    return base;
}

int run_serve(const std::string& bind, int port, const std::string& matlib, const std::string& contributions) {
    auto lib = resolve_library(nullptr, matlib);
    if (!contributions.empty() && fs::exists(contributions)) {
        const auto n = service::replay_contributions(lib, contributions);
        std::cerr << "replayed " << n << " contribution(s) from " << contributions << "\n";
    }
    service::Service svc(std::move(lib), contributions);
    service::Server server(svc);
    const int bound = server.start(bind, port);
    if (bound < 0) throw ExitError{kParseIo, "cannot bind " + bind + ":" + std::to_string(port)};
    std::cerr << "listening on http://" << bind << ":" << bound << "\n";
    server.wait();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Degrade-to-Function device simulator and design toolkit", "dtf"};
    app.require_subcommand(1);
    std::string matlib;
    app.add_option("--matlib", matlib, "Material library document (default: $DTF_MATLIB, then the seed)");

    std::function<int()> action;

    // validate
    auto* v = app.add_subcommand("validate", "Static checks of every (device, scenario) pair in a document");
    std::string v_file;
    double v_margin = 0.2;
    v->add_option("file", v_file, "Document")->required();
    v->add_option("--margin", v_margin, "Default safety margin");
    v->callback([&] { action = [&] { return cmd_validate(v_file, matlib, v_margin); }; });

    // simulate
    auto* s = app.add_subcommand("simulate", "Run the event-driven simulation; events CSV on stdout");
    SimulateArgs sa;
    s->add_option("file", sa.file, "Document")->required();
    s->add_option("--device", sa.device, "Device id");
    s->add_option("--scenario", sa.scenario, "Scenario id");
    s->add_option("--calib", sa.calib, "Calibration curve: lo, mid or hi");
    s->add_option("--out-csv", sa.out_csv, "Directory for events/traces/releases CSV");
    s->add_option("--out-svg", sa.out_svg, "SVG timeline path");
    s->add_flag("--all", sa.all, "Run every (device, scenario) pair concurrently");
    s->callback([&] {
        sa.matlib = matlib;
        action = [&] { return cmd_simulate(sa); };
    });

    // fit
    auto* f = app.add_subcommand("fit", "Fit f = tau / (tau + t) to a time_s,fraction CSV");
    std::string f_file, f_material, f_condition;
    bool f_censored = false;
    f->add_option("csv", f_file, "Samples CSV")->required();
    f->add_option("--material", f_material, "Material id")->required();
    f->add_option("--condition", f_condition, "Condition id")->required();
    f->add_flag("--censored", f_censored, "Observation ended before the material failed");
    f->callback([&] { action = [&] { return cmd_fit(f_file, f_material, f_condition, f_censored); }; });

    // design
    auto* d = app.add_subcommand("design", "Inverse design");
    d->require_subcommand(1);
    DesignArgs da;
    auto* dc = d->add_subcommand("count", "Smallest constraint count failing inside a window");
    auto* dar = d->add_subcommand("area", "Cross-section failing inside a window");
    for (auto* sub : {dc, dar}) {
        sub->add_option("--material", da.material, "Material id")->required();
        sub->add_option("--condition", da.condition, "Condition id")->required();
        sub->add_option("--f-res", da.f_res, "Storage force F_res in N")->required();
        sub->add_option("--window-lo", da.window_lo, "Window start, e.g. 11d or 3h");
        sub->add_option("--window-hi", da.window_hi, "Window end, or inf");
    }
    dc->add_option("--a0", da.a0, "Cross-section per constraint in mm2")->required();
    dar->add_option("--count", da.count, "Constraint count");
    auto* dm = d->add_subcommand("margin", "Per-constraint safety margin report");
    dm->add_option("file", da.file, "Document")->required();
    dm->add_option("--device", da.device, "Device id");
    dm->add_option("--margin", da.margin, "Default margin");
    dc->callback([&] {
        da.matlib = matlib;
        action = [&] { return cmd_design_count(da); };
    });
    dar->callback([&] {
        da.matlib = matlib;
        action = [&] { return cmd_design_area(da); };
    });
    dm->callback([&] {
        da.matlib = matlib;
        action = [&] { return cmd_design_margin(da); };
    });

    // matlib
    auto* m = app.add_subcommand("matlib", "Material library management");
    m->require_subcommand(1);
    auto* ml = m->add_subcommand("list", "List materials as CSV");
    std::string role;
    ml->add_option("--role", role, "Only materials with this role");
    ml->callback([&] { action = [&] { return cmd_matlib_list(matlib, role); }; });

    auto* mi = m->add_subcommand("import", "Merge a time_s,fraction CSV as a degradation curve");
    ImportArgs ia;
    mi->add_option("csv", ia.csv, "Samples CSV")->required();
    mi->add_option("--id", ia.id, "Curve id")->required();
    mi->add_option("--material", ia.material, "Material id")->required();
    mi->add_option("--condition", ia.condition, "Condition id")->required();
    mi->add_option("--calib", ia.calib, "lo, mid or hi");
    mi->add_flag("--censored", ia.censored, "Observation ended before failure");
    mi->add_option("--contributor", ia.contributor, "Provenance contributor");
    mi->add_option("--date", ia.date, "Provenance date");
    mi->add_option("--out", ia.out, "Write the merged library here instead of stdout");
    mi->callback([&] {
        ia.matlib = matlib;
        action = [&] { return cmd_matlib_import(ia); };
    });

    auto* me = m->add_subcommand("export", "Print the library in canonical form");
    std::string out;
    me->add_option("--out", out, "Output path");
    me->callback([&] { action = [&] { emit_library(resolve_library(nullptr, matlib), out); return int(kOk); }; });

    auto* mm = m->add_subcommand("merge", "Merge library documents into one");
    std::vector<std::string> merge_files;
    mm->add_option("files", merge_files, "Library documents, merged left to right")->required()->expected(2, -1);
    mm->add_option("--out", out, "Output path");
    mm->callback([&] {
        action = [&] {
            auto lib = load_library_file(merge_files.front());
            for (std::size_t i = 1; i < merge_files.size(); ++i)
                lib = merge_libraries(std::move(lib), load_library_file(merge_files[i]));
            emit_library(lib, out);
            return int(kOk);
        };
    });

    // report
    auto* r = app.add_subcommand("report", "Work with exported reports");
    r->require_subcommand(1);
    auto* rc = r->add_subcommand("classify", "Classify the failure pattern of an events CSV");
    std::string rc_file, rc_window;
    rc->add_option("csv", rc_file, "Events CSV")->required();
    rc->add_option("--sync-window", rc_window, "Simultaneity window (default 1% of horizon)");
    rc->callback([&] {
        action = [&] {
            sim::TimelineReport report;
            try {
                report = sim::report_from_events_csv(read_file(rc_file));
            } catch (const ParseError& e) {
                throw ExitError{kParseIo, rc_file + ": " + e.what()};
            }
            const auto patterns = rc_window.empty() ? sim::classify_pattern(report)
                                                    : sim::classify_pattern(report, parse_time(rc_window));
            std::string line;
            for (auto p : patterns) line += (line.empty() ? "" : ",") + std::string(to_string(p));
            std::cout << line << "\n";
            return int(kOk);
        };
    });

    // serve
    auto* sv = app.add_subcommand("serve", "HTTP API for the web UI");
    std::string bind = "127.0.0.1", contributions;
    int port = 8080;
    sv->add_option("--bind", bind, "Address to bind");
    sv->add_option("--port", port, "Port (0 picks one)");
    sv->add_option("--contributions", contributions, "Append-only JSONL log of contributed entries");
    sv->callback([&] { action = [&] { return run_serve(bind, port, matlib, contributions); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kParseIo;
    }

    try {
        return action();
    } catch (const ExitError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const Infeasible& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const MissingCurve& e) {
        std::cerr << "missing data: " << e.what() << "\n";
        return kMissingData;
    } catch (const InsufficientData& e) {
        std::cerr << "missing data: " << e.what() << "\n";
        return kMissingData;
    } catch (const NotFoundError& e) {
        std::cerr << "missing data: " << e.what() << "\n";
        return kMissingData;
    } catch (const MergeConflict& e) {
        std::cerr << "merge conflict: " << e.what() << "\n";
        for (const auto& o : e.offending()) std::cerr << "  " << o << "\n";
        return kValidation;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kParseIo;
    } catch (const Error& e) {
        // Unmapped states, invariant and simulation errors.
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kParseIo;
    }
}
