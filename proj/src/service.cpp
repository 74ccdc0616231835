#include "dtf/service.hpp"

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "dtf/designer.hpp"
#include "dtf/device.hpp"
#include "dtf/error.hpp"
#include "dtf/simengine.hpp"
#include "dtf/specdsl.hpp"

namespace dtf::service {

using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Error carrying an HTTP status and a diagnostic list.
struct HttpError {
    int status;
    json diagnostics;
};

json diag(std::string code, std::string message) {
    return json{{"severity", "error"}, {"code", std::move(code)}, {"message", std::move(message)}};
}

[[noreturn]] void fail(int status, std::string code, std::string message) {
    throw HttpError{status, json::array({diag(std::move(code), std::move(message))})};
}

Response reply(int status, const json& body) { return {status, "application/json", body.dump()}; }

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json provenance_json(const std::vector<Provenance>& ps) {
    json out = json::array();
    for (const auto& p : ps) out.push_back({{"source", p.source}, {"contributor", p.contributor}, {"date", p.date}});
    return out;
}

json material_json(const Material& m, const MaterialLibrary& lib) {
    json roles = json::array();
    for (auto r : m.roles) roles.push_back(std::string(to_string(r)));
    std::set<std::string> conds;
    for (const auto& [id, c] : lib.curves())
        if (c.material_id == m.id) conds.insert(c.condition_id);
    return {{"id", m.id},
            {"name", m.name},
            {"roles", roles},
            {"sigma_i_mpa", opt_number(m.sigma_i_mpa)},
            {"tested_a0_mm2", opt_number(m.tested_a0_mm2)},
            {"natural", m.natural_source},
            {"notes", m.notes},
            {"conditions", conds}};
}

json curve_json(const DegradationCurve& c) {
    json samples = json::array();
    for (const auto& s : c.samples) samples.push_back({s.time_s, s.fraction});
    return {{"id", c.id},         {"material", c.material_id}, {"condition", c.condition_id},
            {"calib", std::string(to_string(c.calib))}, {"censored", c.censored},
            {"samples", samples}, {"provenance", provenance_json(c.provenance)}};
}

json courier_curve_json(const CourierCurve& c) {
    json samples = json::array();
    for (const auto& s : c.samples) samples.push_back({s.time_s, s.released_fraction});
    return {{"id", c.id},           {"material", c.material_id},
            {"censored", c.censored}, {"samples", samples},
            {"provenance", provenance_json(c.provenance)}};
}

json condition_json(const EnvCondition& c) {
    return {{"id", c.id},
            {"label", c.label},
            {"medium", std::string(to_string(c.medium))},
            {"temperature_c", c.temperature_c},
            {"rh_pct", opt_number(c.relative_humidity)},
            {"ph", opt_number(c.ph)},
            {"microbes", std::string(to_string(c.microbial_load))},
            {"uv", c.uv}};
}

json diagnostics_json(const std::vector<dsl::Diagnostic>& ds) {
    json out = json::array();
    for (const auto& d : ds)
        out.push_back({{"severity", d.severity == dsl::DiagSeverity::error ? "error" : "warning"},
                       {"code", d.code},
                       {"message", d.message},
                       {"line", d.span.line},
                       {"column", d.span.column}});
    return out;
}

json trace_map_json(const std::map<std::string, std::vector<sim::TracePoint>>& m) {
    json out = json::object();
    for (const auto& [k, pts] : m) {
        json arr = json::array();
        for (const auto& p : pts) arr.push_back({p.time_s, p.value});
        out[k] = std::move(arr);
    }
    return out;
}

json report_json(const sim::TimelineReport& r) {
    json events = json::array();
    bool failures = false;
    for (const auto& e : r.events) {
        events.push_back(
            {{"time_s", e.time_s}, {"kind", std::string(to_string(e.kind))}, {"subject", e.subject}, {"detail", e.detail}});
        failures |= e.kind == sim::EventKind::constraint_failed;
    }
    json patterns = json::array();
    if (failures)
        for (auto p : sim::classify_pattern(r)) patterns.push_back(std::string(to_string(p)));
    return {{"device", r.device_id},
            {"scenario", r.scenario_id},
            {"calib", std::string(to_string(r.calib))},
            {"horizon_s", r.horizon_s},
            {"final_context", r.final_context},
            {"events", events},
            {"traces", trace_map_json(r.traces)},
            {"release_traces", trace_map_json(r.release_traces)},
            {"patterns", patterns}};
}

json parse_json(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::exception& e) {
        fail(400, "malformed-json", e.what());
    }
}

template <typename T>
T field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) fail(400, "missing-field", std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(400, "invalid-field", std::string("field '") + key + "' has the wrong type");
    }
}

template <typename T>
std::optional<T> opt_field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return field<T>(j, key);
}

design::TimeWindow window_from(const json& j) {
    if (!j.contains("window")) fail(400, "missing-field", "missing field 'window'");
    const json& w = j.at("window");
    design::TimeWindow out;
    out.lo_s = field<double>(w, "lo_s");
    if (auto hi = opt_field<double>(w, "hi_s")) out.hi_s = *hi;
    if (!(out.lo_s >= 0.0) || !(out.hi_s >= out.lo_s)) fail(400, "invalid-window", "window must satisfy 0 <= lo_s <= hi_s");
    return out;
}

Calibration calib_from(const std::string& s) {
    auto c = parse_calibration(s);
    if (!c) fail(400, "invalid-field", "calib must be lo, mid or hi");
    return *c;
}

// Document plus its device/scenario selection, from JSON or text/plain.
struct Selection {
    dsl::Document doc;
    std::string device;
    std::string scenario;
    Calibration calib = Calibration::mid;
    double margin = 0.2;
};

Selection select(const Request& req) {
    Selection s;
    std::string text;
    std::optional<std::string> device, scenario;
    if (req.content_type.rfind("text/plain", 0) == 0) {
        text = req.body;
        if (auto it = req.query.find("device"); it != req.query.end()) device = it->second;
        if (auto it = req.query.find("scenario"); it != req.query.end()) scenario = it->second;
        if (auto it = req.query.find("calib"); it != req.query.end()) s.calib = calib_from(it->second);
        if (auto it = req.query.find("margin"); it != req.query.end()) {
            try {
                s.margin = std::stod(it->second);
            } catch (const std::exception&) {
                fail(400, "invalid-field", "margin must be a number");
            }
        }
    } else {
        const json j = parse_json(req.body);
        text = field<std::string>(j, "document");
        device = opt_field<std::string>(j, "device");
        scenario = opt_field<std::string>(j, "scenario");
        if (auto c = opt_field<std::string>(j, "calib")) s.calib = calib_from(*c);
        if (auto m = opt_field<double>(j, "margin")) s.margin = *m;
    }
    s.doc = dsl::parse_document(text);
    if (s.doc.has_errors()) throw HttpError{400, diagnostics_json(s.doc.diagnostics)};

    if (!scenario && s.doc.scenarios.size() == 1) scenario = s.doc.scenarios.front().id;
    if (scenario) {
        const auto* sc = s.doc.find_scenario(*scenario);
        if (!sc) fail(404, "unknown-scenario", "no scenario '" + *scenario + "' in document");
        if (!device && sc->device_id) device = sc->device_id;
        s.scenario = *scenario;
    }
    if (!device && s.doc.devices.size() == 1) device = s.doc.devices.front().id;
    if (device) {
        if (!s.doc.find_device(*device)) fail(404, "unknown-device", "no device '" + *device + "' in document");
        s.device = *device;
    }
    return s;
}

json findings_json(const std::vector<Finding>& fs) {
    json out = json::array();
    for (const auto& f : fs)
        out.push_back({{"severity", std::string(to_string(f.severity))},
                       {"code", f.code},
                       {"subject", f.subject},
                       {"message", f.message}});
    return out;
}

std::vector<Provenance> provenance_from(const json& j) {
    std::vector<Provenance> out;
    if (!j.contains("provenance")) return {{"contributed", "anonymous", ""}};
    for (const auto& p : j.at("provenance"))
        out.push_back({field<std::string>(p, "source"), field<std::string>(p, "contributor"), field<std::string>(p, "date")});
    return out;
}

LibraryEntry entry_from(const json& j) {
    const auto kind = field<std::string>(j, "kind");
    const auto id = field<std::string>(j, "id");
    if (!is_valid_id(id)) fail(422, "invalid-identifier", "'" + id + "' is not a valid lowercase kebab-case id");
    if (kind == "curve") {
        DegradationCurve c;
        c.id = id;
        c.material_id = field<std::string>(j, "material");
        c.condition_id = field<std::string>(j, "condition");
        if (auto cal = opt_field<std::string>(j, "calib")) c.calib = calib_from(*cal);
        for (const auto& s : field<json>(j, "samples")) {
            if (!s.is_array() || s.size() != 2 || !s[0].is_number() || !s[1].is_number())
                fail(400, "invalid-field", "samples must be [time_s, fraction] pairs");
            c.samples.push_back({s[0].get<double>(), s[1].get<double>()});
        }
        c.censored = opt_field<bool>(j, "censored").value_or(false);
        c.provenance = provenance_from(j);
        return c;
    }
    if (kind == "courier-curve") {
        CourierCurve c;
        c.id = id;
        c.material_id = field<std::string>(j, "material");
        for (const auto& s : field<json>(j, "samples")) {
            if (!s.is_array() || s.size() != 2 || !s[0].is_number() || !s[1].is_number())
                fail(400, "invalid-field", "samples must be [time_s, released_fraction] pairs");
            c.samples.push_back({s[0].get<double>(), s[1].get<double>()});
        }
        c.censored = opt_field<bool>(j, "censored").value_or(false);
        c.provenance = provenance_from(j);
        return c;
    }
    if (kind == "incentive") {
        IncentiveRecord r;
        r.id = id;
        r.material_id = field<std::string>(j, "material");
        r.ant_visits_30min = field<int>(j, "visits");
        r.consumption_delay_s = field<double>(j, "consumption_delay_s");
        r.provenance = provenance_from(j);
        return r;
    }
    if (kind == "storage-record") {
        StorageForceRecord r;
        r.id = id;
        r.material_id = field<std::string>(j, "material");
        auto form = parse_storage_form(field<std::string>(j, "form"));
        if (!form) fail(400, "invalid-field", "unknown storage form");
        r.form = *form;
        r.f_res_n = field<double>(j, "f_res_n");
        if (j.contains("dims_mm")) r.dims_mm = field<std::map<std::string, double>>(j, "dims_mm");
        r.provenance = provenance_from(j);
        return r;
    }
    fail(400, "invalid-field", "kind must be curve, courier-curve, incentive or storage-record");
}

// Maps domain exceptions to HTTP statuses.
template <typename F>
Response guarded(F&& f) {
    try {
        return f();
    } catch (const HttpError& e) {
        return reply(e.status, {{"diagnostics", e.diagnostics}});
    } catch (const MergeConflict& e) {
        json d = diag("merge-conflict", e.what());
        d["offending"] = e.offending();
        return reply(422, {{"diagnostics", json::array({d})}});
    } catch (const InvariantError& e) {
        return reply(422, {{"diagnostics", json::array({diag("invariant-violation", e.what())})}});
    } catch (const ReferenceError& e) {
        return reply(422, {{"diagnostics", json::array({diag("dangling-reference", e.what())})}});
    } catch (const NotFoundError& e) {
        return reply(404, {{"diagnostics", json::array({diag("not-found", e.what())})}});
    } catch (const MissingCurve& e) {
        return reply(404, {{"diagnostics", json::array({diag("missing-curve", e.what())})}});
    } catch (const Infeasible& e) {
        return reply(422, {{"diagnostics", json::array({diag("infeasible", e.what())})}});
    } catch (const InsufficientData& e) {
        return reply(422, {{"diagnostics", json::array({diag("insufficient-data", e.what())})}});
    } catch (const UnmappedState& e) {
        return reply(422, {{"diagnostics", json::array({diag("unmapped-state", e.what())})}});
    } catch (const Error& e) {
        return reply(422, {{"diagnostics", json::array({diag("domain-error", e.what())})}});
    } catch (const json::exception& e) {
        return reply(400, {{"diagnostics", json::array({diag("malformed-json", e.what())})}});
    } catch (const std::exception& e) {
        return reply(500, {{"diagnostics", json::array({diag("internal", e.what())})}});
    }
}

const MaterialLibrary& library_for(const dsl::Document& doc, const MaterialLibrary& fallback) {
    return doc.library ? *doc.library : fallback;
}

}  // namespace

Service::Service(MaterialLibrary lib, std::filesystem::path contributions)
    : lib_(std::make_shared<const MaterialLibrary>(std::move(lib))), log_(std::move(contributions)) {}

std::shared_ptr<const MaterialLibrary> Service::snapshot() const {
    std::lock_guard lock(mu_);
    return lib_;
}

Response Service::handle(const Request& req) {
    return guarded([&]() -> Response {
        const auto lib = snapshot();
        const std::string& p = req.path;

        if (req.method == "GET") {
            if (p == "/api/health")
                return reply(200, {{"status", "ok"},
                                   {"version", kVersion},
                                   {"library", lib->id()},
                                   {"materials", lib->materials().size()},
                                   {"curves", lib->curves().size()}});
            if (p == "/api/materials") {
                std::optional<Role> role;
                if (auto it = req.query.find("role"); it != req.query.end()) {
                    role = parse_role(it->second);
                    if (!role) fail(400, "invalid-field", "unknown role '" + it->second + "'");
                }
                const auto cond = req.query.find("condition");
                json out = json::array();
                for (const auto& [id, m] : lib->materials()) {
                    if (role && !m.roles.contains(*role)) continue;
                    json mj = material_json(m, *lib);
                    if (cond != req.query.end() && !mj["conditions"].contains(cond->second)) continue;
                    out.push_back(std::move(mj));
                }
                return reply(200, {{"materials", out}});
            }
            if (p == "/api/conditions") {
                json out = json::array();
                for (const auto& [id, c] : lib->conditions()) out.push_back(condition_json(c));
                return reply(200, {{"conditions", out}});
            }
            const std::string prefix = "/api/materials/", suffix = "/curves";
            if (p.size() > prefix.size() + suffix.size() && p.rfind(prefix, 0) == 0 &&
                p.compare(p.size() - suffix.size(), suffix.size(), suffix) == 0) {
                const std::string id = p.substr(prefix.size(), p.size() - prefix.size() - suffix.size());
                if (!lib->find_material(id)) fail(404, "not-found", "unknown material '" + id + "'");
                json curves = json::array(), couriers = json::array();
                for (const auto& [cid, c] : lib->curves())
                    if (c.material_id == id) curves.push_back(curve_json(c));
                for (const auto& [cid, c] : lib->courier_curves())
                    if (c.material_id == id) couriers.push_back(courier_curve_json(c));
                return reply(200, {{"material", id}, {"curves", curves}, {"courier_curves", couriers}});
            }
            if (p == "/api/matlib/export") return {200, "text/plain; charset=utf-8", dsl::serialize(*lib)};
            fail(404, "not-found", "no route " + p);
        }

        if (req.method != "POST") fail(400, "bad-method", "unsupported method " + req.method);

        if (p == "/api/matlib/entries") return contribute(req);

        if (p == "/api/simulate") {
            auto s = select(req);
            if (s.device.empty() || s.scenario.empty())
                fail(400, "missing-field", "document has several devices or scenarios; name one of each");
            const auto report = sim::simulate(*s.doc.find_device(s.device), *s.doc.find_scenario(s.scenario),
                                              library_for(s.doc, *lib), {.calib = s.calib});
            return reply(200, {{"report", report_json(report)}, {"diagnostics", diagnostics_json(s.doc.diagnostics)}});
        }
        if (p == "/api/validate") {
            auto s = select(req);
            if (s.device.empty() || s.scenario.empty())
                fail(400, "missing-field", "document has several devices or scenarios; name one of each");
            const auto fs = validate(*s.doc.find_device(s.device), *s.doc.find_scenario(s.scenario),
                                     library_for(s.doc, *lib));
            return reply(200, {{"findings", findings_json(fs)}, {"ok", !has_errors(fs)}});
        }
        if (p == "/api/design/margin") {
            auto s = select(req);
            if (s.device.empty()) fail(400, "missing-field", "document has several devices; name one");
            json rows = json::array();
            for (const auto& r : design::margin_report(*s.doc.find_device(s.device), library_for(s.doc, *lib), s.margin))
                rows.push_back({{"constraint", r.constraint_id},
                                {"storage", r.storage_id},
                                {"f_max0_n", r.f_max0_n},
                                {"f_res_n", r.f_res_n},
                                {"ratio", r.ratio},
                                {"margin", r.margin},
                                {"pass", r.pass}});
            return reply(200, {{"rows", rows}});
        }
        if (p == "/api/design/count") {
            const json j = parse_json(req.body);
            const auto r = design::solve_count(*lib, field<std::string>(j, "material"), field<std::string>(j, "condition"),
                                               field<double>(j, "a0_mm2"), field<double>(j, "f_res_n"), window_from(j));
            return reply(200, {{"count", r.count},
                               {"failure_time_s", opt_number(r.failure_time_s)},
                               {"bracket", {{"lo_s", opt_number(r.bracket.lo_s)}, {"hi_s", opt_number(r.bracket.hi_s)}}}});
        }
        if (p == "/api/design/area") {
            const json j = parse_json(req.body);
            const auto r = design::solve_area(*lib, field<std::string>(j, "material"), field<std::string>(j, "condition"),
                                              field<int>(j, "count"), field<double>(j, "f_res_n"), window_from(j));
            return reply(200, {{"a0_mm2", r.a0_mm2},
                               {"failure_time_s", opt_number(r.failure_time_s)},
                               {"bracket", {{"lo_s", opt_number(r.bracket.lo_s)}, {"hi_s", opt_number(r.bracket.hi_s)}}},
                               {"geometry_extrapolation", r.geometry_extrapolation}});
        }
        if (p == "/api/design/failure-time") {
            const json j = parse_json(req.body);
            const double t = design::failure_time(*lib, field<std::string>(j, "material"), field<std::string>(j, "condition"),
                                                  calib_from(opt_field<std::string>(j, "calib").value_or("mid")),
                                                  opt_field<int>(j, "count").value_or(1), field<double>(j, "a0_mm2"),
                                                  field<double>(j, "f_res_n"));
            return reply(200, {{"failure_time_s", finite_or_null(t)}});
        }
        fail(404, "not-found", "no route " + p);
    });
}

Response Service::contribute(const Request& req) {
    const json j = parse_json(req.body);
    const LibraryEntry entry = entry_from(j);
    if (auto problems = invariant_violations(entry); !problems.empty()) {
        json ds = json::array();
        for (const auto& p : problems) ds.push_back(diag("invariant-violation", p));
        throw HttpError{422, ds};
    }
    std::lock_guard lock(mu_);
    auto next = std::make_shared<const MaterialLibrary>(merge_entry(*lib_, entry));
    if (!log_.empty()) {
        std::ofstream out(log_, std::ios::app);
        if (!out) fail(422, "log-unwritable", "cannot append to contributions log " + log_.string());
        out << j.dump() << '\n';
    }
    lib_ = std::move(next);
    return reply(201, {{"library", lib_->id()},
                       {"kind", j.at("kind")},
                       {"id", j.at("id")},
                       {"curves", lib_->curves().size()}});
}

std::size_t replay_contributions(MaterialLibrary& base, const std::filesystem::path& log) {
    std::ifstream in(log);
    std::size_t applied = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            base = merge_entry(base, entry_from(json::parse(line)));
            ++applied;
        } catch (...) {
        }
    }
    return applied;
}

// ---------------------------------------------------------------------------

struct Server::Impl {
    Service& svc;
    httplib::Server http;
    std::thread thread;

    explicit Impl(Service& s) : svc(s) {
        auto bridge = [this](const httplib::Request& hreq, httplib::Response& hres) {
            Request req;
            req.method = hreq.method;
            req.path = hreq.path;
            for (const auto& [k, v] : hreq.params) req.query[k] = v;
            req.body = hreq.body;
            req.content_type = hreq.get_header_value("Content-Type");
            const Response r = svc.handle(req);
            hres.status = r.status;
            hres.set_content(r.body, r.content_type);
        };
        http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                  {"Access-Control-Allow-Headers", "Content-Type"},
                                  {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        http.Get(".*", bridge);
        http.Post(".*", bridge);
        http.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    }
};

Server::Server(Service& svc) : impl_(std::make_unique<Impl>(svc)) {}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
    if (bound < 0) return -1;
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return bound;
}

void Server::stop() {
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

void Server::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace dtf::service
