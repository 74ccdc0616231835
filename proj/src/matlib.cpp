#include "dtf/matlib.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <utility>

#include "dtf/error.hpp"
#include "dtf/specdsl.hpp"

namespace dtf {

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup_name(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table) {
    for (const auto& [value, name] : table) {
        if (name == s) return value;
    }
    return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
    for (const auto& [value, name] : table) {
        if (value == e) return name;
    }
    return "?";
}

constexpr std::array<std::pair<Medium, std::string_view>, 2> kMedium{{
    {Medium::air, "air"},
    {Medium::immersion, "immersion"},
}};
constexpr std::array<std::pair<MicrobialLoad, std::string_view>, 3> kMicrobes{{
    {MicrobialLoad::none, "none"},
    {MicrobialLoad::low, "low"},
    {MicrobialLoad::high, "high"},
}};
constexpr std::array<std::pair<Role, std::string_view>, 5> kRole{{
    {Role::constraint, "constraint"},
    {Role::courier, "courier"},
    {Role::incentive, "incentive"},
    {Role::substrate_energy, "substrate-energy"},
    {Role::substrate_auxiliary, "substrate-auxiliary"},
}};
constexpr std::array<std::pair<StorageForm, std::string_view>, 5> kForm{{
    {StorageForm::compression, "compression"},
    {StorageForm::tension, "tension"},
    {StorageForm::bending, "bending"},
    {StorageForm::torsion, "torsion"},
    {StorageForm::combined, "combined"},
}};
constexpr std::array<std::pair<Calibration, std::string_view>, 3> kCalib{{
    {Calibration::lo, "lo"},
    {Calibration::mid, "mid"},
    {Calibration::hi, "hi"},
}};

std::string num(double v) { return dsl::format_number(v); }

std::string pair_text(double t, double f) { return "(" + num(t) + ", " + num(f) + ")"; }

}  // namespace

std::string_view to_string(Medium m) { return name_of(m, kMedium); }
std::string_view to_string(MicrobialLoad m) { return name_of(m, kMicrobes); }
std::string_view to_string(Role r) { return name_of(r, kRole); }
std::string_view to_string(StorageForm f) { return name_of(f, kForm); }
std::string_view to_string(Calibration c) { return name_of(c, kCalib); }

std::optional<Medium> parse_medium(std::string_view s) { return lookup_name(s, kMedium); }
std::optional<MicrobialLoad> parse_microbial_load(std::string_view s) { return lookup_name(s, kMicrobes); }
std::optional<Role> parse_role(std::string_view s) { return lookup_name(s, kRole); }
std::optional<StorageForm> parse_storage_form(std::string_view s) { return lookup_name(s, kForm); }
std::optional<Calibration> parse_calibration(std::string_view s) { return lookup_name(s, kCalib); }

bool is_valid_id(std::string_view id) {
    if (id.empty() || id.front() == '-' || id.back() == '-') return false;
    char prev = 0;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
        if (!ok) return false;
        if (c == '-' && prev == '-') return false;
        prev = c;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Invariants
// ---------------------------------------------------------------------------

std::vector<std::string> invariant_violations(const EnvCondition& c) {
    std::vector<std::string> out;
    if (c.temperature_c < -40.0 || c.temperature_c > 120.0)
        out.push_back("temperature " + num(c.temperature_c) + " C outside [-40, 120]");
    if (c.medium == Medium::air) {
        if (!c.relative_humidity)
            out.push_back("relative humidity is required for air conditions");
        else if (*c.relative_humidity < 0.0 || *c.relative_humidity > 100.0)
            out.push_back("relative humidity " + num(*c.relative_humidity) + " outside [0, 100]");
        if (c.ph) out.push_back("ph is only allowed for immersion conditions");
    } else {
        if (c.relative_humidity) out.push_back("relative humidity is only allowed for air conditions");
        if (c.ph && (*c.ph < 0.0 || *c.ph > 14.0)) out.push_back("ph " + num(*c.ph) + " outside [0, 14]");
    }
    return out;
}

std::vector<std::string> invariant_violations(const Material& m) {
    std::vector<std::string> out;
    if (m.roles.empty()) out.push_back("material '" + m.id + "' has no roles");
    if (m.roles.contains(Role::constraint) && !(m.sigma_i_mpa && *m.sigma_i_mpa > 0.0))
        out.push_back("constraint material '" + m.id + "' needs sigma-i > 0");
    if (m.sigma_i_mpa && *m.sigma_i_mpa <= 0.0) out.push_back("sigma-i must be > 0");
    if (m.tested_a0_mm2 && *m.tested_a0_mm2 <= 0.0) out.push_back("tested-a0 must be > 0");
    return out;
}

std::vector<std::string> invariant_violations(const DegradationCurve& c) {
    std::vector<std::string> out;
    if (c.samples.empty() || c.samples.front().time_s != 0.0 || c.samples.front().fraction != 1.0) {
        out.push_back("first sample must be (0, 1)");
    }
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
        const auto& s = c.samples[i];
        if (!(s.fraction >= 0.0 && s.fraction <= 1.0))
            out.push_back("fraction " + num(s.fraction) + " outside [0, 1]");
        if (i == 0) continue;
        const auto& p = c.samples[i - 1];
        if (!(s.time_s > p.time_s))
            out.push_back("time not strictly increasing at " + pair_text(p.time_s, p.fraction) + " -> " +
                          pair_text(s.time_s, s.fraction));
        if (s.fraction > p.fraction)
            out.push_back("fraction rises from " + pair_text(p.time_s, p.fraction) + " to " +
                          pair_text(s.time_s, s.fraction));
    }
    return out;
}

std::vector<std::string> invariant_violations(const CourierCurve& c) {
    std::vector<std::string> out;
    if (c.samples.empty() || c.samples.front().time_s != 0.0 || c.samples.front().released_fraction != 0.0) {
        out.push_back("first release sample must be (0, 0)");
    }
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
        const auto& s = c.samples[i];
        if (!(s.released_fraction >= 0.0 && s.released_fraction <= 1.0))
            out.push_back("released fraction " + num(s.released_fraction) + " outside [0, 1]");
        if (i == 0) continue;
        const auto& p = c.samples[i - 1];
        if (!(s.time_s > p.time_s))
            out.push_back("time not strictly increasing at " + pair_text(p.time_s, p.released_fraction) +
                          " -> " + pair_text(s.time_s, s.released_fraction));
        if (s.released_fraction < p.released_fraction)
            out.push_back("released fraction falls from " + pair_text(p.time_s, p.released_fraction) + " to " +
                          pair_text(s.time_s, s.released_fraction));
    }
    if (!c.censored && !c.samples.empty() && c.samples.back().released_fraction < 0.95)
        out.push_back("uncensored release curve must end at >= 0.95");
    return out;
}

std::vector<std::string> invariant_violations(const IncentiveRecord& r) {
    std::vector<std::string> out;
    if (r.ant_visits_30min < 0) out.push_back("ant visits must be >= 0");
    if (!(r.consumption_delay_s > 0.0)) out.push_back("consumption delay must be > 0");
    return out;
}

std::vector<std::string> invariant_violations(const StorageForceRecord& r) {
    std::vector<std::string> out;
    if (!(r.f_res_n > 0.0)) out.push_back("f-res must be > 0");
    for (const auto& [name, v] : r.dims_mm) {
        if (!(v > 0.0)) out.push_back("dimension '" + name + "' must be > 0");
    }
    return out;
}

std::vector<std::string> invariant_violations(const LibraryEntry& e) {
    return std::visit([](const auto& x) { return invariant_violations(x); }, e);
}

// ---------------------------------------------------------------------------
// MaterialLibrary
// ---------------------------------------------------------------------------

namespace {
template <typename Map>
const typename Map::mapped_type* find_in(const Map& m, std::string_view id) {
    auto it = m.find(std::string(id));
    return it == m.end() ? nullptr : &it->second;
}

template <typename T>
void insert_unique(std::map<std::string, T>& m, T value, std::string_view what) {
    if (!is_valid_id(value.id)) throw InvariantError("invalid " + std::string(what) + " id '" + value.id + "'");
    auto id = value.id;
    if (!m.emplace(id, std::move(value)).second)
        throw InvariantError("duplicate " + std::string(what) + " id '" + id + "'");
}
}  // namespace

const EnvCondition* MaterialLibrary::find_condition(std::string_view id) const { return find_in(conditions_, id); }
const Material* MaterialLibrary::find_material(std::string_view id) const { return find_in(materials_, id); }
const CourierCurve* MaterialLibrary::find_courier_curve_by_id(std::string_view id) const {
    return find_in(courier_curves_, id);
}
const IncentiveRecord* MaterialLibrary::find_incentive(std::string_view id) const { return find_in(incentives_, id); }

const DegradationCurve* MaterialLibrary::find_curve(std::string_view material_id, std::string_view condition_id,
                                                    Calibration calib) const {
    auto it = curve_index_.find(CurveKey{std::string(material_id), std::string(condition_id), calib});
    if (it == curve_index_.end()) return nullptr;
    return &curves_.at(it->second);
}

const CourierCurve* MaterialLibrary::find_courier_curve_for(std::string_view material_id) const {
    for (const auto& [id, c] : courier_curves_) {
        if (c.material_id == material_id) return &c;
    }
    return nullptr;
}

void MaterialLibrary::add(EnvCondition c) { insert_unique(conditions_, std::move(c), "condition"); }
void MaterialLibrary::add(Material m) { insert_unique(materials_, std::move(m), "material"); }

void MaterialLibrary::add(DegradationCurve c) {
    CurveKey key{c.material_id, c.condition_id, c.calib};
    if (curve_index_.contains(key)) {
        throw InvariantError("second " + std::string(to_string(c.calib)) + " curve for (" + c.material_id + ", " +
                             c.condition_id + ")");
    }
    const auto id = c.id;
    insert_unique(curves_, std::move(c), "curve");
    curve_index_.emplace(std::move(key), id);
}

void MaterialLibrary::add(CourierCurve c) {
    if (find_courier_curve_for(c.material_id))
        throw InvariantError("second courier curve for material '" + c.material_id + "'");
    insert_unique(courier_curves_, std::move(c), "courier-curve");
}

void MaterialLibrary::add(IncentiveRecord r) { insert_unique(incentives_, std::move(r), "incentive"); }
void MaterialLibrary::add(StorageForceRecord r) { insert_unique(storage_, std::move(r), "storage-record"); }

bool MaterialLibrary::empty() const noexcept {
    return conditions_.empty() && materials_.empty() && curves_.empty() && courier_curves_.empty() &&
           incentives_.empty() && storage_.empty();
}

void MaterialLibrary::check_integrity() const {
    auto need_material = [&](const std::string& owner, const std::string& id) {
        if (!materials_.contains(id))
            throw ReferenceError(owner + " references unknown material '" + id + "'", id);
    };
    for (const auto& [id, c] : curves_) {
        need_material("curve '" + id + "'", c.material_id);
        if (!conditions_.contains(c.condition_id))
            throw ReferenceError("curve '" + id + "' references unknown condition '" + c.condition_id + "'",
                                 c.condition_id);
    }
    for (const auto& [id, c] : courier_curves_) need_material("courier-curve '" + id + "'", c.material_id);
    for (const auto& [id, r] : incentives_) need_material("incentive '" + id + "'", r.material_id);
    for (const auto& [id, r] : storage_) need_material("storage-record '" + id + "'", r.material_id);
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

MaterialLibrary load_library_text(std::string_view text) {
    auto doc = dsl::parse_document(text);
    for (const auto& d : doc.diagnostics) {
        if (d.severity != dsl::DiagSeverity::error) continue;
        if (d.code == dsl::codes::kDanglingReference) {
            // The dangling id is the last quoted name in the message.
            auto q2 = d.message.rfind('\'');
            auto q1 = q2 == std::string::npos || q2 == 0 ? std::string::npos : d.message.rfind('\'', q2 - 1);
            std::string id = q1 == std::string::npos ? "" : d.message.substr(q1 + 1, q2 - q1 - 1);
            throw ReferenceError(dsl::format_diagnostic(d), id);
        }
        throw ParseError(dsl::format_diagnostic(d));
    }
    if (!doc.library) throw ParseError("document has no matlib block");
    return std::move(*doc.library);
}

MaterialLibrary load_library(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open library file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return load_library_text(ss.str());
    } catch (const ReferenceError& e) {
        throw ReferenceError(path.string() + ":" + e.what(), e.dangling_id());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ":" + e.what());
    }
}

namespace {

void append_provenance(std::vector<Provenance>& into, const std::vector<Provenance>& from) {
    for (const auto& p : from) {
        if (std::find(into.begin(), into.end(), p) == into.end()) into.push_back(p);
    }
}

DegradationCurve union_curves(const DegradationCurve& a, const DegradationCurve& b) {
    std::vector<CurveSample> merged = a.samples;
    merged.insert(merged.end(), b.samples.begin(), b.samples.end());
    std::stable_sort(merged.begin(), merged.end(),
                     [](const CurveSample& x, const CurveSample& y) { return x.time_s < y.time_s; });

    std::vector<CurveSample> out;
    std::vector<std::string> offending;
    for (const auto& s : merged) {
        if (!out.empty() && out.back().time_s == s.time_s) {
            if (out.back().fraction != s.fraction)
                offending.push_back(pair_text(out.back().time_s, out.back().fraction) + " vs " +
                                    pair_text(s.time_s, s.fraction));
            continue;
        }
        if (!out.empty() && s.fraction > out.back().fraction)
            offending.push_back(pair_text(out.back().time_s, out.back().fraction) + " -> " +
                                pair_text(s.time_s, s.fraction));
        out.push_back(s);
    }
    if (!offending.empty()) {
        std::string msg = "merge of curve (" + a.material_id + ", " + a.condition_id +
                          ") breaks monotonicity:";
        for (const auto& o : offending) msg += " " + o + ";";
        throw MergeConflict(msg, offending);
    }

    DegradationCurve r = a;
    r.samples = std::move(out);
    const double a_end = a.samples.empty() ? 0.0 : a.samples.back().time_s;
    const double b_end = b.samples.empty() ? 0.0 : b.samples.back().time_s;
    // The observation that ran longest decides whether failure was seen.
    if (b_end > a_end)
        r.censored = b.censored;
    else if (b_end == a_end)
        r.censored = a.censored && b.censored;
    append_provenance(r.provenance, b.provenance);
    return r;
}

CourierCurve union_courier(const CourierCurve& a, const CourierCurve& b) {
    std::vector<ReleaseSample> merged = a.samples;
    merged.insert(merged.end(), b.samples.begin(), b.samples.end());
    std::stable_sort(merged.begin(), merged.end(),
                     [](const ReleaseSample& x, const ReleaseSample& y) { return x.time_s < y.time_s; });
    std::vector<ReleaseSample> out;
    std::vector<std::string> offending;
    for (const auto& s : merged) {
        if (!out.empty() && out.back().time_s == s.time_s) {
            if (out.back().released_fraction != s.released_fraction)
                offending.push_back(pair_text(out.back().time_s, out.back().released_fraction) + " vs " +
                                    pair_text(s.time_s, s.released_fraction));
            continue;
        }
        if (!out.empty() && s.released_fraction < out.back().released_fraction)
            offending.push_back(pair_text(out.back().time_s, out.back().released_fraction) + " -> " +
                                pair_text(s.time_s, s.released_fraction));
        out.push_back(s);
    }
    if (!offending.empty()) {
        std::string msg = "merge of courier curve for '" + a.material_id + "' breaks monotonicity:";
        for (const auto& o : offending) msg += " " + o + ";";
        throw MergeConflict(msg, offending);
    }
    CourierCurve r = a;
    r.samples = std::move(out);
    const double a_end = a.samples.empty() ? 0.0 : a.samples.back().time_s;
    const double b_end = b.samples.empty() ? 0.0 : b.samples.back().time_s;
    if (b_end > a_end)
        r.censored = b.censored;
    else if (b_end == a_end)
        r.censored = a.censored && b.censored;
    append_provenance(r.provenance, b.provenance);
    return r;
}

template <typename T>
bool same_payload(T a, T b) {
    a.provenance.clear();
    b.provenance.clear();
    return a == b;
}

}  // namespace

MaterialLibrary merge_entry(const MaterialLibrary& lib, const LibraryEntry& entry) {
    if (auto problems = invariant_violations(entry); !problems.empty()) {
        std::string msg = "entry violates invariants:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw InvariantError(msg);
    }

    MaterialLibrary out = lib;
    std::visit(
        [&](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if (!lib.find_material(e.material_id))
                throw ReferenceError("entry references unknown material '" + e.material_id + "'", e.material_id);

            if constexpr (std::is_same_v<T, DegradationCurve>) {
                if (!lib.find_condition(e.condition_id))
                    throw ReferenceError("entry references unknown condition '" + e.condition_id + "'",
                                         e.condition_id);
                CurveKey key{e.material_id, e.condition_id, e.calib};
                if (auto it = out.curve_index_.find(key); it != out.curve_index_.end()) {
                    auto& existing = out.curves_.at(it->second);
                    existing = union_curves(existing, e);
                    return;
                }
                if (out.curves_.contains(e.id))
                    throw MergeConflict("curve id '" + e.id + "' already names a different curve", {e.id});
                out.add(e);
            } else if constexpr (std::is_same_v<T, CourierCurve>) {
                for (auto& [id, existing] : out.courier_curves_) {
                    if (existing.material_id == e.material_id) {
                        existing = union_courier(existing, e);
                        return;
                    }
                }
                if (out.courier_curves_.contains(e.id))
                    throw MergeConflict("courier curve id '" + e.id + "' already in use", {e.id});
                out.add(e);
            } else {
                auto& table = [&]() -> auto& {
                    if constexpr (std::is_same_v<T, IncentiveRecord>)
                        return out.incentives_;
                    else
                        return out.storage_;
                }();
                if (auto it = table.find(e.id); it != table.end()) {
                    if (!same_payload(it->second, e))
                        throw MergeConflict("record '" + e.id + "' already exists with different values", {e.id});
                    append_provenance(it->second.provenance, e.provenance);
                    return;
                }
                out.add(e);
            }
        },
        entry);
    return out;
}

const DegradationCurve& lookup_curve(const MaterialLibrary& lib, std::string_view material_id,
                                     std::string_view condition_id, Calibration calib) {
    if (const auto* c = lib.find_curve(material_id, condition_id, calib)) return *c;
    std::string what = "no degradation curve for (" + std::string(material_id) + ", " + std::string(condition_id) + ")";
    if (calib != Calibration::mid) what += " [" + std::string(to_string(calib)) + "]";
    throw NotFoundError(what);
}

const DegradationCurve* find_calibrated_curve(const MaterialLibrary& lib, std::string_view material_id,
                                              std::string_view condition_id, Calibration calib) {
    if (const auto* c = lib.find_curve(material_id, condition_id, calib)) return c;
    return lib.find_curve(material_id, condition_id, Calibration::mid);
}

std::string curve_to_csv(const DegradationCurve& curve) {
    std::string out = "time_s,fraction\n";
    for (const auto& s : curve.samples) out += num(s.time_s) + "," + num(s.fraction) + "\n";
    return out;
}

std::vector<CurveSample> samples_from_csv(std::string_view text) {
    std::vector<CurveSample> out;
    std::size_t pos = 0;
    int line_no = 0;
    auto parse_double = [&](std::string_view field) {
        double v = 0.0;
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc{} || p != field.data() + field.size())
            throw ParseError("csv line " + std::to_string(line_no) + ": invalid number '" + std::string(field) + "'");
        return v;
    };
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != "time_s,fraction")
                throw ParseError("csv line 1: expected header 'time_s,fraction'");
            continue;
        }
        auto comma = line.find(',');
        if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos)
            throw ParseError("csv line " + std::to_string(line_no) + ": expected two columns");
        out.push_back({parse_double(line.substr(0, comma)), parse_double(line.substr(comma + 1))});
    }
    if (line_no == 0) throw ParseError("csv: empty input");
    return out;
}

}  // namespace dtf
