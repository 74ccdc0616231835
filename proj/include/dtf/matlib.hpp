#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

namespace dtf {

enum class Medium { air, immersion };
enum class MicrobialLoad { none, low, high };
enum class Role { constraint, courier, incentive, substrate_energy, substrate_auxiliary };
enum class StorageForm { compression, tension, bending, torsion, combined };

// Calibration variant of a degradation curve. `lo` is the fast-degrading
// bound of a reported failure window, `hi` the slow one.
enum class Calibration { lo, mid, hi };

std::string_view to_string(Medium);
std::string_view to_string(MicrobialLoad);
std::string_view to_string(Role);
std::string_view to_string(StorageForm);
std::string_view to_string(Calibration);

std::optional<Medium> parse_medium(std::string_view);
std::optional<MicrobialLoad> parse_microbial_load(std::string_view);
std::optional<Role> parse_role(std::string_view);
std::optional<StorageForm> parse_storage_form(std::string_view);
std::optional<Calibration> parse_calibration(std::string_view);

// Lowercase kebab-case: [a-z0-9]+(-[a-z0-9]+)*
bool is_valid_id(std::string_view id);

struct Provenance {
    std::string source;  // measured | derived-from-window | contributed
    std::string contributor;
    std::string date;
    bool operator==(const Provenance&) const = default;
};

struct EnvCondition {
    std::string id;
    std::string label;
    Medium medium = Medium::air;
    double temperature_c = 25.0;
    std::optional<double> relative_humidity;  // percent, air only
    std::optional<double> ph;                 // immersion only
    MicrobialLoad microbial_load = MicrobialLoad::none;
    bool uv = false;
    bool operator==(const EnvCondition&) const = default;
};

struct Material {
    std::string id;
    std::string name;
    std::set<Role> roles;
    std::optional<double> sigma_i_mpa;
    // Cross-section of the tested constraint samples; degradation data is
    // only directly valid at this geometry.
    std::optional<double> tested_a0_mm2;
    bool natural_source = true;
    std::string notes;
    bool operator==(const Material&) const = default;
};

struct CurveSample {
    double time_s = 0.0;
    double fraction = 1.0;
    bool operator==(const CurveSample&) const = default;
};

// Relative tensile strength (sigma_r / sigma_i) against exposure time for
// one (material, condition) pair, sampled at threshold crossings.
struct DegradationCurve {
    std::string id;
    std::string material_id;
    std::string condition_id;
    Calibration calib = Calibration::mid;
    std::vector<CurveSample> samples;
    bool censored = false;
    std::vector<Provenance> provenance;
    bool operator==(const DegradationCurve&) const = default;
};

struct ReleaseSample {
    double time_s = 0.0;
    double released_fraction = 0.0;
    bool operator==(const ReleaseSample&) const = default;
};

struct CourierCurve {
    std::string id;
    std::string material_id;
    std::vector<ReleaseSample> samples;
    bool censored = false;
    std::vector<Provenance> provenance;
    bool operator==(const CourierCurve&) const = default;
};

struct IncentiveRecord {
    std::string id;
    std::string material_id;
    int ant_visits_30min = 0;
    double consumption_delay_s = 0.0;
    std::vector<Provenance> provenance;
    bool operator==(const IncentiveRecord&) const = default;
};

struct StorageForceRecord {
    std::string id;
    StorageForm form = StorageForm::compression;
    std::string material_id;
    std::map<std::string, double> dims_mm;
    double f_res_n = 0.0;
    std::vector<Provenance> provenance;
    bool operator==(const StorageForceRecord&) const = default;
};

using LibraryEntry = std::variant<DegradationCurve, CourierCurve, IncentiveRecord, StorageForceRecord>;

// Each returns the list of violated invariants (empty when valid).
std::vector<std::string> invariant_violations(const EnvCondition&);
std::vector<std::string> invariant_violations(const Material&);
std::vector<std::string> invariant_violations(const DegradationCurve&);
std::vector<std::string> invariant_violations(const CourierCurve&);
std::vector<std::string> invariant_violations(const IncentiveRecord&);
std::vector<std::string> invariant_violations(const StorageForceRecord&);
std::vector<std::string> invariant_violations(const LibraryEntry&);

using CurveKey = std::tuple<std::string, std::string, Calibration>;

// Material degradation database. Built once (parser, merge) and then shared
// read-only; every mutation path goes through a copy.
class MaterialLibrary {
public:
    MaterialLibrary() = default;
    explicit MaterialLibrary(std::string id) : id_(std::move(id)) {}

    const std::string& id() const noexcept { return id_; }
    void set_id(std::string id) { id_ = std::move(id); }

    const std::map<std::string, EnvCondition>& conditions() const noexcept { return conditions_; }
    const std::map<std::string, Material>& materials() const noexcept { return materials_; }
    const std::map<std::string, DegradationCurve>& curves() const noexcept { return curves_; }
    const std::map<std::string, CourierCurve>& courier_curves() const noexcept { return courier_curves_; }
    const std::map<std::string, IncentiveRecord>& incentive_records() const noexcept { return incentives_; }
    const std::map<std::string, StorageForceRecord>& storage_records() const noexcept { return storage_; }

    const EnvCondition* find_condition(std::string_view id) const;
    const Material* find_material(std::string_view id) const;
    const DegradationCurve* find_curve(std::string_view material_id, std::string_view condition_id,
                                       Calibration calib = Calibration::mid) const;
    const CourierCurve* find_courier_curve_by_id(std::string_view id) const;
    const CourierCurve* find_courier_curve_for(std::string_view material_id) const;
    const IncentiveRecord* find_incentive(std::string_view id) const;

    // Insertion with key-collision checks (throws InvariantError).
    // References are not checked here; see check_integrity().
    void add(EnvCondition);
    void add(Material);
    void add(DegradationCurve);
    void add(CourierCurve);
    void add(IncentiveRecord);
    void add(StorageForceRecord);

    // Throws ReferenceError naming the first dangling id.
    void check_integrity() const;

    bool empty() const noexcept;
    bool operator==(const MaterialLibrary&) const = default;

private:
    std::string id_;
    std::map<std::string, EnvCondition> conditions_;
    std::map<std::string, Material> materials_;
    std::map<std::string, DegradationCurve> curves_;
    std::map<std::string, CourierCurve> courier_curves_;
    std::map<std::string, IncentiveRecord> incentives_;
    std::map<std::string, StorageForceRecord> storage_;
    std::map<CurveKey, std::string> curve_index_;

    friend MaterialLibrary merge_entry(const MaterialLibrary&, const LibraryEntry&);
};

// Reads a library document (DSL `matlib` block). Throws ParseError with
// line/column on malformed text or when there is no matlib block, and
// ReferenceError on dangling ids.
MaterialLibrary load_library(const std::filesystem::path& path);
MaterialLibrary load_library_text(std::string_view text);

// Returns a new snapshot with `entry` added. Degradation curves colliding on
// (material, condition, calib) are unioned; a union that breaks monotonicity
// throws MergeConflict listing the offending sample pairs.
MaterialLibrary merge_entry(const MaterialLibrary& lib, const LibraryEntry& entry);

// Exact-match lookup; throws NotFoundError naming the pair.
const DegradationCurve& lookup_curve(const MaterialLibrary& lib, std::string_view material_id,
                                     std::string_view condition_id, Calibration calib = Calibration::mid);

// Calibration lookup that falls back to the mid curve when the requested
// variant is not stored. Returns nullptr when nothing exists.
const DegradationCurve* find_calibrated_curve(const MaterialLibrary& lib, std::string_view material_id,
                                              std::string_view condition_id, Calibration calib);

// CSV with header `time_s,fraction`.
std::string curve_to_csv(const DegradationCurve& curve);
std::vector<CurveSample> samples_from_csv(std::string_view text);

}  // namespace dtf
