#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtf/device.hpp"
#include "dtf/matlib.hpp"

// Reader and writer for `.dtf` documents.
//
//   document := block*
//   block    := kind ident "{" (field | block)* "}"
//   field    := key ":" value
//   value    := number unit? | token | "string" | "[" value ("," value)* "]"
//             | "(" value ("," value)* ")"
//
// `#` starts a comment. Numbers carrying a unit are normalised to canonical
// units (s, N, MPa, mm2, mm, C, g, pct) while parsing.
namespace dtf::dsl {

struct SourceSpan {
    int line = 1;    // 1-based
    int column = 1;  // 1-based, in code points
    int length = 0;
    bool operator==(const SourceSpan&) const = default;
};

enum class DiagSeverity { error, warning };

struct Diagnostic {
    DiagSeverity severity = DiagSeverity::error;
    SourceSpan span;
    std::string message;
    std::string code;
    bool operator==(const Diagnostic&) const = default;
};

// Stable diagnostic codes.
namespace codes {
inline constexpr const char* kUnknownKeyword = "E001-unknown-keyword";
inline constexpr const char* kUnexpectedToken = "E002-unexpected-token";
inline constexpr const char* kUnterminatedString = "E003-unterminated-string";
inline constexpr const char* kMissingField = "E004-missing-field";
inline constexpr const char* kDuplicateField = "E005-duplicate-field";
inline constexpr const char* kInvalidNumber = "E006-invalid-number";
inline constexpr const char* kUnknownUnit = "E007-unknown-unit";
inline constexpr const char* kUnitMismatch = "E008-unit-mismatch";
inline constexpr const char* kInvalidValue = "E009-invalid-value";
inline constexpr const char* kUnknownField = "E010-unknown-field";
inline constexpr const char* kDuplicateId = "E011-duplicate-id";
inline constexpr const char* kMisplacedBlock = "E012-misplaced-block";
inline constexpr const char* kUnclosedBlock = "E013-unclosed-block";
inline constexpr const char* kInvalidIdentifier = "E014-invalid-identifier";
inline constexpr const char* kInvariantViolation = "E015-invariant-violation";
inline constexpr const char* kUnexpectedCharacter = "E016-unexpected-character";
inline constexpr const char* kDanglingReference = "E017-dangling-reference";
inline constexpr const char* kDuplicateLibrary = "E018-duplicate-matlib";
inline constexpr const char* kMissingUnit = "W001-missing-unit";
}  // namespace codes

struct Document {
    std::optional<MaterialLibrary> library;
    std::vector<DeviceSpec> devices;
    std::vector<Scenario> scenarios;
    std::vector<Diagnostic> diagnostics;

    bool has_errors() const;
    const DeviceSpec* find_device(std::string_view id) const;
    const Scenario* find_scenario(std::string_view id) const;
};

// Never throws on malformed input: every problem becomes a diagnostic, and
// an error suppresses only the top-level block it occurs in.
Document parse_document(std::string_view text);

struct SerializeInput {
    const MaterialLibrary* library = nullptr;
    std::vector<const DeviceSpec*> devices;
    std::vector<const Scenario*> scenarios;
};

// Canonical text: blocks sorted by kind then id, 2-space indent, one field
// per line, values in canonical units.
std::string serialize(const SerializeInput& objects);
std::string serialize(const Document& doc);
std::string serialize(const MaterialLibrary& lib);

// "line:col: severity: message [code]"
std::string format_diagnostic(const Diagnostic& d);

// Shortest round-trip decimal form of a double.
std::string format_number(double v);

}  // namespace dtf::dsl
