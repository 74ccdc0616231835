#include "dtf/specdsl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "dtf/units.hpp"

namespace dtf::dsl {

// ===========================================================================
// Lexer
// ===========================================================================

namespace {

enum class Tok { ident, number, string, lbrace, rbrace, colon, comma, lbracket, rbracket, lparen, rparen, invalid, end };

struct Token {
    Tok kind = Tok::end;
    std::string text;  // ident text, decoded string, or number literal
    SourceSpan span;
};

bool is_cont(unsigned char c) { return (c & 0xC0) == 0x80; }

class Lexer {
public:
    Lexer(std::string_view src, std::vector<Diagnostic>& diags) : src_(src), diags_(diags) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_space();
            if (pos_ >= src_.size()) {
                out.push_back({Tok::end, "", here(0)});
                return out;
            }
            out.push_back(next());
        }
    }

private:
    std::string_view src_;
    std::vector<Diagnostic>& diags_;
    std::size_t pos_ = 0;
    int line_ = 1;
    std::size_t line_start_ = 0;

    int column_at(std::size_t p) const {
        int col = 1;
        for (std::size_t i = line_start_; i < p; ++i)
            if (!is_cont(static_cast<unsigned char>(src_[i]))) ++col;
        return col;
    }
    int chars_between(std::size_t a, std::size_t b) const {
        int n = 0;
        for (std::size_t i = a; i < b; ++i)
            if (!is_cont(static_cast<unsigned char>(src_[i]))) ++n;
        return n;
    }
    SourceSpan here(int length) const { return {line_, column_at(pos_), length}; }

    void skip_space() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '\n') {
                ++pos_;
                ++line_;
                line_start_ = pos_;
            } else if (c == ' ' || c == '\t' || c == '\r') {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
            } else {
                return;
            }
        }
    }

    static bool ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
    static bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9') || c == '-'; }
    static bool digit(char c) { return c >= '0' && c <= '9'; }

    Token next() {
        const std::size_t start = pos_;
        const SourceSpan at = here(1);
        const char c = src_[pos_];
        auto single = [&](Tok k) {
            ++pos_;
            return Token{k, std::string(1, c), at};
        };
        switch (c) {
            case '{': return single(Tok::lbrace);
            case '}': return single(Tok::rbrace);
            case ':': return single(Tok::colon);
            case ',': return single(Tok::comma);
            case '[': return single(Tok::lbracket);
            case ']': return single(Tok::rbracket);
            case '(': return single(Tok::lparen);
            case ')': return single(Tok::rparen);
            case '"': return string_literal();
            default: break;
        }
        const bool signed_num = (c == '-' || c == '+') && pos_ + 1 < src_.size() &&
                                (digit(src_[pos_ + 1]) || src_[pos_ + 1] == '.');
        if (digit(c) || signed_num || (c == '.' && pos_ + 1 < src_.size() && digit(src_[pos_ + 1]))) {
            if (c == '-' || c == '+') ++pos_;
            while (pos_ < src_.size() && digit(src_[pos_])) ++pos_;
            if (pos_ < src_.size() && src_[pos_] == '.') {
                ++pos_;
                while (pos_ < src_.size() && digit(src_[pos_])) ++pos_;
            }
            if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                std::size_t p = pos_ + 1;
                if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
                if (p < src_.size() && digit(src_[p])) {
                    pos_ = p;
                    while (pos_ < src_.size() && digit(src_[pos_])) ++pos_;
                }
            }
            return {Tok::number, std::string(src_.substr(start, pos_ - start)),
                    {at.line, at.column, chars_between(start, pos_)}};
        }
        if (ident_start(c)) {
            while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
            return {Tok::ident, std::string(src_.substr(start, pos_ - start)),
                    {at.line, at.column, chars_between(start, pos_)}};
        }
        // Consume one whole code point.
        ++pos_;
        while (pos_ < src_.size() && is_cont(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        const std::string bad(src_.substr(start, pos_ - start));
        diags_.push_back({DiagSeverity::error, at, "unexpected character '" + bad + "'", codes::kUnexpectedCharacter});
        return {Tok::invalid, bad, at};
    }

    Token string_literal() {
        const SourceSpan at = here(1);
        const std::size_t start = pos_;
        ++pos_;
        std::string out;
        while (pos_ < src_.size() && src_[pos_] != '\n') {
            char c = src_[pos_];
            if (c == '"') {
                ++pos_;
                return {Tok::string, out, {at.line, at.column, chars_between(start, pos_)}};
            }
            if (c == '\\' && pos_ + 1 < src_.size()) {
                char e = src_[pos_ + 1];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: out += e; break;
                }
                pos_ += 2;
                continue;
            }
            out += c;
            ++pos_;
        }
        diags_.push_back({DiagSeverity::error, {at.line, at.column, chars_between(start, pos_)},
                          "unterminated string", codes::kUnterminatedString});
        return {Tok::invalid, out, at};
    }
};

// ===========================================================================
// Generic tree
// ===========================================================================

struct Value {
    enum class Kind { number, token, string, list, tuple } kind = Kind::token;
    std::string text;  // literal for number, token text, decoded string
    std::optional<std::string> unit;
    SourceSpan unit_span;
    std::vector<Value> items;
    SourceSpan span;
};

struct Field {
    std::string key;
    SourceSpan key_span;
    Value value;
};

struct Block {
    std::string kind;
    SourceSpan kind_span;
    std::string id;
    SourceSpan id_span;
    std::vector<Field> fields;
    std::vector<Block> children;
    bool poisoned = false;  // syntax error inside; not bound
    bool known = true;
};

const std::map<std::string, std::set<std::string>, std::less<>>& grammar() {
    static const std::map<std::string, std::set<std::string>, std::less<>> g{
        {"", {"matlib", "device", "scenario"}},
        {"matlib", {"condition", "material", "curve", "courier-curve", "incentive", "storage-record"}},
        {"device", {"constraint", "storage", "courier", "incentive", "transformation"}},
        {"scenario", {"context", "override"}},
        {"condition", {}},
        {"material", {}},
        {"curve", {}},
        {"courier-curve", {}},
        {"incentive", {}},
        {"storage-record", {}},
        {"constraint", {}},
        {"storage", {}},
        {"courier", {}},
        {"transformation", {}},
        {"context", {}},
        {"override", {}},
    };
    return g;
}

bool is_keyword(std::string_view k) { return !k.empty() && grammar().contains(k); }

class Parser {
public:
    Parser(std::vector<Token> toks, std::vector<Diagnostic>& diags) : toks_(std::move(toks)), diags_(diags) {}

    std::vector<Block> document() {
        std::vector<Block> out;
        while (peek().kind != Tok::end) {
            if (peek().kind == Tok::ident) {
                out.push_back(block(""));
                continue;
            }
            if (peek().kind != Tok::invalid) error(peek().span, "expected a block keyword", codes::kUnexpectedToken);
            // Drop the stray token; swallow a following brace group whole.
            const bool opens = peek().kind == Tok::lbrace;
            advance();
            if (opens) skip_to_close();
        }
        return out;
    }

private:
    std::vector<Token> toks_;
    std::vector<Diagnostic>& diags_;
    std::size_t i_ = 0;

    const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(i_ + ahead, toks_.size() - 1)]; }
    const Token& advance() {
        const Token& t = toks_[i_];
        if (i_ + 1 < toks_.size()) ++i_;
        return t;
    }
    void error(SourceSpan s, std::string msg, const char* code) {
        diags_.push_back({DiagSeverity::error, s, std::move(msg), code});
    }

    // Skips tokens up to and including the brace closing the current block.
    void skip_to_close() {
        int depth = 0;
        while (peek().kind != Tok::end) {
            const Tok k = advance().kind;
            if (k == Tok::lbrace) ++depth;
            if (k == Tok::rbrace) {
                if (depth == 0) return;
                --depth;
            }
        }
    }

    Block block(std::string_view parent) {
        Block b;
        const Token& kw = advance();
        b.kind = kw.text;
        b.kind_span = kw.span;
        const bool keyword = is_keyword(b.kind);
        bool reported = false;
        if (!keyword) {
            error(kw.span, "unknown keyword '" + b.kind + "'", codes::kUnknownKeyword);
            b.known = false;
            b.poisoned = true;
            reported = true;
        } else if (!grammar().at(std::string(parent)).contains(b.kind)) {
            error(kw.span, "'" + b.kind + "' block is not allowed " +
                               (parent.empty() ? std::string("at top level") : "inside '" + std::string(parent) + "'"),
                  codes::kMisplacedBlock);
            b.poisoned = true;
            reported = true;
        }

        if (peek().kind != Tok::ident) {
            if (!reported && peek().kind != Tok::invalid)
                error(peek().span, "expected an identifier after '" + b.kind + "'", codes::kUnexpectedToken);
            b.poisoned = true;
            recover_header();
            return b;
        }
        const Token& id = advance();
        b.id = id.text;
        b.id_span = id.span;
        b.kind_span.length = (id.span.line == kw.span.line) ? id.span.column + id.span.length - kw.span.column
                                                             : kw.span.length;

        if (peek().kind != Tok::lbrace) {
            if (!reported && peek().kind != Tok::invalid)
                error(peek().span, "expected '{' after block header", codes::kUnexpectedToken);
            b.poisoned = true;
            recover_header();
            return b;
        }
        advance();

        if (reported) {
            skip_to_close();
            return b;
        }

        for (;;) {
            const Token& t = peek();
            if (t.kind == Tok::rbrace) {
                advance();
                return b;
            }
            if (t.kind == Tok::end) {
                error(b.kind_span, "block '" + b.kind + " " + b.id + "' is not closed", codes::kUnclosedBlock);
                b.poisoned = true;
                return b;
            }
            if (t.kind == Tok::ident && peek(1).kind == Tok::colon) {
                if (!field(b)) {
                    b.poisoned = true;
                    skip_to_close();
                    return b;
                }
                continue;
            }
            if (t.kind == Tok::ident && peek(1).kind == Tok::ident) {
                Block child = block(b.kind);
                if (child.poisoned) b.poisoned = true;
                b.children.push_back(std::move(child));
                continue;
            }
            if (t.kind == Tok::ident) {
                if (peek(1).kind != Tok::invalid)
                    error(peek(1).span, "expected ':' or a block identifier after '" + t.text + "'",
                          codes::kUnexpectedToken);
            } else if (t.kind != Tok::invalid) {
                error(t.span, "unexpected '" + t.text + "'", codes::kUnexpectedToken);
            }
            b.poisoned = true;
            skip_to_close();
            return b;
        }
    }

    // Header broken before '{': skip to the '{' on the way (and its body),
    // or stop at the next line's start of a block.
    // After a header with no '{'. If field lines follow, the body is there
    // without its opening brace and the next '}' is its own.
    void recover_header() {
        bool body = false;
        while (peek().kind != Tok::end) {
            if (peek().kind == Tok::lbrace) {
                advance();
                skip_to_close();
                return;
            }
            if (peek().kind == Tok::rbrace) {
                if (body) advance();
                return;
            }
            body |= peek().kind == Tok::ident && peek(1).kind == Tok::colon;
            advance();
        }
    }

    bool field(Block& b) {
        Field f;
        const Token& key = advance();
        f.key = key.text;
        f.key_span = key.span;
        advance();  // ':'
        if (!value(f.value)) return false;
        b.fields.push_back(std::move(f));
        return true;
    }

    bool value(Value& v) {
        const Token& t = peek();
        v.span = t.span;
        switch (t.kind) {
            case Tok::number: {
                advance();
                v.kind = Value::Kind::number;
                v.text = t.text;
                // A unit is an identifier on the same line that does not
                // start the next field.
                if (peek().kind == Tok::ident && peek().span.line == t.span.line && peek(1).kind != Tok::colon &&
                    peek(1).kind != Tok::lbrace && !(peek(1).kind == Tok::ident && is_keyword(peek().text))) {
                    v.unit = peek().text;
                    v.unit_span = peek().span;
                    advance();
                }
                return true;
            }
            case Tok::ident:
                advance();
                v.kind = Value::Kind::token;
                v.text = t.text;
                return true;
            case Tok::string:
                advance();
                v.kind = Value::Kind::string;
                v.text = t.text;
                return true;
            case Tok::lbracket:
            case Tok::lparen: {
                const Tok close = t.kind == Tok::lbracket ? Tok::rbracket : Tok::rparen;
                v.kind = t.kind == Tok::lbracket ? Value::Kind::list : Value::Kind::tuple;
                advance();
                for (;;) {
                    if (peek().kind == close) {
                        advance();
                        return true;
                    }
                    Value item;
                    if (!value(item)) return false;
                    v.items.push_back(std::move(item));
                    if (peek().kind == Tok::comma) {
                        advance();
                        continue;
                    }
                    if (peek().kind == close) continue;
                    if (peek().kind != Tok::invalid)
                        error(peek().span, std::string("expected ',' or '") + (close == Tok::rbracket ? "]" : ")") + "'",
                              codes::kUnexpectedToken);
                    return false;
                }
            }
            case Tok::invalid: return false;
            default:
                error(t.span, "expected a value", codes::kUnexpectedToken);
                return false;
        }
    }
};

// ===========================================================================
// Binding the tree to domain objects
// ===========================================================================

enum class Dim { none, time, force, stress, area, length, temperature, percent, mass };

struct UnitInfo {
    Dim dim;
    double scale;
};

const std::map<std::string, UnitInfo, std::less<>>& unit_table() {
    static const std::map<std::string, UnitInfo, std::less<>> t{
        {"s", {Dim::time, 1.0}},          {"min", {Dim::time, units::kMinute}},
        {"h", {Dim::time, units::kHour}}, {"d", {Dim::time, units::kDay}},
        {"N", {Dim::force, 1.0}},         {"MPa", {Dim::stress, 1.0}},
        {"mm2", {Dim::area, 1.0}},        {"mm", {Dim::length, 1.0}},
        {"C", {Dim::temperature, 1.0}},   {"pct", {Dim::percent, 1.0}},
        {"g", {Dim::mass, 1.0}},
    };
    return t;
}

const char* dim_name(Dim d) {
    switch (d) {
        case Dim::none: return "a plain number";
        case Dim::time: return "a time (s, min, h, d)";
        case Dim::force: return "a force (N)";
        case Dim::stress: return "a stress (MPa)";
        case Dim::area: return "an area (mm2)";
        case Dim::length: return "a length (mm)";
        case Dim::temperature: return "a temperature (C)";
        case Dim::percent: return "a percentage (pct)";
        case Dim::mass: return "a mass (g)";
    }
    return "?";
}

struct BindCtx {
    std::vector<Diagnostic>& diags;
    bool failed = false;

    void error(SourceSpan s, std::string msg, const char* code) {
        diags.push_back({DiagSeverity::error, s, std::move(msg), code});
        failed = true;
    }
    void warn(SourceSpan s, std::string msg, const char* code) {
        diags.push_back({DiagSeverity::warning, s, std::move(msg), code});
    }

    std::optional<double> number(const Value& v, Dim dim, std::string_view what) {
        if (v.kind != Value::Kind::number) {
            error(v.span, std::string(what) + " must be " + dim_name(dim), codes::kInvalidValue);
            return std::nullopt;
        }
        std::string_view lit = v.text;
        if (!lit.empty() && lit.front() == '+') lit.remove_prefix(1);
        double x = 0.0;
        auto [p, ec] = std::from_chars(lit.data(), lit.data() + lit.size(), x);
        if (ec != std::errc{} || p != lit.data() + lit.size() || !std::isfinite(x)) {
            error(v.span, "invalid number '" + v.text + "'", codes::kInvalidNumber);
            return std::nullopt;
        }
        if (!v.unit) {
            if (dim != Dim::none)
                warn(v.span, std::string(what) + " has no unit; assuming canonical " + dim_name(dim),
                     codes::kMissingUnit);
            return x;
        }
        auto it = unit_table().find(*v.unit);
        if (it == unit_table().end()) {
            error(v.unit_span, "unknown unit '" + *v.unit + "'", codes::kUnknownUnit);
            return std::nullopt;
        }
        if (it->second.dim != dim) {
            error(v.unit_span, "unit '" + *v.unit + "' does not fit " + std::string(what) + ", expected " + dim_name(dim),
                  codes::kUnitMismatch);
            return std::nullopt;
        }
        return x * it->second.scale;
    }

    std::optional<int> integer(const Value& v, std::string_view what) {
        auto x = number(v, Dim::none, what);
        if (!x) return std::nullopt;
        if (std::floor(*x) != *x || std::fabs(*x) > 2e9) {
            error(v.span, std::string(what) + " must be an integer", codes::kInvalidNumber);
            return std::nullopt;
        }
        return static_cast<int>(*x);
    }

    std::optional<std::string> token(const Value& v, std::string_view what) {
        if (v.kind != Value::Kind::token) {
            error(v.span, std::string(what) + " must be an identifier", codes::kInvalidValue);
            return std::nullopt;
        }
        return v.text;
    }

    std::optional<std::string> id_ref(const Value& v, std::string_view what) {
        auto t = token(v, what);
        if (t && !is_valid_id(*t)) {
            error(v.span, "'" + *t + "' is not a valid lowercase kebab-case id", codes::kInvalidIdentifier);
            return std::nullopt;
        }
        return t;
    }

    std::optional<std::string> text(const Value& v, std::string_view what) {
        if (v.kind != Value::Kind::string) {
            error(v.span, std::string(what) + " must be a quoted string", codes::kInvalidValue);
            return std::nullopt;
        }
        return v.text;
    }

    std::optional<bool> boolean(const Value& v, std::string_view what) {
        if (v.kind == Value::Kind::token && (v.text == "true" || v.text == "false")) return v.text == "true";
        error(v.span, std::string(what) + " must be true or false", codes::kInvalidValue);
        return std::nullopt;
    }

    template <typename E>
    std::optional<E> enumerated(const Value& v, std::string_view what, std::optional<E> (*parse)(std::string_view)) {
        if (v.kind == Value::Kind::token) {
            if (auto e = parse(v.text)) return e;
        }
        error(v.span, "invalid " + std::string(what) + " '" + v.text + "'", codes::kInvalidValue);
        return std::nullopt;
    }
};

// Field access for one block with duplicate/unknown/missing bookkeeping.
class Fields {
public:
    Fields(const Block& b, BindCtx& ctx) : b_(b), ctx_(ctx) {
        std::set<std::string> seen;
        for (const auto& f : b.fields) {
            if (!seen.insert(f.key).second)
                ctx.error(f.key_span, "field '" + f.key + "' given twice", codes::kDuplicateField);
        }
    }

    const Value* get(std::string_view key) {
        used_.insert(std::string(key));
        for (const auto& f : b_.fields)
            if (f.key == key) return &f.value;
        return nullptr;
    }

    const Value* require(std::string_view key) {
        const Value* v = get(key);
        if (!v) missing_.push_back(std::string(key));
        return v;
    }

    // Reports unknown and missing fields. Call after all get/require.
    void finish() {
        for (const auto& f : b_.fields) {
            if (!used_.contains(f.key))
                ctx_.error(f.key_span, "unknown field '" + f.key + "' in '" + b_.kind + "'", codes::kUnknownField);
        }
        if (!missing_.empty()) {
            std::string list;
            for (const auto& m : missing_) list += (list.empty() ? "" : ", ") + m;
            ctx_.error(b_.kind_span, "'" + b_.kind + " " + b_.id + "' is missing required field(s): " + list,
                       codes::kMissingField);
        }
    }

private:
    const Block& b_;
    BindCtx& ctx_;
    std::set<std::string> used_;
    std::vector<std::string> missing_;
};

void check_block_id(const Block& b, BindCtx& ctx) {
    if (!is_valid_id(b.id))
        ctx.error(b.id_span, "'" + b.id + "' is not a valid lowercase kebab-case id", codes::kInvalidIdentifier);
}

void report_invariants(const Block& b, BindCtx& ctx, const std::vector<std::string>& problems) {
    for (const auto& p : problems) ctx.error(b.kind_span, p, codes::kInvariantViolation);
}

std::vector<Provenance> bind_provenance(Fields& f, BindCtx& ctx) {
    std::vector<Provenance> out;
    const Value* v = f.get("provenance");
    if (!v) return out;
    if (v->kind != Value::Kind::list) {
        ctx.error(v->span, "provenance must be a list of (source, \"contributor\", \"date\")", codes::kInvalidValue);
        return out;
    }
    for (const auto& item : v->items) {
        if (item.kind != Value::Kind::tuple || item.items.size() != 3) {
            ctx.error(item.span, "provenance entries are (source, \"contributor\", \"date\")", codes::kInvalidValue);
            continue;
        }
        auto src = ctx.id_ref(item.items[0], "provenance source");
        auto who = ctx.text(item.items[1], "provenance contributor");
        auto when = ctx.text(item.items[2], "provenance date");
        if (src && who && when) out.push_back({*src, *who, *when});
    }
    return out;
}

template <typename Sample>
std::vector<Sample> bind_samples(const Value* v, BindCtx& ctx) {
    std::vector<Sample> out;
    if (!v) return out;
    if (v->kind != Value::Kind::list) {
        ctx.error(v->span, "samples must be a list of (time, fraction) pairs", codes::kInvalidValue);
        return out;
    }
    for (const auto& item : v->items) {
        if (item.kind != Value::Kind::tuple || item.items.size() != 2) {
            ctx.error(item.span, "samples are (time, fraction) pairs", codes::kInvalidValue);
            continue;
        }
        auto t = ctx.number(item.items[0], Dim::time, "sample time");
        auto f = ctx.number(item.items[1], Dim::none, "sample fraction");
        if (t && f) out.push_back({*t, *f});
    }
    return out;
}

struct LibBinder {
    BindCtx& ctx;
    MaterialLibrary lib;
    // Reference fields to check once everything is bound.
    struct Ref {
        std::string id;
        SourceSpan span;
        enum class To { material, condition } to;
        std::string owner;
    };
    std::vector<Ref> refs;

    void add_ref(const Value* v, const std::string& id, Ref::To to, const std::string& owner) {
        if (v) refs.push_back({id, v->span, to, owner});
    }

    template <typename T>
    void insert(const Block& b, T value) {
        try {
            lib.add(std::move(value));
        } catch (const std::exception& e) {
            ctx.error(b.id_span, e.what(), codes::kDuplicateId);
        }
    }

    void condition(const Block& b) {
        Fields f(b, ctx);
        EnvCondition c;
        c.id = b.id;
        if (auto* v = f.get("label")) c.label = ctx.text(*v, "label").value_or("");
        if (auto* v = f.require("medium")) c.medium = ctx.enumerated<Medium>(*v, "medium", parse_medium).value_or(Medium::air);
        if (auto* v = f.require("temperature")) c.temperature_c = ctx.number(*v, Dim::temperature, "temperature").value_or(0.0);
        if (auto* v = f.get("rh")) c.relative_humidity = ctx.number(*v, Dim::percent, "rh");
        if (auto* v = f.get("ph")) c.ph = ctx.number(*v, Dim::none, "ph");
        if (auto* v = f.get("microbes"))
            c.microbial_load = ctx.enumerated<MicrobialLoad>(*v, "microbes", parse_microbial_load).value_or(MicrobialLoad::none);
        if (auto* v = f.get("uv")) c.uv = ctx.boolean(*v, "uv").value_or(false);
        f.finish();
        if (ctx.failed) return;
        report_invariants(b, ctx, invariant_violations(c));
        if (!ctx.failed) insert(b, std::move(c));
    }

    void material(const Block& b) {
        Fields f(b, ctx);
        Material m;
        m.id = b.id;
        if (auto* v = f.require("name")) m.name = ctx.text(*v, "name").value_or("");
        if (auto* v = f.require("roles")) {
            if (v->kind != Value::Kind::list) {
                ctx.error(v->span, "roles must be a list", codes::kInvalidValue);
            } else {
                for (const auto& r : v->items)
                    if (auto role = ctx.enumerated<Role>(r, "role", parse_role)) m.roles.insert(*role);
            }
        }
        if (auto* v = f.get("sigma-i")) m.sigma_i_mpa = ctx.number(*v, Dim::stress, "sigma-i");
        if (auto* v = f.get("tested-a0")) m.tested_a0_mm2 = ctx.number(*v, Dim::area, "tested-a0");
        if (auto* v = f.get("natural")) m.natural_source = ctx.boolean(*v, "natural").value_or(true);
        if (auto* v = f.get("notes")) m.notes = ctx.text(*v, "notes").value_or("");
        f.finish();
        if (ctx.failed) return;
        report_invariants(b, ctx, invariant_violations(m));
        if (!ctx.failed) insert(b, std::move(m));
    }

    void curve(const Block& b) {
        Fields f(b, ctx);
        DegradationCurve c;
        c.id = b.id;
        const Value* mv = f.require("material");
        const Value* cv = f.require("condition");
        if (mv) c.material_id = ctx.id_ref(*mv, "material").value_or("");
        if (cv) c.condition_id = ctx.id_ref(*cv, "condition").value_or("");
        if (auto* v = f.get("calib"))
            c.calib = ctx.enumerated<Calibration>(*v, "calib", parse_calibration).value_or(Calibration::mid);
        c.samples = bind_samples<CurveSample>(f.require("samples"), ctx);
        if (auto* v = f.get("censored")) c.censored = ctx.boolean(*v, "censored").value_or(false);
        c.provenance = bind_provenance(f, ctx);
        f.finish();
        if (ctx.failed) return;
        report_invariants(b, ctx, invariant_violations(c));
        if (ctx.failed) return;
        add_ref(mv, c.material_id, Ref::To::material, "curve '" + c.id + "'");
        add_ref(cv, c.condition_id, Ref::To::condition, "curve '" + c.id + "'");
        insert(b, std::move(c));
    }

    void courier_curve(const Block& b) {
        Fields f(b, ctx);
        CourierCurve c;
        c.id = b.id;
        const Value* mv = f.require("material");
        if (mv) c.material_id = ctx.id_ref(*mv, "material").value_or("");
        c.samples = bind_samples<ReleaseSample>(f.require("samples"), ctx);
        if (auto* v = f.get("censored")) c.censored = ctx.boolean(*v, "censored").value_or(false);
        c.provenance = bind_provenance(f, ctx);
        f.finish();
        if (ctx.failed) return;
        report_invariants(b, ctx, invariant_violations(c));
        if (ctx.failed) return;
        add_ref(mv, c.material_id, Ref::To::material, "courier-curve '" + c.id + "'");
        insert(b, std::move(c));
    }

    void incentive(const Block& b) {
        Fields f(b, ctx);
        IncentiveRecord r;
        r.id = b.id;
        const Value* mv = f.require("material");
        if (mv) r.material_id = ctx.id_ref(*mv, "material").value_or("");
        if (auto* v = f.require("visits")) r.ant_visits_30min = ctx.integer(*v, "visits").value_or(0);
        if (auto* v = f.require("consumption-delay"))
            r.consumption_delay_s = ctx.number(*v, Dim::time, "consumption-delay").value_or(0.0);
        r.provenance = bind_provenance(f, ctx);
        f.finish();
        if (ctx.failed) return;
        report_invariants(b, ctx, invariant_violations(r));
        if (ctx.failed) return;
        add_ref(mv, r.material_id, Ref::To::material, "incentive '" + r.id + "'");
        insert(b, std::move(r));
    }

    void storage_record(const Block& b) {
        Fields f(b, ctx);
        StorageForceRecord r;
        r.id = b.id;
        const Value* mv = f.require("material");
        if (mv) r.material_id = ctx.id_ref(*mv, "material").value_or("");
        if (auto* v = f.require("form")) r.form = ctx.enumerated<StorageForm>(*v, "form", parse_storage_form).value_or(StorageForm::compression);
        if (auto* v = f.require("f-res")) r.f_res_n = ctx.number(*v, Dim::force, "f-res").value_or(0.0);
        if (auto* v = f.get("dims")) {
            if (v->kind != Value::Kind::list) {
                ctx.error(v->span, "dims must be a list of (name, length) pairs", codes::kInvalidValue);
            } else {
                for (const auto& item : v->items) {
                    if (item.kind != Value::Kind::tuple || item.items.size() != 2) {
                        ctx.error(item.span, "dims are (name, length) pairs", codes::kInvalidValue);
                        continue;
                    }
                    auto name = ctx.token(item.items[0], "dimension name");
                    auto len = ctx.number(item.items[1], Dim::length, "dimension");
                    if (name && len) r.dims_mm[*name] = *len;
                }
            }
        }
        r.provenance = bind_provenance(f, ctx);
        f.finish();
        if (ctx.failed) return;
        report_invariants(b, ctx, invariant_violations(r));
        if (ctx.failed) return;
        add_ref(mv, r.material_id, Ref::To::material, "storage-record '" + r.id + "'");
        insert(b, std::move(r));
    }

    void check_refs() {
        for (const auto& r : refs) {
            const bool ok = r.to == Ref::To::material ? lib.find_material(r.id) != nullptr
                                                      : lib.find_condition(r.id) != nullptr;
            if (!ok)
                ctx.error(r.span,
                          r.owner + " references unknown " +
                              (r.to == Ref::To::material ? "material" : "condition") + " '" + r.id + "'",
                          codes::kDanglingReference);
        }
    }
};

std::optional<MaterialLibrary> bind_matlib(const Block& b, BindCtx& ctx) {
    LibBinder lb{ctx, MaterialLibrary(b.id), {}};
    check_block_id(b, ctx);
    Fields f(b, ctx);
    f.finish();
    for (const auto& child : b.children) {
        check_block_id(child, ctx);
        if (child.kind == "condition") lb.condition(child);
        else if (child.kind == "material") lb.material(child);
        else if (child.kind == "curve") lb.curve(child);
        else if (child.kind == "courier-curve") lb.courier_curve(child);
        else if (child.kind == "incentive") lb.incentive(child);
        else if (child.kind == "storage-record") lb.storage_record(child);
    }
    lb.check_refs();
    if (ctx.failed) return std::nullopt;
    return std::move(lb.lib);
}

std::vector<std::string> id_list(const Value& v, BindCtx& ctx, std::string_view what) {
    std::vector<std::string> out;
    if (v.kind == Value::Kind::token) {
        if (auto id = ctx.id_ref(v, what)) out.push_back(*id);
        return out;
    }
    if (v.kind != Value::Kind::list) {
        ctx.error(v.span, std::string(what) + " must be an id or a list of ids", codes::kInvalidValue);
        return out;
    }
    for (const auto& item : v.items)
        if (auto id = ctx.id_ref(item, what)) out.push_back(*id);
    return out;
}

std::optional<DeviceSpec> bind_device(const Block& b, BindCtx& ctx) {
    DeviceSpec d;
    d.id = b.id;
    check_block_id(b, ctx);
    {
        Fields f(b, ctx);
        if (auto* v = f.require("initial-context")) d.initial_context = ctx.id_ref(*v, "initial-context").value_or("");
        f.finish();
    }
    std::map<std::string, SourceSpan> ids;
    for (const auto& c : b.children) {
        check_block_id(c, ctx);
        if (!ids.emplace(c.id, c.id_span).second)
            ctx.error(c.id_span, "id '" + c.id + "' is already used in device '" + d.id + "'", codes::kDuplicateId);
        Fields f(c, ctx);
        if (c.kind == "constraint") {
            ConstraintPart p;
            p.id = c.id;
            if (auto* v = f.require("material")) p.material_id = ctx.id_ref(*v, "material").value_or("");
            if (auto* v = f.require("a0")) p.a0_mm2 = ctx.number(*v, Dim::area, "a0").value_or(0.0);
            if (auto* v = f.get("count")) p.count = ctx.integer(*v, "count").value_or(1);
            if (auto* v = f.get("binding"))
                p.binding = ctx.enumerated<BindingKind>(*v, "binding", parse_binding_kind).value_or(BindingKind::binding_connector);
            if (auto* v = f.require("restrains")) p.restrains = ctx.id_ref(*v, "restrains").value_or("");
            if (auto* v = f.get("margin")) p.margin = ctx.number(*v, Dim::none, "margin");
            f.finish();
            if (!ctx.failed) {
                std::vector<std::string> problems;
                if (!(p.a0_mm2 > 0.0)) problems.push_back("a0 must be > 0");
                if (p.count < 1) problems.push_back("count must be >= 1");
                if (p.margin && *p.margin < 0.0) problems.push_back("margin must be >= 0");
                report_invariants(c, ctx, problems);
            }
            d.constraints.push_back(std::move(p));
        } else if (c.kind == "storage") {
            EnergyStoragePart p;
            p.id = c.id;
            if (auto* v = f.require("form")) p.form = ctx.enumerated<StorageForm>(*v, "form", parse_storage_form).value_or(StorageForm::compression);
            if (auto* v = f.require("material")) p.material_id = ctx.id_ref(*v, "material").value_or("");
            if (auto* v = f.require("f-res")) p.f_res_n = ctx.number(*v, Dim::force, "f-res").value_or(0.0);
            if (auto* v = f.get("description")) p.description = ctx.text(*v, "description").value_or("");
            f.finish();
            if (!ctx.failed && !(p.f_res_n > 0.0)) report_invariants(c, ctx, {"f-res must be > 0"});
            d.storages.push_back(std::move(p));
        } else if (c.kind == "courier") {
            CourierPart p;
            p.id = c.id;
            if (auto* v = f.require("shell")) p.shell_material_id = ctx.id_ref(*v, "shell").value_or("");
            if (auto* v = f.require("payload")) p.payload_name = ctx.text(*v, "payload").value_or("");
            if (auto* v = f.require("payload-mass")) p.payload_mass_g = ctx.number(*v, Dim::mass, "payload-mass").value_or(0.0);
            if (auto* v = f.require("curve")) p.curve_id = ctx.id_ref(*v, "curve").value_or("");
            f.finish();
            if (!ctx.failed && !(p.payload_mass_g > 0.0)) report_invariants(c, ctx, {"payload-mass must be > 0"});
            d.couriers.push_back(std::move(p));
        } else if (c.kind == "incentive") {
            IncentivePart p;
            p.id = c.id;
            if (auto* v = f.require("material")) p.material_id = ctx.id_ref(*v, "material").value_or("");
            if (auto* v = f.require("record")) p.record_id = ctx.id_ref(*v, "record").value_or("");
            f.finish();
            d.incentives.push_back(std::move(p));
        } else if (c.kind == "transformation") {
            Transformation t;
            t.id = c.id;
            const Value* failed = f.get("on-failed");
            const Value* depleted = f.get("on-depleted");
            const Value* consumed = f.get("on-consumed");
            const int n = (failed != nullptr) + (depleted != nullptr) + (consumed != nullptr);
            if (failed) {
                t.trigger.kind = TriggerKind::all_failed;
                t.trigger.subjects = id_list(*failed, ctx, "on-failed");
            } else if (depleted) {
                t.trigger.kind = TriggerKind::courier_depleted;
                if (auto id = ctx.id_ref(*depleted, "on-depleted")) t.trigger.subjects = {*id};
            } else if (consumed) {
                t.trigger.kind = TriggerKind::incentive_consumed;
                if (auto id = ctx.id_ref(*consumed, "on-consumed")) t.trigger.subjects = {*id};
            }
            if (const Value* v = f.require("effects")) {
                if (v->kind != Value::Kind::list) {
                    ctx.error(v->span, "effects must be a list of (kind, target) pairs", codes::kInvalidValue);
                } else {
                    for (const auto& item : v->items) {
                        if (item.kind != Value::Kind::tuple || item.items.size() != 2) {
                            ctx.error(item.span, "effects are (kind, target) pairs", codes::kInvalidValue);
                            continue;
                        }
                        auto kind = ctx.enumerated<EffectKind>(item.items[0], "effect", parse_effect_kind);
                        if (!kind) continue;
                        std::optional<std::string> target;
                        if (*kind == EffectKind::open && item.items[1].kind == Value::Kind::string)
                            target = item.items[1].text;
                        else
                            target = ctx.id_ref(item.items[1], "effect target");
                        if (target) t.effects.push_back({*kind, *target});
                    }
                }
            }
            f.finish();
            if (n == 0)
                ctx.error(c.kind_span, "transformation '" + c.id + "' needs one of on-failed, on-depleted, on-consumed",
                          codes::kMissingField);
            else if (n > 1)
                ctx.error(c.kind_span, "transformation '" + c.id + "' has more than one trigger", codes::kInvalidValue);
            if (!ctx.failed && t.effects.empty()) report_invariants(c, ctx, {"effects must not be empty"});
            d.transformations.push_back(std::move(t));
        }
    }
    if (ctx.failed) return std::nullopt;
    canonicalize(d);
    return d;
}

std::optional<Scenario> bind_scenario(const Block& b, BindCtx& ctx) {
    Scenario s;
    s.id = b.id;
    check_block_id(b, ctx);
    {
        Fields f(b, ctx);
        if (auto* v = f.require("horizon")) s.horizon_s = ctx.number(*v, Dim::time, "horizon").value_or(0.0);
        if (auto* v = f.get("device")) s.device_id = ctx.id_ref(*v, "device");
        f.finish();
        if (!ctx.failed && !(s.horizon_s > 0.0)) report_invariants(b, ctx, {"horizon must be > 0"});
    }
    std::set<std::string> override_ids;
    for (const auto& c : b.children) {
        check_block_id(c, ctx);
        Fields f(c, ctx);
        if (c.kind == "context") {
            std::string cond;
            if (auto* v = f.require("condition")) cond = ctx.id_ref(*v, "condition").value_or("");
            f.finish();
            if (!s.context_conditions.emplace(c.id, cond).second)
                ctx.error(c.id_span, "context '" + c.id + "' declared twice", codes::kDuplicateId);
        } else if (c.kind == "override") {
            ConditionOverride o;
            o.id = c.id;
            if (auto* v = f.require("state")) o.state = ctx.id_ref(*v, "state").value_or("");
            if (auto* v = f.require("from")) o.t0_s = ctx.number(*v, Dim::time, "from").value_or(0.0);
            if (auto* v = f.require("to")) o.t1_s = ctx.number(*v, Dim::time, "to").value_or(0.0);
            if (auto* v = f.require("condition")) o.condition_id = ctx.id_ref(*v, "condition").value_or("");
            f.finish();
            if (!override_ids.insert(o.id).second)
                ctx.error(c.id_span, "override '" + o.id + "' declared twice", codes::kDuplicateId);
            if (!ctx.failed && !(o.t1_s > o.t0_s && o.t0_s >= 0.0))
                report_invariants(c, ctx, {"override interval must satisfy 0 <= from < to"});
            s.overrides.push_back(std::move(o));
        }
    }
    if (!ctx.failed) {
        for (std::size_t i = 0; i < s.overrides.size(); ++i)
            for (std::size_t j = i + 1; j < s.overrides.size(); ++j) {
                const auto& a = s.overrides[i];
                const auto& o = s.overrides[j];
                if (a.state == o.state && a.t0_s < o.t1_s && o.t0_s < a.t1_s)
                    report_invariants(b, ctx, {"overrides '" + a.id + "' and '" + o.id + "' overlap"});
            }
    }
    if (ctx.failed) return std::nullopt;
    canonicalize(s);
    return s;
}

}  // namespace

// ===========================================================================
// Public API
// ===========================================================================

bool Document::has_errors() const {
    return std::any_of(diagnostics.begin(), diagnostics.end(),
                       [](const Diagnostic& d) { return d.severity == DiagSeverity::error; });
}

const DeviceSpec* Document::find_device(std::string_view id) const {
    for (const auto& d : devices)
        if (d.id == id) return &d;
    return nullptr;
}

const Scenario* Document::find_scenario(std::string_view id) const {
    for (const auto& s : scenarios)
        if (s.id == id) return &s;
    return nullptr;
}

Document parse_document(std::string_view text) {
    Document doc;
    auto tokens = Lexer(text, doc.diagnostics).run();
    auto blocks = Parser(std::move(tokens), doc.diagnostics).document();

    bool saw_library = false;
    std::set<std::string> device_ids, scenario_ids;
    for (const auto& b : blocks) {
        if (b.poisoned || !b.known) {
            if (b.kind == "matlib") saw_library = true;
            continue;
        }
        BindCtx ctx{doc.diagnostics};
        if (b.kind == "matlib") {
            if (saw_library) {
                ctx.error(b.kind_span, "only one matlib block is allowed per document", codes::kDuplicateLibrary);
                continue;
            }
            saw_library = true;
            doc.library = bind_matlib(b, ctx);
        } else if (b.kind == "device") {
            if (!device_ids.insert(b.id).second) {
                ctx.error(b.id_span, "device '" + b.id + "' declared twice", codes::kDuplicateId);
                continue;
            }
            if (auto d = bind_device(b, ctx)) doc.devices.push_back(std::move(*d));
        } else if (b.kind == "scenario") {
            if (!scenario_ids.insert(b.id).second) {
                ctx.error(b.id_span, "scenario '" + b.id + "' declared twice", codes::kDuplicateId);
                continue;
            }
            if (auto s = bind_scenario(b, ctx)) doc.scenarios.push_back(std::move(*s));
        }
    }
    std::stable_sort(doc.diagnostics.begin(), doc.diagnostics.end(), [](const Diagnostic& a, const Diagnostic& b) {
        return std::tie(a.span.line, a.span.column) < std::tie(b.span.line, b.span.column);
    });
    std::sort(doc.devices.begin(), doc.devices.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    std::sort(doc.scenarios.begin(), doc.scenarios.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return doc;
}

std::string format_diagnostic(const Diagnostic& d) {
    return std::to_string(d.span.line) + ":" + std::to_string(d.span.column) + ": " +
           (d.severity == DiagSeverity::error ? "error" : "warning") + ": " + d.message + " [" + d.code + "]";
}

std::string format_number(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

// ===========================================================================
// Serializer
// ===========================================================================

namespace {

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out + "\"";
}

std::string time_text(double s) {
    if (s != 0.0 && std::fabs(s) < 1e15) {
        if (std::fmod(s, units::kDay) == 0.0) return format_number(s / units::kDay) + " d";
        if (std::fmod(s, units::kHour) == 0.0) return format_number(s / units::kHour) + " h";
    }
    return format_number(s) + " s";
}

class Writer {
public:
    std::string out;

    void open(std::string_view kind, std::string_view id) {
        indent();
        out += std::string(kind) + " " + std::string(id) + " {\n";
        ++depth_;
    }
    void close() {
        --depth_;
        indent();
        out += "}\n";
    }
    void field(std::string_view key, const std::string& value) {
        indent();
        out += std::string(key) + ": " + value + "\n";
    }

private:
    int depth_ = 0;
    void indent() { out.append(static_cast<std::size_t>(depth_) * 2, ' '); }
};

std::string provenance_text(const std::vector<Provenance>& ps) {
    std::string s = "[";
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (i) s += ", ";
        s += "(" + ps[i].source + ", " + quote(ps[i].contributor) + ", " + quote(ps[i].date) + ")";
    }
    return s + "]";
}

void write_library(Writer& w, const MaterialLibrary& lib) {
    if (lib.empty()) {
        w.out += "matlib " + lib.id() + " { }\n";
        return;
    }
    w.open("matlib", lib.id());
    for (const auto& [id, c] : lib.conditions()) {
        w.open("condition", id);
        w.field("label", quote(c.label));
        w.field("medium", std::string(to_string(c.medium)));
        w.field("temperature", format_number(c.temperature_c) + " C");
        if (c.relative_humidity) w.field("rh", format_number(*c.relative_humidity) + " pct");
        if (c.ph) w.field("ph", format_number(*c.ph));
        w.field("microbes", std::string(to_string(c.microbial_load)));
        w.field("uv", c.uv ? "true" : "false");
        w.close();
    }
    for (const auto& [id, c] : lib.courier_curves()) {
        w.open("courier-curve", id);
        w.field("material", c.material_id);
        std::string s = "[";
        for (std::size_t i = 0; i < c.samples.size(); ++i)
            s += (i ? ", (" : "(") + time_text(c.samples[i].time_s) + ", " + format_number(c.samples[i].released_fraction) + ")";
        w.field("samples", s + "]");
        w.field("censored", c.censored ? "true" : "false");
        if (!c.provenance.empty()) w.field("provenance", provenance_text(c.provenance));
        w.close();
    }
    for (const auto& [id, c] : lib.curves()) {
        w.open("curve", id);
        w.field("material", c.material_id);
        w.field("condition", c.condition_id);
        w.field("calib", std::string(to_string(c.calib)));
        std::string s = "[";
        for (std::size_t i = 0; i < c.samples.size(); ++i)
            s += (i ? ", (" : "(") + time_text(c.samples[i].time_s) + ", " + format_number(c.samples[i].fraction) + ")";
        w.field("samples", s + "]");
        w.field("censored", c.censored ? "true" : "false");
        if (!c.provenance.empty()) w.field("provenance", provenance_text(c.provenance));
        w.close();
    }
    for (const auto& [id, r] : lib.incentive_records()) {
        w.open("incentive", id);
        w.field("material", r.material_id);
        w.field("visits", std::to_string(r.ant_visits_30min));
        w.field("consumption-delay", time_text(r.consumption_delay_s));
        if (!r.provenance.empty()) w.field("provenance", provenance_text(r.provenance));
        w.close();
    }
    for (const auto& [id, m] : lib.materials()) {
        w.open("material", id);
        w.field("name", quote(m.name));
        std::string roles = "[";
        bool first = true;
        for (auto r : m.roles) {
            roles += (first ? "" : ", ") + std::string(to_string(r));
            first = false;
        }
        w.field("roles", roles + "]");
        if (m.sigma_i_mpa) w.field("sigma-i", format_number(*m.sigma_i_mpa) + " MPa");
        if (m.tested_a0_mm2) w.field("tested-a0", format_number(*m.tested_a0_mm2) + " mm2");
        w.field("natural", m.natural_source ? "true" : "false");
        if (!m.notes.empty()) w.field("notes", quote(m.notes));
        w.close();
    }
    for (const auto& [id, r] : lib.storage_records()) {
        w.open("storage-record", id);
        w.field("form", std::string(to_string(r.form)));
        w.field("material", r.material_id);
        std::string dims = "[";
        bool first = true;
        for (const auto& [k, v] : r.dims_mm) {
            dims += (first ? "(" : ", (") + k + ", " + format_number(v) + " mm)";
            first = false;
        }
        w.field("dims", dims + "]");
        w.field("f-res", format_number(r.f_res_n) + " N");
        if (!r.provenance.empty()) w.field("provenance", provenance_text(r.provenance));
        w.close();
    }
    w.close();
}

template <typename Part>
std::vector<const Part*> sorted(const std::vector<Part>& parts) {
    std::vector<const Part*> out;
    for (const auto& p : parts) out.push_back(&p);
    std::sort(out.begin(), out.end(), [](const Part* a, const Part* b) { return a->id < b->id; });
    return out;
}

void write_device(Writer& w, const DeviceSpec& d) {
    w.open("device", d.id);
    w.field("initial-context", d.initial_context);
    for (const auto* c : sorted(d.constraints)) {
        w.open("constraint", c->id);
        w.field("material", c->material_id);
        w.field("a0", format_number(c->a0_mm2) + " mm2");
        w.field("count", std::to_string(c->count));
        w.field("binding", std::string(to_string(c->binding)));
        w.field("restrains", c->restrains);
        if (c->margin) w.field("margin", format_number(*c->margin));
        w.close();
    }
    for (const auto* c : sorted(d.couriers)) {
        w.open("courier", c->id);
        w.field("shell", c->shell_material_id);
        w.field("payload", quote(c->payload_name));
        w.field("payload-mass", format_number(c->payload_mass_g) + " g");
        w.field("curve", c->curve_id);
        w.close();
    }
    for (const auto* i : sorted(d.incentives)) {
        w.open("incentive", i->id);
        w.field("material", i->material_id);
        w.field("record", i->record_id);
        w.close();
    }
    for (const auto* s : sorted(d.storages)) {
        w.open("storage", s->id);
        w.field("form", std::string(to_string(s->form)));
        w.field("material", s->material_id);
        w.field("f-res", format_number(s->f_res_n) + " N");
        if (!s->description.empty()) w.field("description", quote(s->description));
        w.close();
    }
    for (const auto* t : sorted(d.transformations)) {
        w.open("transformation", t->id);
        auto subjects = t->trigger.subjects;
        std::sort(subjects.begin(), subjects.end());
        if (t->trigger.kind == TriggerKind::all_failed) {
            std::string s = "[";
            for (std::size_t i = 0; i < subjects.size(); ++i) s += (i ? ", " : "") + subjects[i];
            w.field("on-failed", s + "]");
        } else {
            w.field(to_string(t->trigger.kind), subjects.empty() ? "" : subjects.front());
        }
        std::string e = "[";
        for (std::size_t i = 0; i < t->effects.size(); ++i) {
            const auto& eff = t->effects[i];
            const bool as_text = eff.kind == EffectKind::open && !is_valid_id(eff.target);
            e += (i ? ", (" : "(") + std::string(to_string(eff.kind)) + ", " +
                 (as_text ? quote(eff.target) : eff.target) + ")";
        }
        w.field("effects", e + "]");
        w.close();
    }
    w.close();
}

void write_scenario(Writer& w, const Scenario& s) {
    w.open("scenario", s.id);
    w.field("horizon", time_text(s.horizon_s));
    if (s.device_id) w.field("device", *s.device_id);
    for (const auto& [state, cond] : s.context_conditions) {
        w.open("context", state);
        w.field("condition", cond);
        w.close();
    }
    for (const auto* o : sorted(s.overrides)) {
        w.open("override", o->id);
        w.field("state", o->state);
        w.field("from", time_text(o->t0_s));
        w.field("to", time_text(o->t1_s));
        w.field("condition", o->condition_id);
        w.close();
    }
    w.close();
}

}  // namespace

std::string serialize(const SerializeInput& objects) {
    Writer w;
    auto devices = objects.devices;
    auto scenarios = objects.scenarios;
    std::sort(devices.begin(), devices.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    std::sort(scenarios.begin(), scenarios.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    for (const auto* d : devices) write_device(w, *d);
    if (objects.library) write_library(w, *objects.library);
    for (const auto* s : scenarios) write_scenario(w, *s);
    return w.out;
}

std::string serialize(const Document& doc) {
    SerializeInput in;
    if (doc.library) in.library = &*doc.library;
    for (const auto& d : doc.devices) in.devices.push_back(&d);
    for (const auto& s : doc.scenarios) in.scenarios.push_back(&s);
    return serialize(in);
}

std::string serialize(const MaterialLibrary& lib) {
    SerializeInput in;
    in.library = &lib;
    return serialize(in);
}

}  // namespace dtf::dsl
