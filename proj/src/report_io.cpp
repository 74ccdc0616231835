#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "dtf/error.hpp"
#include "dtf/simengine.hpp"
#include "dtf/specdsl.hpp"
#include "dtf/units.hpp"

namespace dtf::sim {

std::string_view to_string(Pattern p) {
    switch (p) {
        case Pattern::simultaneous: return "simultaneous";
        case Pattern::staggered: return "staggered";
        case Pattern::cascaded: return "cascaded";
    }
    return "?";
}

std::optional<std::string> detail_field(std::string_view detail, std::string_view key) {
    std::size_t start = 0;
    while (start <= detail.size()) {
        std::size_t end = start;
        while (end < detail.size() && detail[end] != ';') ++end;
        const auto item = detail.substr(start, end - start);
        if (item.size() > key.size() && item.compare(0, key.size(), key) == 0 && item[key.size()] == '=')
            return std::string(item.substr(key.size() + 1));
        start = end + 1;
    }
    return std::nullopt;
}

std::set<Pattern> classify_pattern(const TimelineReport& report, double sync_window_s) {
    std::vector<const SimEvent*> failures;
    for (const auto& e : report.events)
        if (e.kind == EventKind::constraint_failed) failures.push_back(&e);
    if (failures.empty()) throw Error("no constraint failures to classify in '" + report.device_id + "'");
    std::stable_sort(failures.begin(), failures.end(),
                     [](const SimEvent* a, const SimEvent* b) { return a->time_s < b->time_s; });

    std::set<Pattern> out;
    std::set<std::string> conditions;
    for (std::size_t i = 0; i < failures.size(); ++i) {
        conditions.insert(detail_field(failures[i]->detail, "condition").value_or(""));
        if (i == 0) continue;
        const auto a = detail_field(failures[i - 1]->detail, "condition");
        const auto b = detail_field(failures[i]->detail, "condition");
        if (a != b) continue;
        out.insert(failures[i]->time_s - failures[i - 1]->time_s <= sync_window_s ? Pattern::simultaneous
                                                                                  : Pattern::staggered);
    }
    if (conditions.size() >= 2) out.insert(Pattern::cascaded);
    return out;
}

std::set<Pattern> classify_pattern(const TimelineReport& report) {
    return classify_pattern(report, 0.01 * report.horizon_s);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
            any = true;
        } else if (c == '\n') {
            if (any || !cell.empty()) {
                row.push_back(std::move(cell));
                rows.push_back(std::move(row));
            }
            row.clear();
            cell.clear();
            any = false;
        } else if (c != '\r') {
            cell += c;
            any = true;
        }
    }
    if (quoted) throw ParseError("unterminated quoted CSV field");
    if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ParseError("invalid number '" + s + "' in CSV");
    return v;
}

std::string traces_table(const std::map<std::string, std::vector<TracePoint>>& traces, std::string_view header) {
    std::string out(header);
    out += '\n';
    for (const auto& [part, points] : traces)
        for (const auto& p : points)
            out += dsl::format_number(p.time_s) + "," + csv_field(part) + "," + dsl::format_number(p.value) + "\n";
    return out;
}

}  // namespace

std::string events_csv(const TimelineReport& report) {
    std::string out = "time_s,kind,subject,detail\n";
    for (const auto& e : report.events)
        out += dsl::format_number(e.time_s) + "," + std::string(to_string(e.kind)) + "," + csv_field(e.subject) + "," +
               csv_field(e.detail) + "\n";
    return out;
}

std::string traces_csv(const TimelineReport& report) { return traces_table(report.traces, "time_s,part,f_max_N"); }

std::string releases_csv(const TimelineReport& report) {
    return traces_table(report.release_traces, "time_s,courier,released_g");
}

TimelineReport report_from_events_csv(std::string_view csv) {
    const auto rows = parse_csv(csv);
    if (rows.empty() || rows.front() != std::vector<std::string>{"time_s", "kind", "subject", "detail"})
        throw ParseError("events CSV must start with the header time_s,kind,subject,detail");
    TimelineReport report;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 4) throw ParseError("events CSV row " + std::to_string(i + 1) + " does not have 4 fields");
        const auto kind = parse_event_kind(r[1]);
        if (!kind) throw ParseError("unknown event kind '" + r[1] + "' on row " + std::to_string(i + 1));
        SimEvent e{parse_double(r[0]), *kind, r[2], r[3]};
        if (e.kind == EventKind::horizon_reached) {
            report.horizon_s = e.time_s;
            report.scenario_id = e.subject;
        }
        report.events.push_back(std::move(e));
    }
    if (!(report.horizon_s > 0.0) && !report.events.empty()) report.horizon_s = report.events.back().time_s;
    return report;
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

std::string timeline_svg(const TimelineReport& report) {
    constexpr double kW = 800, kH = 420, kLeft = 70, kRight = 20, kTop = 30, kBottom = 50;
    const double horizon = report.horizon_s > 0.0 ? report.horizon_s : 1.0;

    // Plot group aggregates when present (keys that are never constraint
    // subjects), otherwise everything.
    double ymax = 0.0;
    for (const auto& [k, pts] : report.traces)
        for (const auto& p : pts) ymax = std::max(ymax, p.value);
    if (!(ymax > 0.0)) ymax = 1.0;
    ymax *= 1.05;

    const bool in_days = horizon >= 2.0 * units::kDay;
    const double unit = in_days ? units::kDay : units::kHour;
    auto x = [&](double t) { return kLeft + (kW - kLeft - kRight) * t / horizon; };
    auto y = [&](double v) { return kH - kBottom - (kH - kTop - kBottom) * v / ymax; };
    auto fmt = [](double v) {
        char buf[32];
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, std::round(v * 100.0) / 100.0);
        (void)ec;
        return std::string(buf, p);
    };

    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
        << kW << " " << kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<title>" << report.device_id << " / " << report.scenario_id << "</title>\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\""
        << kH - kBottom << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double t = horizon * i / 5.0;
        svg << "<text x=\"" << fmt(x(t)) << "\" y=\"" << kH - kBottom + 16 << "\" text-anchor=\"middle\">"
            << fmt(t / unit) << "</text>\n";
        const double v = ymax * i / 5.0;
        svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(y(v) + 4) << "\" text-anchor=\"end\">" << fmt(v)
            << "</text>\n";
    }
    svg << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">time ("
        << (in_days ? "d" : "h") << ")</text>\n";
    svg << "<text x=\"16\" y=\"" << (kTop + kH - kBottom) / 2 << "\" transform=\"rotate(-90 16 "
        << (kTop + kH - kBottom) / 2 << ")\" text-anchor=\"middle\">F_max (N)</text>\n";

    std::size_t color = 0;
    double legend_y = kTop;
    for (const auto& [key, pts] : report.traces) {
        const char* c = kColors[color++ % std::size(kColors)];
        svg << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i)
            svg << (i ? " " : "") << fmt(x(pts[i].time_s)) << "," << fmt(y(pts[i].value));
        svg << "\"/>\n";
        svg << "<text x=\"" << kW - kRight - 4 << "\" y=\"" << legend_y << "\" text-anchor=\"end\" fill=\"" << c
            << "\">" << key << "</text>\n";
        legend_y += 14;
    }
    for (const auto& e : report.events) {
        if (e.kind == EventKind::horizon_reached) continue;
        const bool failure = e.kind == EventKind::constraint_failed;
        svg << "<line x1=\"" << fmt(x(e.time_s)) << "\" y1=\"" << kTop << "\" x2=\"" << fmt(x(e.time_s)) << "\" y2=\""
            << kH - kBottom << "\" stroke=\"" << (failure ? "#d62728" : "#888888") << "\" stroke-dasharray=\"4 3\">"
            << "<title>" << to_string(e.kind) << " " << e.subject << "</title></line>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace dtf::sim
