#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dtf/matlib.hpp"
#include "dtf/specdsl.hpp"
#include "dtf/units.hpp"

namespace dtf::test {

inline std::filesystem::path source_dir() { return DTF_SOURCE_DIR; }

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline const MaterialLibrary& seed() {
    static const MaterialLibrary lib = load_library(source_dir() / "data" / "seed.dtf");
    return lib;
}

// Parses a document under the source tree; callers check diagnostics.
inline dsl::Document document(const std::string& rel) { return dsl::parse_document(read_text(source_dir() / rel)); }

// Plain linear interpolation over the samples, written without the library
// so it can serve as an oracle. Censored curves hold their last value;
// others continue the last slope down to zero.
inline double oracle_fraction(const DegradationCurve& c, double t) {
    const auto& s = c.samples;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (t <= s[i].time_s) {
            const double w = (t - s[i - 1].time_s) / (s[i].time_s - s[i - 1].time_s);
            return s[i - 1].fraction + w * (s[i].fraction - s[i - 1].fraction);
        }
    }
    if (c.censored || s.size() < 2) return s.back().fraction;
    const auto& a = s[s.size() - 2];
    const auto& b = s.back();
    const double slope = (b.fraction - a.fraction) / (b.time_s - a.time_s);
    return std::max(0.0, b.fraction + slope * (t - b.time_s));
}

// First t with f(t) <= target for a non-increasing f, by bisection.
template <class F>
std::optional<double> oracle_first_below(F f, double target, double t_max) {
    if (f(0.0) <= target) return 0.0;
    if (f(t_max) > target) return std::nullopt;
    double lo = 0.0, hi = t_max;
    for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) <= target ? hi : lo) = mid;
    }
    return hi;
}

// Random valid curve: times strictly increasing from 0, fractions
// non-increasing in [0, 1], time scale anywhere from seconds to months.
inline DegradationCurve random_curve(std::mt19937_64& rng, std::string id = "rand") {
    std::uniform_int_distribution<int> n_dist(2, 9);
    std::uniform_real_distribution<double> step(0.5, 1.0);
    std::uniform_real_distribution<double> drop(0.0, 1.0);
    std::bernoulli_distribution flat(0.15);
    std::bernoulli_distribution censor(0.3);
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(1.0, 7.0)(rng));

    DegradationCurve c;
    c.id = std::move(id);
    c.material_id = "m";
    c.condition_id = "k";
    c.censored = censor(rng);
    const int n = n_dist(rng);
    double t = 0.0, f = 1.0;
    c.samples.push_back({0.0, 1.0});
    for (int i = 1; i < n; ++i) {
        t += step(rng) * scale;
        if (!flat(rng)) f = std::max(0.0, f - drop(rng) * f * 0.6);
        c.samples.push_back({t, f});
    }
    return c;
}

inline double days(double d) { return d * units::kDay; }
inline double hours(double h) { return h * units::kHour; }

}  // namespace dtf::test
