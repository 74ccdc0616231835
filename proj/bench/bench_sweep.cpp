// Serial vs OpenMP timings for the sweep kernels. Prints CSV:
// kernel,threads,serial_ms,parallel_ms,speedup,identical
// Usage: dtf_bench [repeats]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dtf/specdsl.hpp"
#include "dtf/sweep.hpp"

using namespace dtf;

namespace {

template <class F>
double median_ms(int repeats, F&& f) {
    std::vector<double> ms;
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    return ms[ms.size() / 2];
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void row(const char* kernel, double serial, double parallel, bool same) {
    std::printf("%s,%d,%.3f,%.3f,%.2f,%s\n", kernel, omp_get_max_threads(), serial, parallel, serial / parallel,
                same ? "true" : "false");
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 5;
    const std::string root = DTF_SOURCE_DIR;
    const auto lib = load_library(root + "/data/seed.dtf");
    const auto& curve = lookup_curve(lib, "alginate", "underwater-microbes");

    std::printf("kernel,threads,serial_ms,parallel_ms,speedup,identical\n");

    std::vector<double> a, b;
    const double cs = median_ms(repeats, [&] { a = sweep::count_failure_times_serial(curve, 3.0, 2.5, 20000); });
    const double cp = median_ms(repeats, [&] { b = sweep::count_failure_times(curve, 3.0, 2.5, 20000); });
    row("count_failure_times", cs, cp, a == b);

    std::vector<double> areas;
    for (int i = 0; i < 200000; ++i) areas.push_back(0.01 + i * 1e-4);
    const double as = median_ms(repeats, [&] { a = sweep::area_failure_times_serial(curve, 12.0, 2, 2.5, areas); });
    const double ap = median_ms(repeats, [&] { b = sweep::area_failure_times(curve, 12.0, 2, 2.5, areas); });
    row("area_failure_times", as, ap, a == b);

    std::vector<dsl::Document> docs;
    for (const char* f : {"/fixtures/soil.dtf", "/fixtures/seeder.dtf", "/fixtures/reef.dtf"})
        docs.push_back(dsl::parse_document(read_text(root + f)));
    std::vector<sweep::RunRequest> runs;
    for (int copy = 0; copy < 100; ++copy)
        for (const auto& doc : docs)
            for (const auto& s : doc.scenarios)
                for (auto calib : {Calibration::lo, Calibration::mid, Calibration::hi})
                    runs.push_back({doc.find_device(*s.device_id), &s, {.calib = calib}});
    std::vector<sweep::RunResult> rs, rp;
    const double bs = median_ms(repeats, [&] { rs = sweep::simulate_batch_serial(runs, lib); });
    const double bp = median_ms(repeats, [&] { rp = sweep::simulate_batch(runs, lib); });
    bool same = rs.size() == rp.size();
    for (std::size_t i = 0; same && i < rs.size(); ++i) same = rs[i].report == rp[i].report && rs[i].error == rp[i].error;
    row("simulate_batch", bs, bp, same);
    return 0;
}
