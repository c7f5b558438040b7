// Acceptance run: one PASS/FAIL line per criterion, driven by the JSON files in
// configs/. Exits nonzero only on failures not listed as known.

#include "cantree/errors.hpp"
#include "cantree/experiments.hpp"
#include "cantree/metric.hpp"

#include "oracles/riemann_ball.hpp"

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#ifndef CANTREE_CONFIG_DIR
#define CANTREE_CONFIG_DIR "configs"
#endif

using namespace cantree;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void merge(bool ok, const std::string& text) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += text;
    }
};

// Failures that are understood and cannot be met as stated.
const std::map<std::string, std::string>& known_failures() {
    static const std::map<std::string, std::string> known{
        {"doubling_beta_log2", "beta = log K gives infinite measure; the truncated doubling ratio grows with depth"},
    };
    return known;
}

std::filesystem::path config_dir;
bool unexpected = false;

// Runs one config; a known failure is reported but not counted against the run.
void run_config(Outcome& out, const std::string& name) {
    std::string tag = name + ": ";
    try {
        auto config = ExperimentConfig::load(config_dir / (name + ".json"));
        auto result = run_experiment(config);
        std::string failed;
        for (const auto& c : result.checks) {
            if (!c.pass) failed += (failed.empty() ? "" : ", ") + c.name + " (" + c.detail + ")";
        }
        if (failed.empty()) {
            std::string first = result.checks.empty() ? "" : result.checks.front().detail;
            out.merge(true, tag + std::to_string(result.checks.size()) + " checks ok, " + first);
        } else {
            out.merge(false, tag + "failed " + failed);
            if (!known_failures().count(name)) unexpected = true;
        }
    } catch (const Error& e) {
        out.merge(false, tag + e.what());
        if (!known_failures().count(name)) unexpected = true;
    }
    if (known_failures().count(name) && !out.pass) out.detail += " [known: " + known_failures().at(name) + "]";
}

// Exact ball measure against the subdivision oracle at N = 8.
Outcome ball_oracle() {
    Outcome out;
    const unsigned k = 2, depth = 8;
    auto spec = TreeSpec::regular(k, depth);
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (auto w : {MetricWeights(std::log(2.0), std::log(3.0)), MetricWeights(std::log(3.0), std::log(3.0))}) {
        oracle::RiemannBall o{k, depth, w.epsilon, w.beta};
        std::uniform_int_distribution<unsigned> lev(0, depth), dig(0, k - 1);
        std::uniform_real_distribution<double> frac(0.0, 1.0), lr(std::log(1e-3), std::log(2.0 * w.diameter()));
        for (int s = 0; s < 100; ++s) {
            unsigned n = lev(rng);
            std::vector<Digit> addr(n);
            std::vector<int> digits(n);
            for (unsigned i = 0; i < n; ++i) digits[i] = addr[i] = static_cast<Digit>(dig(rng));
            TreePoint c{VertexId(addr), n == 0 ? 1.0 : 1.0 - frac(rng)};
            auto rep = ball_measure(spec, w, c, std::exp(lr(rng)));
            double ref = o.mass(digits, c.level(), rep.radius);
            worst = std::max(worst, std::abs(rep.measure - ref) / ref);
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "200 balls, max relative error %.3g", worst);
    out.merge(worst <= 1e-6, buf);
    return out;
}

struct Criterion {
    int id;
    std::string title;
    std::vector<std::string> configs;
    Outcome (*custom)() = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
    // Layouts of similar size are freed and rebuilt per depth; keep them off mmap.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    config_dir = argc > 1 ? argv[1] : CANTREE_CONFIG_DIR;

    const std::vector<Criterion> criteria{
        {1, "ultrametric visual distance", {"ultrametric_k2", "ultrametric_k3"}},
        {2, "Ahlfors regular boundary measure", {"ahlfors_k2"}},
        {3, "ball measure matches the subdivision oracle", {}, ball_oracle},
        {4, "doubling stability and dimension sharpness", {"doubling_beta_log2", "doubling_beta_2log2"}},
        {5, "Poincare constant stable in depth", {"poincare"}},
        {6, "trace of the extension is the identity", {"trace_round_trip_k2", "trace_round_trip_k3"}},
        {7, "norm ratios at the sharp exponent", {"trace_norms"}},
        {8, "power and recursive-gamma slopes", {"besov"}},
        {9, "log function energy dichotomy", {"trace_log"}},
        {10, "QS to RQI constants", {"maps_qs_to_rqi_exact", "maps_qs_to_rqi_loose", "maps_qs_to_rqi_contract"}},
        {11, "RQI to QS for the prefix-code map", {"maps_rqi_to_qs"}},
        {12, "round trip recovers the exponents", {"maps_round_trip"}},
        {13, "rigidity verdicts", {"rigidity"}},
        {14, "Besov pushforward", {"maps_pushforward"}},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        auto start = std::chrono::steady_clock::now();
        Outcome out;
        if (c.custom) out = c.custom();
        for (const auto& name : c.configs) run_config(out, name);
        if (c.custom && !out.pass) unexpected = true;
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !out.pass;
        std::printf("%s [%02d] %s (%.1f s): %s\n", out.pass ? "PASS" : "FAIL", c.id, c.title.c_str(), secs,
                    out.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria pass%s\n", static_cast<int>(criteria.size()) - failures, criteria.size(),
                unexpected ? "; unexpected failures present" : "; all failures are known");
    return unexpected ? 1 : 0;
}
