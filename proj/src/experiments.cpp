#include "cantree/experiments.hpp"

#include "cantree/boundary.hpp"
#include "cantree/boundary_maps.hpp"
#include "cantree/errors.hpp"
#include "cantree/function_spaces.hpp"
#include "cantree/metric.hpp"
#include "cantree/trace_extension.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace cantree {

using nlohmann::json;

namespace {

const double kLog2 = std::log(2.0);
const double kLog3 = std::log(3.0);

void require(bool ok, const std::string& message) {
    if (!ok) throw ParameterViolation(message);
}

std::vector<double> range_list(unsigned from, unsigned to) {
    std::vector<double> out;
    for (unsigned n = from; n <= to; ++n) out.push_back(n);
    return out;
}

enum class Kind { number, integer, text, numbers, texts, flag };

struct KeySpec {
    Kind kind;
    json fallback;  // null: no default
};

using Schema = std::map<std::string, KeySpec>;

const std::map<std::string, Schema>& schemas() {
    static const std::map<std::string, Schema> all = [] {
        std::map<std::string, Schema> s;
        Schema common{{"seed", {Kind::integer, nullptr}}, {"threads", {Kind::integer, 1}}};
        auto with_common = [&](Schema x) {
            x.insert(common.begin(), common.end());
            return x;
        };
        s["measure"] = with_common({
            {"branching", {Kind::integer, 2}},
            {"epsilon", {Kind::number, kLog2}},
            {"beta", {Kind::number, 2 * kLog2}},
            {"sections", {Kind::texts, json::array({"ultrametric", "ahlfors", "doubling", "dimension"})}},
            {"ultrametric_depths", {Kind::numbers, json::array({2, 4, 6, 8})}},
            {"ultrametric_sample_depth", {Kind::integer, 20}},
            {"ultrametric_samples", {Kind::integer, 100000}},
            {"depth", {Kind::integer, 12}},
            {"ahlfors_bands", {Kind::integer, 10}},
            {"ahlfors_radii_per_band", {Kind::integer, 8}},
            {"depths", {Kind::numbers, range_list(12, 18)}},
            {"doubling_samples", {Kind::integer, 200}},
            {"dimension_depths", {Kind::numbers, json::array({10, 12, 14})}},
            {"dimension_offset", {Kind::number, 0.3}},
            {"drift_tolerance", {Kind::number, 0.05}},
        });
        s["poincare"] = with_common({
            {"branching", {Kind::integer, 2}},
            {"epsilon", {Kind::number, kLog3}},
            {"beta", {Kind::number, kLog3}},
            {"depths", {Kind::numbers, range_list(10, 16)}},
            {"functions", {Kind::integer, 50}},
            {"balls", {Kind::integer, 50}},
            {"ball_max_level", {Kind::integer, 8}},
            {"min_radius", {Kind::number, 1e-3}},
            {"p", {Kind::number, 1.0}},
            {"drift_tolerance", {Kind::number, 0.10}},
        });
        s["besov"] = with_common({
            {"branching", {Kind::integer, 2}},
            {"epsilon", {Kind::number, kLog2}},
            {"beta", {Kind::number, 3 * kLog2}},
            {"depth", {Kind::integer, 14}},
            {"p", {Kind::number, 2.0}},
            {"alpha", {Kind::number, 0.3}},
            {"gamma", {Kind::number, 0.3 * kLog2}},
            {"fit_from", {Kind::integer, 1}},
            {"fit_to", {Kind::integer, 9}},
            {"probe_min_depth", {Kind::integer, 4}},
            {"theta_offsets", {Kind::numbers, json::array({-0.2, 0.0, 0.05, 0.1})}},
            {"slope_tolerance", {Kind::number, 0.05}},
        });
        s["trace"] = with_common({
            {"branching", {Kind::integer, 2}},
            {"epsilon", {Kind::number, kLog2}},
            {"beta", {Kind::number, 1.5 * kLog2}},
            {"p", {Kind::number, 2.0}},
            {"theta", {Kind::number, nullptr}},
            {"sections", {Kind::texts, json::array({"round_trip", "norms", "log_dichotomy"})}},
            {"round_trip_depth", {Kind::integer, 10}},
            {"random_functions", {Kind::integer, 100}},
            {"depths", {Kind::numbers, range_list(8, 14)}},
            {"functions", {Kind::integer, 30}},
            {"growth_tolerance", {Kind::number, 0.10}},
            {"log_beta", {Kind::number, 3 * kLog2}},
            {"log_p", {Kind::numbers, json::array({1.0, 3.0})}},
            {"log_depths", {Kind::numbers, json::array({10, 15, 20, 25, 30, 35, 40})}},
            {"tail_limit", {Kind::number, 1e-6}},
        });
        s["maps"] = with_common({
            {"sections", {Kind::texts, json::array({"qs_to_rqi", "rqi_to_qs", "round_trip", "pushforward"})}},
            {"snowflake_branching", {Kind::integer, 2}},
            {"domain_epsilon", {Kind::number, kLog2}},
            {"target_epsilon", {Kind::number, kLog3}},
            {"alpha1", {Kind::number, nullptr}},
            {"alpha2", {Kind::number, nullptr}},
            {"amplitude", {Kind::number, nullptr}},
            {"rqi_depth", {Kind::integer, 10}},
            {"amplitude_depth", {Kind::integer, 6}},
            {"depth", {Kind::integer, 12}},
            {"samples", {Kind::integer, 100000}},
            {"round_trip_depth", {Kind::integer, 12}},
            {"fit_tolerance", {Kind::number, 0.05}},
            {"push_domain_epsilon", {Kind::number, kLog3}},
            {"push_target_epsilon", {Kind::number, kLog2}},
            {"p", {Kind::number, 2.0}},
            {"u_resolution", {Kind::integer, 4}},
            {"depths", {Kind::numbers, range_list(8, 12)}},
            {"functions", {Kind::integer, 10}},
            {"drift_tolerance", {Kind::number, 0.15}},
        });
        s["rigidity"] = with_common({
            {"depth", {Kind::integer, 8}},
            {"geodesic_depth", {Kind::integer, 6}},
            {"ternary_depth", {Kind::integer, 6}},
            {"epsilon", {Kind::number, 1.0}},
        });
        return s;
    }();
    return all;
}

bool is_integral(const json& v) {
    if (v.is_number_unsigned()) return true;
    if (v.is_number_integer()) return v.get<std::int64_t>() >= 0;
    if (v.is_number_float()) {
        double d = v.get<double>();
        return d >= 0.0 && d == std::floor(d) && d < 9.007199254740992e15;
    }
    return false;
}

void check_type(const std::string& key, Kind kind, const json& v) {
    bool ok = false;
    switch (kind) {
        case Kind::number: ok = v.is_number(); break;
        case Kind::integer: ok = is_integral(v); break;
        case Kind::text: ok = v.is_string(); break;
        case Kind::flag: ok = v.is_boolean(); break;
        case Kind::numbers: ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); }); break;
        case Kind::texts: ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); }); break;
    }
    require(ok, "config key '" + key + "' has the wrong type");
    if (kind == Kind::number) require(std::isfinite(v.get<double>()), "config key '" + key + "' is not finite");
}

std::set<std::string> section_set(const ExperimentConfig& c) {
    auto v = c.texts("sections");
    return {v.begin(), v.end()};
}

std::vector<unsigned> depth_list(const ExperimentConfig& c, const std::string& key) {
    std::vector<unsigned> out;
    for (double d : c.numbers(key)) {
        require(d >= 0.0 && d == std::floor(d) && d <= 64.0, "config key '" + key + "' needs small nonnegative integers");
        out.push_back(static_cast<unsigned>(d));
    }
    require(!out.empty(), "config key '" + key + "' is empty");
    return out;
}

void require_seed(const ExperimentConfig& c) {
    require(c.has("seed"), "a seed is required for sampled experiments");
}

void require_count(const ExperimentConfig& c, const std::string& key) {
    require(c.integer(key) > 0, "config key '" + key + "' must be a positive count");
}

void require_sections(const ExperimentConfig& c, std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    auto s = c.texts("sections");
    require(!s.empty(), "no sections selected");
    for (const auto& x : s) require(ok.count(x) > 0, "unknown section '" + x + "'");
}

// Semantic validation: rebuilds the module objects so their own checks run.
void validate(const ExperimentConfig& c) {
    const std::string& e = c.experiment();
    require(c.integer("threads") >= 1, "threads must be at least 1");
    if (e == "measure") {
        require_sections(c, {"ultrametric", "ahlfors", "doubling", "dimension"});
        auto sec = section_set(c);
        unsigned k = static_cast<unsigned>(c.integer("branching"));
        require(k >= 2, "branching must be at least 2");
        MetricWeights w(c.number("epsilon"), c.number("beta"));
        if (sec.count("doubling") || sec.count("dimension")) w.require_finite_measure(k);
        if (sec.count("ultrametric")) {
            depth_list(c, "ultrametric_depths");
            if (c.integer("ultrametric_sample_depth") > 0) {
                require_count(c, "ultrametric_samples");
                require_seed(c);
            }
        }
        if (sec.count("ahlfors")) {
            require_count(c, "ahlfors_bands");
            require_count(c, "ahlfors_radii_per_band");
            require(c.integer("ahlfors_bands") <= c.integer("depth"), "ahlfors_bands exceeds depth");
        }
        if (sec.count("doubling")) {
            depth_list(c, "depths");
            require_count(c, "doubling_samples");
            require_seed(c);
        }
        if (sec.count("dimension")) {
            depth_list(c, "dimension_depths");
            require(c.number("dimension_offset") > 0.0, "dimension_offset must be positive");
        }
    } else if (e == "poincare") {
        unsigned k = static_cast<unsigned>(c.integer("branching"));
        require(k >= 2, "branching must be at least 2");
        MetricWeights w(c.number("epsilon"), c.number("beta"));
        w.require_finite_measure(k);
        auto d = depth_list(c, "depths");
        require(c.integer("ball_max_level") <= *std::min_element(d.begin(), d.end()),
                "ball_max_level must not exceed the smallest depth");
        require_count(c, "functions");
        require_count(c, "balls");
        require(c.number("p") >= 1.0, "p must be >= 1");
        require(c.number("min_radius") > 0.0, "min_radius must be positive");
        require_seed(c);
    } else if (e == "besov") {
        unsigned k = static_cast<unsigned>(c.integer("branching"));
        require(k >= 2, "branching must be at least 2");
        MetricWeights w(c.number("epsilon"), c.number("beta"));
        w.require_finite_measure(k);
        require(c.number("p") >= 1.0, "p must be >= 1");
        BoundarySpace space(TreeSpec::regular(k, static_cast<unsigned>(c.integer("depth"))), w.epsilon);
        power_function(space, 0, c.number("alpha"), c.number("p"));
        RecursiveGammaFunction(k, w, c.number("p"), c.number("gamma"));
        require(c.integer("fit_from") >= 1 && c.integer("fit_from") < c.integer("fit_to") &&
                    c.integer("fit_to") <= c.integer("depth"),
                "fit range must satisfy 1 <= fit_from < fit_to <= depth");
        require(c.integer("probe_min_depth") + 5 <= c.integer("depth"), "probe needs six depths");
    } else if (e == "trace") {
        require_sections(c, {"round_trip", "norms", "log_dichotomy"});
        auto sec = section_set(c);
        unsigned k = static_cast<unsigned>(c.integer("branching"));
        require(k >= 2, "branching must be at least 2");
        MetricWeights w(c.number("epsilon"), c.number("beta"));
        if (sec.count("norms")) {
            double p = c.number("p");
            require(p >= 1.0, "p must be >= 1");
            auto s = sharp_theta(k, w, p);
            require(s.status == ThetaAdmissibility::admissible, "no trace space: the sharp exponent is not positive");
            double theta = c.has("theta") ? c.number("theta") : s.theta;
            require(theta > 0.0 && theta < 1.0, "theta must lie in (0, 1)");
            depth_list(c, "depths");
            require_count(c, "functions");
            require_seed(c);
        }
        if (sec.count("round_trip")) require_seed(c);
        if (sec.count("log_dichotomy")) {
            MetricWeights lw(c.number("epsilon"), c.number("log_beta"));
            lw.require_finite_measure(k);
            for (double p : c.numbers("log_p")) require(p >= 1.0, "log_p entries must be >= 1");
            depth_list(c, "log_depths");
        }
    } else if (e == "maps") {
        require_sections(c, {"qs_to_rqi", "rqi_to_qs", "round_trip", "pushforward"});
        auto sec = section_set(c);
        RegularTarget(2, c.number("domain_epsilon"));
        RegularTarget(2, c.number("target_epsilon"));
        if (sec.count("qs_to_rqi")) {
            require(c.integer("snowflake_branching") >= 2, "snowflake_branching must be at least 2");
            int given = c.has("alpha1") + c.has("alpha2") + c.has("amplitude");
            require(given == 0 || given == 3, "give all of alpha1, alpha2, amplitude or none");
            if (given == 3) EtaProfile(c.number("alpha1"), c.number("alpha2"), c.number("amplitude"));
        }
        if (sec.count("rqi_to_qs")) {
            require(c.integer("amplitude_depth") >= 3, "amplitude_depth must be at least 3");
            require_count(c, "samples");
            require_seed(c);
        }
        if (sec.count("pushforward")) {
            RegularTarget(2, c.number("push_domain_epsilon"));
            RegularTarget(3, c.number("push_target_epsilon"));
            require(c.number("p") >= 1.0, "p must be >= 1");
            auto d = depth_list(c, "depths");
            require(c.integer("u_resolution") >= 1, "u_resolution must be at least 1");
            require(2 * c.integer("u_resolution") <= *std::min_element(d.begin(), d.end()) + 1,
                    "depths too shallow to resolve u");
            require_count(c, "functions");
            require_seed(c);
            double qx = kLog2 / c.number("push_domain_epsilon");
            double qy = kLog3 / c.number("push_target_epsilon");
            double p = c.number("p");
            require(qx / p < 1.0 && qy / p < 1.0, "Q/p must be below 1 on both sides");
        }
    } else if (e == "rigidity") {
        require(c.integer("depth") >= 1, "depth must be at least 1");
        require(c.integer("ternary_depth") >= 1, "ternary_depth must be at least 1");
        RegularTarget(3, c.number("epsilon"));
    }
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string fixed(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

double max_drift(const std::vector<double>& v) {
    double d = 0.0;
    for (double x : v) d = std::max(d, std::abs(x / v.front() - 1.0));
    return d;
}

// ---------------------------------------------------------------- measure

struct UltrametricScan {
    int mode = 0;  // 0 all triples, 1 first cell fixed (automorphism orbits), 2 sampled
    std::uint64_t triples = 0;
    std::uint64_t violations = 0;
};

UltrametricScan ultrametric_scan(const BoundarySpace& space, std::uint64_t samples, std::uint64_t seed) {
    UltrametricScan out;
    std::uint64_t n = space.cell_count();
    auto test = [&](CellIndex a, CellIndex b, CellIndex c) {
        ++out.triples;
        if (space.visual_distance(a, c) > std::max(space.visual_distance(a, b), space.visual_distance(b, c))) {
            ++out.violations;
        }
    };
    const double all_limit = 387420489.0;  // 3^18
    const double orbit_limit = 43046721.0;  // 3^16
    double nn = static_cast<double>(n);
    if (nn * nn * nn <= all_limit) {
        for (CellIndex a = 0; a < n; ++a) {
            for (CellIndex b = 0; b < n; ++b) {
                for (CellIndex c = 0; c < n; ++c) {
                    if (a != b && b != c && a != c) test(a, b, c);
                }
            }
        }
    } else if (nn * nn <= orbit_limit) {
        out.mode = 1;
        for (CellIndex b = 1; b < n; ++b) {
            for (CellIndex c = 1; c < n; ++c) {
                if (b != c) test(0, b, c);
            }
        }
    } else {
        out.mode = 2;
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<CellIndex> pick(0, n - 1);
        for (std::uint64_t i = 0; i < samples; ++i) {
            CellIndex a = pick(rng), b = pick(rng), c = pick(rng);
            if (a != b && b != c && a != c) test(a, b, c);
        }
    }
    return out;
}

TreePoint random_point(std::mt19937_64& rng, unsigned branching, unsigned max_level) {
    std::uniform_int_distribution<unsigned> lev(0, max_level), dig(0, branching - 1);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    unsigned n = lev(rng);
    std::vector<Digit> addr(n);
    for (auto& d : addr) d = static_cast<Digit>(dig(rng));
    if (n == 0) return TreePoint::root();
    // Fraction in (0, 1]: 1 is the vertex itself.
    return TreePoint{VertexId(addr), 1.0 - frac(rng)};
}

RunResult run_measure(const ExperimentConfig& c) {
    RunResult res;
    auto sec = section_set(c);
    unsigned k = static_cast<unsigned>(c.integer("branching"));
    double eps = c.number("epsilon"), beta = c.number("beta");
    unsigned threads = c.threads();

    if (sec.count("ultrametric")) {
        Table t{"ultrametric", {"depth", "mode", "triples", "violations"}, {}};
        std::uint64_t bad = 0;
        auto depths = depth_list(c, "ultrametric_depths");
        if (c.integer("ultrametric_sample_depth") > 0) depths.push_back(static_cast<unsigned>(c.integer("ultrametric_sample_depth")));
        std::vector<UltrametricScan> scans(depths.size());
        std::uint64_t samples = c.integer("ultrametric_samples");
        std::uint64_t seed = c.has("seed") ? c.integer("seed") : 0;
        parallel_for(depths.size(), threads, [&](std::size_t i) {
            BoundarySpace space(TreeSpec::regular(k, depths[i]), eps);
            scans[i] = ultrametric_scan(space, samples, mix(seed, i));
        });
        for (std::size_t i = 0; i < depths.size(); ++i) {
            static const char* modes[] = {"all", "orbit", "sampled"};
            t.add({static_cast<std::int64_t>(depths[i]), std::string(modes[scans[i].mode]),
                   static_cast<std::int64_t>(scans[i].triples), static_cast<std::int64_t>(scans[i].violations)});
            bad += scans[i].violations;
        }
        res.tables.push_back(std::move(t));
        res.checks.push_back({"ultrametric", bad == 0, std::to_string(bad) + " violating triples"});
    }

    if (sec.count("ahlfors")) {
        unsigned depth = static_cast<unsigned>(c.integer("depth"));
        BoundarySpace space(TreeSpec::regular(k, depth), eps);
        unsigned bands = static_cast<unsigned>(c.integer("ahlfors_bands"));
        unsigned per = static_cast<unsigned>(c.integer("ahlfors_radii_per_band"));
        std::vector<AhlforsReport> reps(bands);
        parallel_for(bands, threads, [&](std::size_t b) {
            int level = static_cast<int>(b) + 1;
            double lo = space.level_scale(level), hi = space.level_scale(level - 1);
            std::vector<AhlforsSample> samples;
            for (CellIndex cell = 0; cell < space.cell_count(); ++cell) {
                for (unsigned i = 1; i <= per; ++i) samples.push_back({cell, lo + (hi - lo) * i / per});
            }
            reps[b] = space.ahlfors_regularity_report(samples);
        });
        Table t{"ahlfors", {"band", "min_ratio", "max_ratio", "samples"}, {}};
        double lo = reps[0].min_ratio, hi = reps[0].max_ratio;
        for (unsigned b = 0; b < bands; ++b) {
            t.add({static_cast<std::int64_t>(b + 1), reps[b].min_ratio, reps[b].max_ratio,
                   static_cast<std::int64_t>(reps[b].sample_count)});
            lo = std::min(lo, reps[b].min_ratio);
            hi = std::max(hi, reps[b].max_ratio);
        }
        res.tables.push_back(std::move(t));
        double spread = hi / lo;
        res.checks.push_back({"ahlfors_spread", spread <= k * (1.0 + 1e-9),
                              "max/min = " + format_number(spread) + " (bound " + std::to_string(k) + ")"});
    }

    if (sec.count("doubling")) {
        MetricWeights w(eps, beta);
        auto depths = depth_list(c, "depths");
        unsigned shallow = *std::min_element(depths.begin(), depths.end());
        std::mt19937_64 rng(c.integer("seed"));
        std::size_t n = c.integer("doubling_samples");
        std::vector<std::pair<TreePoint, double>> balls;
        std::uniform_real_distribution<double> lr(std::log(w.diameter()) - eps * shallow, std::log(2.0 * w.diameter()));
        for (std::size_t i = 0; i < n; ++i) {
            TreePoint p = random_point(rng, k, shallow);
            balls.push_back({p, std::exp(lr(rng))});
        }
        Table t{"doubling", {"depth", "sup_ratio", "worst_sample"}, {}};
        std::vector<double> sup;
        for (unsigned depth : depths) {
            auto spec = TreeSpec::regular(k, depth);
            std::vector<double> q(n);
            parallel_for(n, threads, [&](std::size_t i) { q[i] = doubling_ratio(spec, w, balls[i].first, balls[i].second); });
            auto it = std::max_element(q.begin(), q.end());
            sup.push_back(*it);
            t.add({static_cast<std::int64_t>(depth), *it, static_cast<std::int64_t>(it - q.begin())});
        }
        res.tables.push_back(std::move(t));
        double drift = max_drift(sup);
        res.checks.push_back({"doubling_drift", drift <= c.number("drift_tolerance"),
                              "relative drift " + format_number(drift)});
    }

    if (sec.count("dimension")) {
        MetricWeights w(eps, beta);
        double s = w.dimension_exponent();
        double alt = s - c.number("dimension_offset");
        Table t{"dimension", {"depth", "exponent", "statistic", "alt_exponent", "alt_statistic", "samples"}, {}};
        std::vector<double> stat, alt_stat;
        for (unsigned depth : depth_list(c, "dimension_depths")) {
            auto spec = TreeSpec::regular(k, depth);
            auto rep = dimension_condition_check(spec, w, nested_ball_grid(spec, w), alt);
            stat.push_back(rep.statistic);
            alt_stat.push_back(rep.alt_statistic);
            t.add({static_cast<std::int64_t>(depth), rep.exponent, rep.statistic, alt, rep.alt_statistic,
                   static_cast<std::int64_t>(rep.sample_count)});
        }
        res.tables.push_back(std::move(t));
        double lowest = *std::min_element(stat.begin(), stat.end());
        res.checks.push_back({"dimension_bounded_below", lowest > 0.0 && lowest >= 0.5 * stat.front(),
                              "min statistic " + format_number(lowest)});
        bool decreasing = true;
        for (std::size_t i = 1; i < alt_stat.size(); ++i) decreasing = decreasing && alt_stat[i] < alt_stat[i - 1];
        res.checks.push_back({"dimension_below_exponent_decays", decreasing, "alt statistic strictly decreasing"});
    }
    return res;
}

// ---------------------------------------------------------------- poincare

RunResult run_poincare(const ExperimentConfig& c) {
    RunResult res;
    unsigned k = static_cast<unsigned>(c.integer("branching"));
    MetricWeights w(c.number("epsilon"), c.number("beta"));
    double p = c.number("p");
    std::uint64_t seed = c.integer("seed");
    std::size_t nf = c.integer("functions"), nb = c.integer("balls");
    unsigned max_level = static_cast<unsigned>(c.integer("ball_max_level"));

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> lr(std::log(c.number("min_radius")), std::log(w.diameter()));
    std::vector<Ball> balls;
    for (std::size_t i = 0; i < nb; ++i) {
        TreePoint centre = random_point(rng, k, max_level);
        balls.push_back({centre, std::exp(lr(rng))});
    }

    Table t{"poincare", {"depth", "max_constant", "worst_ball", "worst_function", "upper_gradient_signals", "degenerate"}, {}};
    std::vector<double> maxima;
    std::uint64_t signals = 0;
    for (unsigned depth : depth_list(c, "depths")) {
        auto lay = std::make_shared<const TreeLayout>(TreeSpec::regular(k, depth));
        std::vector<TreeFunction> us;
        std::vector<EdgeGradient> gs;
        for (std::size_t i = 0; i < nf; ++i) {
            us.push_back(random_tree_function(lay, mix(seed, i)));
            gs.push_back(minimal_upper_gradient(us.back(), w));
        }
        std::vector<double> best(nb, 0.0);
        std::vector<std::size_t> arg(nb, 0);
        std::vector<std::uint64_t> sig(nb, 0), degen(nb, 0);
        parallel_for(nb, c.threads(), [&](std::size_t b) {
            BallQuadrature q(*lay, w, balls[b]);
            for (std::size_t i = 0; i < nf; ++i) {
                try {
                    auto r = q.poincare(us[i], gs[i], p);
                    if (r.degenerate) ++degen[b];
                    if (r.constant > best[b]) {
                        best[b] = r.constant;
                        arg[b] = i;
                    }
                } catch (const NotAnUpperGradient&) {
                    ++sig[b];
                }
            }
        });
        std::size_t wb = std::max_element(best.begin(), best.end()) - best.begin();
        std::uint64_t s = 0, d = 0;
        for (std::size_t b = 0; b < nb; ++b) {
            s += sig[b];
            d += degen[b];
        }
        signals += s;
        maxima.push_back(best[wb]);
        t.add({static_cast<std::int64_t>(depth), best[wb], static_cast<std::int64_t>(wb), static_cast<std::int64_t>(arg[wb]),
               static_cast<std::int64_t>(s), static_cast<std::int64_t>(d)});
    }
    res.tables.push_back(std::move(t));
    double drift = max_drift(maxima);
    res.checks.push_back({"poincare_drift", drift <= c.number("drift_tolerance"), "relative drift " + format_number(drift)});
    res.checks.push_back({"upper_gradient_signals", signals == 0, std::to_string(signals) + " signals"});
    return res;
}

// ---------------------------------------------------------------- besov

RunResult run_besov(const ExperimentConfig& c) {
    RunResult res;
    unsigned k = static_cast<unsigned>(c.integer("branching"));
    MetricWeights w(c.number("epsilon"), c.number("beta"));
    unsigned depth = static_cast<unsigned>(c.integer("depth"));
    double p = c.number("p"), alpha = c.number("alpha"), gamma = c.number("gamma");
    unsigned from = static_cast<unsigned>(c.integer("fit_from")), to = static_cast<unsigned>(c.integer("fit_to"));
    double tol = c.number("slope_tolerance");

    BoundarySpace space(TreeSpec::regular(k, depth), w.epsilon);
    Table slopes{"slopes", {"function", "depth", "slope", "expected", "residual"}, {}};
    auto pf = ep_slope(power_function(space, 0, alpha, p), w.epsilon, p, from, to);
    double pexp = (space.hausdorff_dimension() + alpha * p) / p;
    slopes.add({std::string("power"), static_cast<std::int64_t>(depth), pf.slope, pexp, pf.residual});
    RecursiveGammaFunction rg(k, w, p, gamma);
    auto gf = ep_slope(rg.trace(depth), w.epsilon, p, from, to);
    double gexp = (w.epsilon - gamma) / w.epsilon;
    slopes.add({std::string("recursive_gamma"), static_cast<std::int64_t>(depth), gf.slope, gexp, gf.residual});
    res.tables.push_back(std::move(slopes));
    res.checks.push_back({"power_slope", std::abs(pf.slope / pexp - 1.0) <= tol,
                          "slope " + fixed(pf.slope) + " vs " + fixed(pexp)});
    res.checks.push_back({"gamma_slope", std::abs(gf.slope / gexp - 1.0) <= tol,
                          "slope " + fixed(gf.slope) + " vs " + fixed(gexp)});

    double threshold = 1.0 - gamma / w.epsilon;
    Table probes{"gamma_probe", {"theta", "threshold", "decay", "verdict"}, {}};
    Table inc{"gamma_increments", {"theta", "depth", "partial_sum", "increment"}, {}};
    bool diverges = true;
    std::string detail;
    unsigned min_depth = static_cast<unsigned>(c.integer("probe_min_depth"));
    for (double off : c.numbers("theta_offsets")) {
        double theta = threshold + off;
        if (!(theta > 0.0)) continue;
        auto probe = sharpness_probe_trace2(k, w, p, theta, gamma, min_depth, depth);
        probes.add({theta, threshold, probe.decay, to_string(probe.verdict)});
        for (const auto& row : probe.rows) {
            inc.add({theta, static_cast<std::int64_t>(row.depth), row.partial_sum, row.increment});
        }
        if (probe.divergent_regime && probe.verdict != SeriesVerdict::divergent) {
            diverges = false;
            detail += " theta=" + fixed(theta) + " decays (" + fixed(probe.decay) + ")";
        }
    }
    res.tables.push_back(std::move(probes));
    res.tables.push_back(std::move(inc));
    res.checks.push_back({"increments_non_decaying", diverges,
                          diverges ? "every theta >= " + fixed(threshold) + " diverges" : detail});
    return res;
}

// ---------------------------------------------------------------- trace

RunResult run_trace(const ExperimentConfig& c) {
    RunResult res;
    auto sec = section_set(c);
    unsigned k = static_cast<unsigned>(c.integer("branching"));
    double eps = c.number("epsilon");
    std::uint64_t seed = c.has("seed") ? c.integer("seed") : 0;

    if (sec.count("round_trip")) {
        unsigned top = static_cast<unsigned>(c.integer("round_trip_depth"));
        std::size_t nrand = c.integer("random_functions");
        Table t{"round_trip", {"resolution", "depth", "functions", "mismatches"}, {}};
        std::uint64_t bad = 0;
        for (unsigned depth = 0; depth <= top; ++depth) {
            auto lay = std::make_shared<const TreeLayout>(TreeSpec::regular(k, depth));
            for (unsigned m = 0; m <= depth; ++m) {
                std::size_t cells = lay->level_end(m) - lay->level_begin(m);
                std::vector<std::uint64_t> miss(cells + nrand, 0);
                parallel_for(cells + nrand, c.threads(), [&](std::size_t i) {
                    BoundaryFunction f = i < cells ? [&] {
                        std::vector<double> v(cells, 0.0);
                        v[i] = 1.0;
                        return BoundaryFunction(k, m, std::move(v));
                    }()
                                                   : random_boundary_function(k, m, mix(seed, i - cells));
                    BoundaryFunction back = trace(extend_values(f, lay));
                    for (CellIndex x = 0; x < back.size(); ++x) {
                        if (back[x] != f.at(x, depth)) {
                            miss[i] = 1;
                            break;
                        }
                    }
                });
                std::uint64_t m_bad = 0;
                for (auto v : miss) m_bad += v;
                bad += m_bad;
                t.add({static_cast<std::int64_t>(m), static_cast<std::int64_t>(depth),
                       static_cast<std::int64_t>(cells + nrand), static_cast<std::int64_t>(m_bad)});
            }
        }
        res.tables.push_back(std::move(t));
        res.checks.push_back({"round_trip_exact", bad == 0, std::to_string(bad) + " functions changed"});
    }

    if (sec.count("norms")) {
        MetricWeights w(eps, c.number("beta"));
        double p = c.number("p");
        double theta = c.has("theta") ? c.number("theta") : sharp_theta(k, w, p).theta;
        std::size_t nf = c.integer("functions");
        Table t{"norm_ratios", {"depth", "theta", "extension_max", "trace_max"}, {}};
        std::vector<double> ext, tr;
        for (unsigned depth : depth_list(c, "depths")) {
            auto lay = std::make_shared<const TreeLayout>(TreeSpec::regular(k, depth));
            std::vector<double> e(nf, 0.0), r(nf, 0.0);
            parallel_for(nf, c.threads(), [&](std::size_t i) {
                auto f = random_boundary_function(k, depth, mix(seed, i));
                e[i] = extension_norm_ratio(f, w, p, theta, depth).ratio;
                auto u = random_tree_function(lay, mix(seed, i));
                r[i] = trace_norm_ratio(u, w, p, theta).ratio;
            });
            ext.push_back(*std::max_element(e.begin(), e.end()));
            tr.push_back(*std::max_element(r.begin(), r.end()));
            t.add({static_cast<std::int64_t>(depth), theta, ext.back(), tr.back()});
        }
        res.tables.push_back(std::move(t));
        double g = 1.0 + c.number("growth_tolerance");
        auto settled = [&](const std::vector<double>& v) {
            bool ok = v.back() <= g * v.front();
            for (std::size_t i = 1; i < v.size(); ++i) ok = ok && v[i] <= g * v[i - 1];
            return ok;
        };
        res.checks.push_back({"extension_ratio_settles", settled(ext),
                              "first " + fixed(ext.front()) + ", last " + fixed(ext.back())});
        res.checks.push_back({"trace_ratio_settles", settled(tr),
                              "first " + fixed(tr.front()) + ", last " + fixed(tr.back())});
    }

    if (sec.count("log_dichotomy")) {
        MetricWeights w(eps, c.number("log_beta"));
        LogFunction f(k, w);
        double crit = f.critical_exponent();
        auto depths = depth_list(c, "log_depths");
        Table t{"log_function", {"p", "critical", "depth", "partial_sum", "tail_bound", "trace_value"}, {}};
        for (double p : c.numbers("log_p")) {
            std::vector<double> sums, values;
            for (unsigned n : depths) {
                double s = f.energy_partial_sum(n, p);
                double tail = f.energy_tail_bound(n, p);
                sums.push_back(s);
                values.push_back(f.value(n));
                t.add({p, crit, static_cast<std::int64_t>(n), s, tail, f.value(n)});
            }
            if (p < crit) {
                double tail = f.energy_tail_bound(depths.back(), p);
                bool grows = true;
                for (std::size_t i = 1; i < values.size(); ++i) grows = grows && values[i] > values[i - 1];
                res.checks.push_back({"log_energy_converges_p" + fixed(p), tail < c.number("tail_limit"),
                                      "tail " + format_number(tail)});
                res.checks.push_back({"log_trace_grows_p" + fixed(p), grows, "trace values strictly increase"});
            } else if (p > crit) {
                bool grows = true;
                for (std::size_t i = 1; i < sums.size(); ++i) grows = grows && sums[i] > sums[i - 1];
                for (std::size_t i = 2; i < sums.size(); ++i) {
                    grows = grows && sums[i] - sums[i - 1] >= sums[i - 1] - sums[i - 2];
                }
                res.checks.push_back({"log_energy_diverges_p" + fixed(p), grows,
                                      "partial sums " + fixed(sums.front()) + " .. " + fixed(sums.back())});
            }
        }
        res.tables.push_back(std::move(t));
    }
    return res;
}

// ---------------------------------------------------------------- maps

RqiReport full_rqi(const VertexMap& F) {
    RqiOptions opt;
    opt.exhaustive_depth = F.domain().depth();
    return rqi_check(F, opt);
}

std::string qs_detail(const QsReport& q) {
    return "statistic " + format_number(q.statistic) + " over " + std::to_string(q.triples) + " triples";
}

RunResult run_maps(const ExperimentConfig& c) {
    RunResult res;
    auto sec = section_set(c);
    double ex = c.number("domain_epsilon"), ey = c.number("target_epsilon");
    std::uint64_t seed = c.has("seed") ? c.integer("seed") : 0;

    if (sec.count("qs_to_rqi")) {
        unsigned depth = static_cast<unsigned>(c.integer("rqi_depth"));
        unsigned k = static_cast<unsigned>(c.integer("snowflake_branching"));
        auto f = snowflake_map(k, depth, ex, ey);
        if (c.has("alpha1")) {
            EtaProfile eta(c.number("alpha1"), c.number("alpha2"), c.number("amplitude"));
            auto q = qs_check(f, eta);
            res.checks.push_back({"snowflake_profile_valid", q.pass(), qs_detail(q)});
            f.set_profile(eta);
        }
        auto F = extend_qs_to_tree(f);
        auto r = full_rqi(F);
        std::uint64_t n = F.domain().size();
        Table t{"qs_to_rqi",
                {"depth", "alpha1", "alpha2", "amplitude", "theory_l1", "theory_l2", "theory_offset", "pairs",
                 "violations", "fitted_l1", "fitted_l2", "fitted_offset", "density_radius"},
                {}};
        const EtaProfile& eta = *f.profile();
        t.add({static_cast<std::int64_t>(depth), eta.alpha1, eta.alpha2, eta.amplitude, *r.theory_l1, *r.theory_l2,
               *r.theory_offset, static_cast<std::int64_t>(r.pairs), static_cast<std::int64_t>(r.theory_violations), r.l1,
               r.l2, r.offset, r.density_radius});
        res.tables.push_back(std::move(t));
        bool all_pairs = r.pairs == n * (n - 1) / 2;
        res.checks.push_back({"rqi_theory_envelope", all_pairs && r.theory_violations == 0,
                              std::to_string(r.theory_violations) + " violations over " + std::to_string(r.pairs) +
                                  " pairs"});
    }

    if (sec.count("rqi_to_qs")) {
        double a1 = ey / (2.0 * ex), a2 = ey / ex;
        unsigned d0 = static_cast<unsigned>(c.integer("amplitude_depth"));
        unsigned depth = static_cast<unsigned>(c.integer("depth"));
        auto induced = [&](unsigned n, RqiReport* out) {
            auto g = example_binary_ternary(n, 1, ex, ey).g;
            auto r = full_rqi(g);
            if (out) *out = r;
            return boundary_map_from_rqi(g, ex, r);
        };
        auto f0 = induced(d0, nullptr);
        double amp = fit_amplitude(distortion_buckets(f0), a1, a2);
        EtaProfile eta(a1, a2, amp);
        RqiReport r;
        auto f = induced(depth, &r);
        QsOptions sampled;
        sampled.force_sampling = true;
        sampled.samples = c.integer("samples");
        sampled.seed = seed;
        Table t{"rqi_to_qs", {"depth", "mode", "alpha1", "alpha2", "amplitude", "statistic", "triples", "skipped"}, {}};
        auto q0 = qs_check(f0, eta);
        auto q1 = qs_check(f, eta);
        auto q2 = qs_check(f, eta, sampled);
        for (auto [n, q] : {std::pair{d0, &q0}, std::pair{depth, &q1}, std::pair{depth, &q2}}) {
            t.add({static_cast<std::int64_t>(n), std::string(q->exhaustive ? "exhaustive" : "sampled"), a1, a2, amp,
                   q->statistic, static_cast<std::int64_t>(q->triples), static_cast<std::int64_t>(q->skipped)});
        }
        res.tables.push_back(std::move(t));
        res.checks.push_back({"qs_exhaustive_amplitude_depth", q0.pass(), qs_detail(q0)});
        res.checks.push_back({"qs_exhaustive_depth", q1.pass(), qs_detail(q1)});
        res.checks.push_back({"qs_sampled_depth", q2.pass(), qs_detail(q2)});

        Table env{"envelope", {"distance", "min_image", "max_image", "lower_bound", "upper_bound"}, {}};
        for (std::size_t d = 1; d < r.min_image.size(); ++d) {
            if (r.max_image[d] < 0) continue;
            env.add({static_cast<std::int64_t>(d), static_cast<std::int64_t>(r.min_image[d]),
                     static_cast<std::int64_t>(r.max_image[d]), 0.5 * d - 2.0, static_cast<double>(d)});
        }
        res.tables.push_back(std::move(env));
        auto e = check_envelope(r, 0.5, 1.0, 2.0, 0.0);
        res.checks.push_back({"g_envelope", e.violations == 0, std::to_string(e.violations) + " distances outside"});
    }

    if (sec.count("round_trip")) {
        unsigned depth = static_cast<unsigned>(c.integer("round_trip_depth"));
        double tol = c.number("fit_tolerance");
        Table t{"round_trip", {"case", "depth", "in_alpha1", "in_alpha2", "out_alpha1", "out_alpha2", "out_amplitude"}, {}};
        auto trip = [&](const std::string& name, const BoundaryMap& f, const EtaProfile& in) {
            auto F = extend_qs_to_tree(f);
            auto back = boundary_map_from_rqi(F, ex, full_rqi(F));
            auto out = fit_eta(back);
            t.add({name, static_cast<std::int64_t>(depth), in.alpha1, in.alpha2, out.alpha1, out.alpha2, out.amplitude});
            double err = std::max(std::abs(out.alpha1 / in.alpha1 - 1.0), std::abs(out.alpha2 / in.alpha2 - 1.0));
            res.checks.push_back({"round_trip_" + name, err <= tol, "relative error " + format_number(err)});
            return out;
        };
        auto snow = snowflake_map(2, depth, ex, ey);
        trip("snowflake", snow, *snow.profile());
        auto g = example_boundary_map(depth, ex, ey);
        auto g_in = fit_eta(g);
        trip("prefix_code", g, g_in);
        EtaProfile theory(ey / (2.0 * ex), ey / ex, 1.0);
        t.add({std::string("prefix_code_theory"), static_cast<std::int64_t>(depth), theory.alpha1, theory.alpha2,
               g_in.alpha1, g_in.alpha2, g_in.amplitude});
        double err = std::max(std::abs(g_in.alpha1 / theory.alpha1 - 1.0), std::abs(g_in.alpha2 / theory.alpha2 - 1.0));
        res.checks.push_back({"prefix_code_exponents_sharp", err <= tol, "relative error " + format_number(err)});
        res.tables.push_back(std::move(t));
    }

    if (sec.count("pushforward")) {
        double px = c.number("push_domain_epsilon"), py = c.number("push_target_epsilon");
        double p = c.number("p");
        double qx = kLog2 / px, qy = kLog3 / py;
        unsigned mu = static_cast<unsigned>(c.integer("u_resolution"));
        std::size_t nf = c.integer("functions");
        Table t{"pushforward", {"depth", "theta_x", "theta_y", "max_ratio", "mismatches", "unresolved"}, {}};
        std::vector<double> ratios;
        std::size_t bad = 0, unres = 0;
        for (unsigned depth : depth_list(c, "depths")) {
            auto f = example_boundary_map(depth, px, py);
            f.set_profile(fit_eta(f));
            std::vector<double> r(nf);
            std::vector<std::size_t> m(nf), un(nf);
            parallel_for(nf, c.threads(), [&](std::size_t i) {
                auto u = random_boundary_function(3, mu, mix(seed, i));
                auto rep = besov_pushforward(u, f, p, qx / p, qy / p);
                r[i] = rep.ratio;
                m[i] = rep.mismatches;
                un[i] = rep.unresolved;
            });
            std::size_t mm = 0, uu = 0;
            for (std::size_t i = 0; i < nf; ++i) {
                mm += m[i];
                uu += un[i];
            }
            bad += mm;
            unres += uu;
            ratios.push_back(*std::max_element(r.begin(), r.end()));
            t.add({static_cast<std::int64_t>(depth), qx / p, qy / p, ratios.back(), static_cast<std::int64_t>(mm),
                   static_cast<std::int64_t>(uu)});
        }
        res.tables.push_back(std::move(t));
        double drift = max_drift(ratios);
        res.checks.push_back({"pushforward_drift", drift <= c.number("drift_tolerance"), "relative drift " + format_number(drift)});
        res.checks.push_back({"pushforward_cellwise", bad == 0 && unres == 0,
                              std::to_string(bad) + " mismatched, " + std::to_string(unres) + " unresolved cells"});
    }
    return res;
}

// ---------------------------------------------------------------- rigidity

RunResult run_rigidity(const ExperimentConfig& c) {
    RunResult res;
    unsigned depth = static_cast<unsigned>(c.integer("depth"));
    double eps = c.number("epsilon");
    RigidityOptions opt;
    opt.geodesic_depth = static_cast<unsigned>(c.integer("geodesic_depth"));
    opt.isometry_depth = depth;
    Table t{"rigidity", {"case", "verdict", "pairs_checked", "witness", "detail"}, {}};
    auto witness_text = [](const VertexMap& F, const RigidityReport& rep) {
        std::string s;
        for (std::size_t id : rep.witness) {
            if (!s.empty()) s += ' ';
            VertexId x = F.domain().address(id);
            s += x.is_root() ? std::string("root") : format_address(x, F.domain().spec().max_branching());
        }
        return s;
    };
    auto run = [&](const std::string& name, const VertexMap& F) {
        auto rep = rigidity_check(F, opt);
        t.add({name, to_string(rep.verdict), static_cast<std::int64_t>(rep.pairs_checked), witness_text(F, rep),
               rep.detail});
        return rep;
    };
    auto id = run("identity", extend_qs_to_tree(snowflake_map(3, depth, eps, eps)));
    auto rr = run("rerooted", example_rerooted_isometry(depth, eps));
    auto ex = example_binary_ternary(depth, static_cast<unsigned>(c.integer("ternary_depth")), kLog2, kLog3);
    auto h = run("ternary_encoding", ex.h);
    auto g = run("prefix_code", ex.g);
    res.tables.push_back(std::move(t));
    res.checks.push_back({"identity_isometry", id.verdict == RigidityVerdict::isometry, to_string(id.verdict)});
    res.checks.push_back({"rerooted_isometry", rr.verdict == RigidityVerdict::isometry, to_string(rr.verdict)});
    res.checks.push_back({"ternary_encoding_rejected",
                          h.verdict == RigidityVerdict::not_geodesic && h.witness.size() == 3,
                          to_string(h.verdict) + " [" + witness_text(ex.h, h) + "]"});
    res.checks.push_back({"prefix_code_rejected", g.verdict == RigidityVerdict::not_injective,
                          to_string(g.verdict) + " [" + witness_text(ex.g, g) + "]"});
    return res;
}

// Minimal CSV reader for files written by write_run.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaMismatch("cannot read " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::string cell;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            char ch = line[i];
            if (quoted) {
                if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else if (ch == '"') {
                    quoted = false;
                } else {
                    cell += ch;
                }
            } else if (ch == '"') {
                quoted = true;
            } else if (ch == ',') {
                row.push_back(cell);
                cell.clear();
            } else {
                cell += ch;
            }
        }
        row.push_back(cell);
        rows.push_back(std::move(row));
    }
    return rows;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

}  // namespace

void Table::add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw PreconditionViolation("row width differs from the table header");
    rows.push_back(std::move(row));
}

bool RunResult::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Table& RunResult::table(std::string_view name) const {
    for (const auto& t : tables) {
        if (t.name == name) return t;
    }
    throw PreconditionViolation("no table named " + std::string(name));
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string format_cell(const Cell& c) {
    if (const double* d = std::get_if<double>(&c)) return format_number(*d);
    if (const std::int64_t* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    return std::get<std::string>(c);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw ParameterViolation("config must be a JSON object");
    ExperimentConfig c;
    auto it = j.find("experiment");
    if (it == j.end() || !it->is_string()) throw ParameterViolation("config needs an \"experiment\" name");
    c.experiment_ = it->get<std::string>();
    if (!schemas().count(c.experiment_)) throw ParameterViolation("unknown experiment '" + c.experiment_ + "'");
    c.values_ = j;
    c.values_.erase("experiment");
    c.finish();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParameterViolation("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParameterViolation("config is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j);
}

void ExperimentConfig::finish() {
    const Schema& schema = schemas().at(experiment_);
    for (auto& [key, value] : values_.items()) {
        auto s = schema.find(key);
        if (s == schema.end()) throw ParameterViolation("unknown config key '" + key + "' for " + experiment_);
        check_type(key, s->second.kind, value);
    }
    for (const auto& [key, spec] : schema) {
        if (!values_.contains(key) && !spec.fallback.is_null()) values_[key] = spec.fallback;
    }
    validate(*this);
    json canonical = values_;
    canonical["experiment"] = experiment_;
    hash_ = fnv1a(canonical.dump());
}

std::string ExperimentConfig::hash_hex() const {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
}

void ExperimentConfig::set(const std::string& key, json value) {
    values_[key] = std::move(value);
    finish();
}

double ExperimentConfig::number(const std::string& key) const {
    if (!values_.contains(key)) throw ParameterViolation("missing config key '" + key + "'");
    return values_.at(key).get<double>();
}

std::uint64_t ExperimentConfig::integer(const std::string& key) const {
    if (!values_.contains(key)) throw ParameterViolation("missing config key '" + key + "'");
    const json& v = values_.at(key);
    if (v.is_number_float()) return static_cast<std::uint64_t>(v.get<double>());
    return v.get<std::uint64_t>();
}

std::string ExperimentConfig::text(const std::string& key) const {
    if (!values_.contains(key)) throw ParameterViolation("missing config key '" + key + "'");
    return values_.at(key).get<std::string>();
}

std::vector<double> ExperimentConfig::numbers(const std::string& key) const {
    if (!values_.contains(key)) throw ParameterViolation("missing config key '" + key + "'");
    return values_.at(key).get<std::vector<double>>();
}

std::vector<std::string> ExperimentConfig::texts(const std::string& key) const {
    if (!values_.contains(key)) throw ParameterViolation("missing config key '" + key + "'");
    return values_.at(key).get<std::vector<std::string>>();
}

bool ExperimentConfig::flag(const std::string& key) const {
    if (!values_.contains(key)) throw ParameterViolation("missing config key '" + key + "'");
    return values_.at(key).get<bool>();
}

json default_config(const std::string& experiment) {
    auto it = schemas().find(experiment);
    if (it == schemas().end()) throw ParameterViolation("unknown experiment '" + experiment + "'");
    json j = json::object();
    j["experiment"] = experiment;
    for (const auto& [key, spec] : it->second) {
        if (!spec.fallback.is_null()) j[key] = spec.fallback;
    }
    return j;
}

RunResult run_experiment(const ExperimentConfig& config) {
    RunResult res;
    const std::string& e = config.experiment();
    if (e == "measure") res = run_measure(config);
    else if (e == "poincare") res = run_poincare(config);
    else if (e == "besov") res = run_besov(config);
    else if (e == "trace") res = run_trace(config);
    else if (e == "maps") res = run_maps(config);
    else if (e == "rigidity") res = run_rigidity(config);
    else throw ParameterViolation("unknown experiment '" + e + "'");
    res.experiment = e;
    return res;
}

void write_run(const RunResult& result, const ExperimentConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string hash = config.hash_hex();
    json manifest;
    manifest["experiment"] = result.experiment;
    manifest["config_hash"] = hash;
    manifest["config"] = config.values();
    manifest["tables"] = json::array();
    for (const auto& t : result.tables) {
        std::string file = t.name + ".csv";
        std::ofstream out(dir / file);
        if (!out) throw PreconditionViolation("cannot write " + (dir / file).string());
        out << "config_hash";
        for (const auto& col : t.columns) out << ',' << csv_escape(col);
        out << '\n';
        for (const auto& row : t.rows) {
            out << hash;
            for (const auto& cell : row) out << ',' << csv_escape(format_cell(cell));
            out << '\n';
        }
        manifest["tables"].push_back({{"name", t.name}, {"file", file}, {"columns", t.columns}});
    }
    manifest["checks"] = json::array();
    for (const auto& c : result.checks) {
        manifest["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    manifest["passed"] = result.passed();
    std::ofstream m(dir / "manifest.json");
    m << manifest.dump(2) << '\n';
}

double CompareReport::max_relative() const {
    double m = 0.0;
    for (const auto& f : fields) m = std::max(m, f.max_relative);
    return m;
}

CompareReport compare_runs(const std::filesystem::path& a, const std::filesystem::path& b) {
    auto load = [](const std::filesystem::path& dir) {
        std::ifstream in(dir / "manifest.json");
        if (!in) throw SchemaMismatch("no manifest.json in " + dir.string());
        try {
            return json::parse(in);
        } catch (const json::exception&) {
            throw SchemaMismatch("unreadable manifest in " + dir.string());
        }
    };
    json ma = load(a), mb = load(b);
    if (ma.at("experiment") != mb.at("experiment")) {
        throw SchemaMismatch("experiments differ: " + ma.at("experiment").get<std::string>() + " vs " +
                             mb.at("experiment").get<std::string>());
    }
    CompareReport rep;
    rep.experiment = ma.at("experiment").get<std::string>();
    const json& ta = ma.at("tables");
    const json& tb = mb.at("tables");
    if (ta.size() != tb.size()) throw SchemaMismatch("table sets differ");
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i].at("name") != tb[i].at("name") || ta[i].at("columns") != tb[i].at("columns")) {
            throw SchemaMismatch("table " + ta[i].at("name").get<std::string>() + " differs in name or columns");
        }
        auto ra = read_csv(a / ta[i].at("file").get<std::string>());
        auto rb = read_csv(b / tb[i].at("file").get<std::string>());
        if (ra.empty() || rb.empty() || ra[0] != rb[0]) throw SchemaMismatch("CSV headers differ");
        std::size_t rows = std::min(ra.size(), rb.size()) - 1;
        rep.row_count_a += ra.size() - 1;
        rep.row_count_b += rb.size() - 1;
        for (std::size_t col = 1; col < ra[0].size(); ++col) {
            FieldDiff fd{ta[i].at("name").get<std::string>(), ra[0][col], 0.0, rows};
            for (std::size_t r = 1; r <= rows; ++r) {
                const std::string& x = ra[r].at(col);
                const std::string& y = rb[r].at(col);
                double u = 0.0, v = 0.0;
                double d = 0.0;
                if (parse_number(x, u) && parse_number(y, v)) {
                    double scale = std::max(std::abs(u), std::abs(v));
                    d = u == v ? 0.0 : (scale > 0.0 ? std::abs(u - v) / scale : 0.0);
                    if (std::isnan(d)) d = 1.0;
                } else {
                    d = x == y ? 0.0 : 1.0;
                }
                fd.max_relative = std::max(fd.max_relative, d);
            }
            rep.fields.push_back(fd);
        }
    }
    return rep;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_lock;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(error_lock);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    unsigned count = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace cantree
