#include <doctest.h>

#include "cantree/errors.hpp"
#include "cantree/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <string>

using namespace cantree;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("cantree_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

json small_poincare() {
    return {{"experiment", "poincare"}, {"seed", 7}, {"depths", {8, 9}}, {"functions", 4}, {"balls", 6},
            {"ball_max_level", 5}};
}

json small_trace() {
    return {{"experiment", "trace"}, {"seed", 3}, {"round_trip_depth", 5}, {"random_functions", 4},
            {"depths", {6, 7, 8}}, {"functions", 4}};
}

}  // namespace

TEST_CASE("config validation rejects bad input") {
    CHECK_THROWS_AS(ExperimentConfig::from_json(json::array()), ParameterViolation);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"seed", 1}}), ParameterViolation);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"experiment", "nope"}}), ParameterViolation);

    json j = small_poincare();
    j["radius"] = 2.0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);

    j = small_poincare();
    j["functions"] = "many";
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);

    j = small_poincare();
    j["functions"] = -3;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);

    j = small_poincare();
    j["balls"] = 0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);

    j = small_poincare();
    j["depths"] = json::array();
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);

    j = small_poincare();
    j["beta"] = 0.5;  // below log 2: infinite measure
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);

    j = small_poincare();
    j["threads"] = 0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);

    j = small_trace();
    j["sections"] = {"round_trip", "bogus"};
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);

    j = {{"experiment", "maps"}, {"sections", {"qs_to_rqi"}}, {"alpha1", 0.5}};
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);
}

TEST_CASE("sampled experiments require an explicit seed") {
    json j = small_poincare();
    j.erase("seed");
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);
    // Deterministic sections need no seed.
    CHECK_NOTHROW(ExperimentConfig::from_json({{"experiment", "rigidity"}}));
    CHECK_NOTHROW(ExperimentConfig::from_json(
        {{"experiment", "measure"}, {"sections", {"ahlfors", "dimension"}}}));
}

TEST_CASE("measure only needs a finite measure for the measure sections") {
    json j{{"experiment", "measure"}, {"beta", std::log(2.0)}, {"sections", {"ultrametric", "ahlfors"}},
           {"seed", 1}};
    CHECK_NOTHROW(ExperimentConfig::from_json(j));
    j["sections"] = {"doubling"};
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ParameterViolation);
}

TEST_CASE("config hash is canonical and sensitive") {
    auto a = ExperimentConfig::from_json(small_poincare());
    json explicit_defaults = default_config("poincare");
    explicit_defaults.update(small_poincare());
    auto b = ExperimentConfig::from_json(explicit_defaults);
    CHECK(a.hash() == b.hash());
    CHECK(a.hash_hex().size() == 16);

    auto c = a;
    c.set("seed", 8);
    CHECK(c.hash() != a.hash());
    CHECK_THROWS_AS(c.set("functions", 0), ParameterViolation);

    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("default configs validate for every experiment") {
    for (const auto& name : experiment_names()) {
        json j = default_config(name);
        j["seed"] = 1;
        CHECK_NOTHROW(ExperimentConfig::from_json(j));
    }
    CHECK_THROWS_AS(default_config("nope"), ParameterViolation);
}

TEST_CASE("numbers are written with round-trip precision") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        double x = u(rng) * std::exp(u(rng) * 1e-4);
        CHECK(std::strtod(format_number(x).c_str(), nullptr) == x);
    }
    CHECK(format_cell(Cell{std::int64_t{42}}) == "42");
    CHECK(format_cell(Cell{std::string("x")}) == "x");
}

TEST_CASE("table rows must match the header") {
    Table t{"t", {"a", "b"}, {}};
    t.add({1.0, std::int64_t{2}});
    CHECK_THROWS_AS(t.add({1.0}), PreconditionViolation);
}

TEST_CASE("parallel_for visits every index once and rethrows") {
    for (unsigned threads : {1u, 3u, 8u}) {
        std::vector<std::atomic<int>> hits(257);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
        for (auto& h : hits) CHECK(h.load() == 1);
    }
    CHECK_THROWS_AS(parallel_for(50, 4,
                                 [](std::size_t i) {
                                     if (i == 17) throw ConditionFailure("boom");
                                 }),
                    ConditionFailure);
}

TEST_CASE("runs are deterministic and thread-count independent") {
    auto one = ExperimentConfig::from_json(small_poincare());
    json j = small_poincare();
    j["threads"] = 4;
    auto four = ExperimentConfig::from_json(j);
    auto r1 = run_experiment(one);
    auto r2 = run_experiment(one);
    auto r4 = run_experiment(four);
    const auto& t1 = r1.table("poincare");
    CHECK(t1.rows.size() == 2);
    CHECK(t1.rows == r2.table("poincare").rows);
    CHECK(t1.rows == r4.table("poincare").rows);
    CHECK_THROWS_AS(r1.table("missing"), PreconditionViolation);
}

TEST_CASE("written runs carry the hash and compare cleanly") {
    auto config = ExperimentConfig::from_json(small_trace());
    auto result = run_experiment(config);
    CHECK(result.passed());
    auto a = scratch_dir("a"), b = scratch_dir("b");
    write_run(result, config, a);
    write_run(run_experiment(config), config, b);

    for (const auto& t : result.tables) {
        std::ifstream in(a / (t.name + ".csv"));
        std::string line;
        REQUIRE(std::getline(in, line));
        CHECK(line.rfind("config_hash,", 0) == 0);
        std::size_t rows = 0;
        while (std::getline(in, line)) {
            CHECK(line.rfind(config.hash_hex() + ",", 0) == 0);
            ++rows;
        }
        CHECK(rows == t.rows.size());
    }
    std::ifstream m(a / "manifest.json");
    json manifest = json::parse(m);
    CHECK(manifest["config_hash"] == config.hash_hex());
    CHECK(manifest["passed"] == true);

    auto rep = compare_runs(a, b);
    CHECK(rep.experiment == "trace");
    CHECK(rep.max_relative() == 0.0);
    CHECK(rep.row_count_a == rep.row_count_b);
    CHECK(!rep.fields.empty());

    auto other = config;
    other.set("functions", 5);
    auto c = scratch_dir("c");
    write_run(run_experiment(other), other, c);
    auto diff = compare_runs(a, c);
    CHECK(diff.max_relative() > 0.0);  // config_hash column plus the changed maxima

    auto d = scratch_dir("d");
    json rj{{"experiment", "rigidity"}, {"depth", 4}, {"ternary_depth", 3}, {"geodesic_depth", 3}};
    auto rc = ExperimentConfig::from_json(rj);
    write_run(run_experiment(rc), rc, d);
    CHECK_THROWS_AS(compare_runs(a, d), SchemaMismatch);

    json narrower = small_trace();
    narrower["sections"] = {"round_trip"};
    auto nc = ExperimentConfig::from_json(narrower);
    auto e = scratch_dir("e");
    write_run(run_experiment(nc), nc, e);
    CHECK_THROWS_AS(compare_runs(a, e), SchemaMismatch);
    CHECK_THROWS_AS(compare_runs(a, scratch_dir("missing")), SchemaMismatch);

    for (const auto& dir : {a, b, c, d, e}) std::filesystem::remove_all(dir);
}

TEST_CASE("small experiment runs pass their checks") {
    SUBCASE("rigidity") {
        auto r = run_experiment(ExperimentConfig::from_json(
            {{"experiment", "rigidity"}, {"depth", 5}, {"ternary_depth", 4}, {"geodesic_depth", 4}}));
        CHECK(r.passed());
        CHECK(r.table("rigidity").rows.size() == 4);
    }
    SUBCASE("measure") {
        auto r = run_experiment(ExperimentConfig::from_json({{"experiment", "measure"},
                                                             {"seed", 2},
                                                             {"ultrametric_depths", {2, 3}},
                                                             {"ultrametric_sample_depth", 12},
                                                             {"ultrametric_samples", 2000},
                                                             {"depth", 8},
                                                             {"ahlfors_bands", 6},
                                                             {"depths", {8, 10}},
                                                             {"doubling_samples", 20},
                                                             {"dimension_depths", {6, 8}}}));
        for (const auto& c : r.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.detail);
    }
    SUBCASE("besov") {
        auto r = run_experiment(ExperimentConfig::from_json({{"experiment", "besov"}, {"depth", 12}, {"fit_to", 7}}));
        for (const auto& c : r.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.detail);
    }
    SUBCASE("maps") {
        auto r = run_experiment(ExperimentConfig::from_json({{"experiment", "maps"},
                                                             {"seed", 5},
                                                             {"rqi_depth", 6},
                                                             {"amplitude_depth", 5},
                                                             {"depth", 7},
                                                             {"samples", 2000},
                                                             {"round_trip_depth", 8},
                                                             {"depths", {8, 9}},
                                                             {"functions", 3},
                                                             {"fit_tolerance", 0.1}}));
        for (const auto& c : r.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.detail);
    }
}
