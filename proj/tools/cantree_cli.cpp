// Command-line runner: one subcommand per experiment plus `compare`.

#include "cantree/errors.hpp"
#include "cantree/experiments.hpp"

#include <CLI11.hpp>
#include <malloc.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using nlohmann::json;

enum Exit { ok = 0, internal = 1, invalid = 2, failed = 3 };

void report_error(const std::string& kind, const std::string& message, const std::string& out_dir) {
    json record{{"error", kind}, {"message", message}};
    std::cerr << record.dump() << '\n';
    if (out_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream f(std::filesystem::path(out_dir) / "error.json");
    if (f) f << record.dump(2) << '\n';
}

struct RunOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> depth;
    std::optional<unsigned> threads;
};

int run(const std::string& experiment, const RunOptions& o) {
    json j = o.config.empty() ? json{{"experiment", experiment}} : [&] {
        std::ifstream in(o.config);
        if (!in) throw cantree::ParameterViolation("cannot open config " + o.config);
        return json::parse(in);
    }();
    if (!j.is_object()) throw cantree::ParameterViolation("config must be a JSON object");
    if (!j.contains("experiment")) j["experiment"] = experiment;
    if (j["experiment"] != experiment) {
        throw cantree::ParameterViolation("config is for '" + j["experiment"].get<std::string>() + "', not " + experiment);
    }
    if (o.seed) j["seed"] = *o.seed;
    if (o.threads) j["threads"] = *o.threads;
    if (o.depth) {
        json defaults = cantree::default_config(experiment);
        if (!defaults.contains("depth") && !defaults.contains("depths")) {
            throw cantree::ParameterViolation("--depth does not apply to " + experiment);
        }
        if (defaults.contains("depth")) j["depth"] = *o.depth;
        if (defaults.contains("depths")) j["depths"] = json::array({*o.depth});
    }
    auto config = cantree::ExperimentConfig::from_json(j);
    auto result = cantree::run_experiment(config);
    if (!o.out.empty()) cantree::write_run(result, config, o.out);

    std::cout << experiment << " config " << config.hash_hex() << '\n';
    for (const auto& t : result.tables) std::cout << "  table " << t.name << ": " << t.rows.size() << " rows\n";
    for (const auto& c : result.checks) {
        std::cout << "  " << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    }
    return result.passed() ? ok : failed;
}

int compare(const std::string& a, const std::string& b, double tolerance) {
    auto rep = cantree::compare_runs(a, b);
    std::cout << "compare " << rep.experiment << ": rows " << rep.row_count_a << " vs " << rep.row_count_b << '\n';
    for (const auto& f : rep.fields) {
        if (f.max_relative > 0.0) {
            std::cout << "  " << f.table << '.' << f.column << " max relative diff " << cantree::format_number(f.max_relative)
                      << '\n';
        }
    }
    std::cout << "  overall " << cantree::format_number(rep.max_relative()) << '\n';
    bool same_rows = rep.row_count_a == rep.row_count_b;
    return same_rows && rep.max_relative() <= tolerance ? ok : failed;
}

}  // namespace

int main(int argc, char** argv) {
    // Large tree layouts are freed and reallocated per depth; keep them off mmap.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"Experiments on rooted trees and their Cantor-set boundaries"};
    app.require_subcommand(1);

    RunOptions opts;
    for (const auto& name : cantree::experiment_names()) {
        auto* sub = app.add_subcommand(name, "Run the " + name + " experiment");
        sub->add_option("--config", opts.config, "JSON config; defaults fill missing keys")->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out, "Output directory for CSV tables and manifest.json");
        sub->add_option("--seed", opts.seed, "Override the seed");
        sub->add_option("--depth", opts.depth, "Override depth (and collapse depth sweeps to it)");
        sub->add_option("--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
    }
    std::string run_a, run_b;
    double tolerance = 0.0;
    auto* cmp = app.add_subcommand("compare", "Compare two output directories field by field");
    cmp->add_option("run_a", run_a)->required()->check(CLI::ExistingDirectory);
    cmp->add_option("run_b", run_b)->required()->check(CLI::ExistingDirectory);
    cmp->add_option("--tolerance", tolerance, "Largest accepted relative difference");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : invalid;
    }

    auto* sub = app.get_subcommands().front();
    std::string name = sub->get_name();
    std::string out = name == "compare" ? std::string() : opts.out;
    try {
        if (name == "compare") return compare(run_a, run_b, tolerance);
        return run(name, opts);
    } catch (const cantree::SchemaMismatch& e) {
        report_error("SchemaMismatch", e.what(), out);
        return invalid;
    } catch (const cantree::ParameterViolation& e) {
        report_error("ParameterViolation", e.what(), out);
        return invalid;
    } catch (const cantree::PreconditionViolation& e) {
        report_error("PreconditionViolation", e.what(), out);
        return invalid;
    } catch (const cantree::Unsupported& e) {
        report_error("Unsupported", e.what(), out);
        return invalid;
    } catch (const nlohmann::json::exception& e) {
        report_error("InvalidJson", e.what(), out);
        return invalid;
    } catch (const cantree::Error& e) {
        report_error("Error", e.what(), out);
        return failed;
    } catch (const std::exception& e) {
        report_error("Internal", e.what(), out);
        return internal;
    }
}
