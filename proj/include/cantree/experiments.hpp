#pragma once

// Configured batch runs over the library: each experiment sweeps its
// parameters, fills CSV tables and evaluates pass/fail checks.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cantree {

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row);
};

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunResult {
    std::string experiment;
    std::vector<Table> tables;
    std::vector<Check> checks;

    bool passed() const;
    const Table& table(std::string_view name) const;
};

std::uint64_t fnv1a(std::string_view bytes);
// %.17g
std::string format_number(double x);
std::string format_cell(const Cell& c);

// Flat key-value configuration; values are numbers, strings, booleans or
// arrays of those. The hash covers the canonical serialization.
class ExperimentConfig {
public:
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);

    const std::string& experiment() const { return experiment_; }
    const nlohmann::json& values() const { return values_; }
    std::uint64_t hash() const { return hash_; }
    std::string hash_hex() const;

    // Replaces one value, then revalidates and rehashes.
    void set(const std::string& key, nlohmann::json value);
    bool has(const std::string& key) const { return values_.contains(key); }

    double number(const std::string& key) const;
    std::uint64_t integer(const std::string& key) const;
    std::string text(const std::string& key) const;
    std::vector<double> numbers(const std::string& key) const;
    std::vector<std::string> texts(const std::string& key) const;
    bool flag(const std::string& key) const;
    unsigned threads() const { return static_cast<unsigned>(integer("threads")); }

private:
    void finish();

    std::string experiment_;
    nlohmann::json values_;
    std::uint64_t hash_ = 0;
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"measure", "poincare", "besov", "trace", "maps", "rigidity"};
    return names;
}

// Defaults for an experiment, merged under the given values.
nlohmann::json default_config(const std::string& experiment);

RunResult run_experiment(const ExperimentConfig& config);

// One CSV per table plus manifest.json; every row carries the config hash.
void write_run(const RunResult& result, const ExperimentConfig& config, const std::filesystem::path& dir);

struct FieldDiff {
    std::string table;
    std::string column;
    double max_relative = 0.0;
    std::size_t rows = 0;
};

struct CompareReport {
    std::string experiment;
    std::vector<FieldDiff> fields;
    std::size_t row_count_a = 0;
    std::size_t row_count_b = 0;

    double max_relative() const;
};

// Field-wise relative differences of two written runs, rows matched by position.
CompareReport compare_runs(const std::filesystem::path& a, const std::filesystem::path& b);

// Calls fn(i) for every i in [0, n); workers claim indices one at a time.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace cantree
