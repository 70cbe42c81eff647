#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "cbe/harmonic.hpp"
#include "cbe/sampler.hpp"
#include "cbe/stats.hpp"
#include "json.hpp"

namespace cbe {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Flat key/value configuration validated against a schema of defaults. A null default
// marks an optional key without a value.
class Config {
public:
    Config() = default;
    Config(std::string experiment, nlohmann::json defaults);

    static Config for_experiment(const std::string& experiment);

    void merge(const nlohmann::json& object, const std::string& origin);
    void merge_file(const std::string& path);
    // "key=value"; the value is parsed as JSON when possible, otherwise taken as a string.
    void apply_override(const std::string& assignment);
    void set(const std::string& key, nlohmann::json value);

    const std::string& experiment() const { return experiment_; }
    bool has(const std::string& key) const;
    double number(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    std::uint64_t seed(const std::string& key = "seed") const;
    bool boolean(const std::string& key) const;
    std::string string(const std::string& key) const;
    std::vector<double> numbers(const std::string& key) const;
    std::vector<int> integers(const std::string& key) const;
    std::vector<std::string> strings(const std::string& key) const;

    const nlohmann::json& values() const { return values_; }
    const std::vector<std::string>& overrides() const { return overrides_; }
    // FNV-1a 64 of the canonical dump, as 16 hex digits.
    std::string hash() const;

private:
    const nlohmann::json& at(const std::string& key) const;
    std::string experiment_;
    nlohmann::json schema_ = nlohmann::json::object();
    nlohmann::json values_ = nlohmann::json::object();
    std::vector<std::string> overrides_;
};

std::vector<std::string> experiment_names();

// Test function given as "name" or "name:key=value,key=value".
struct FunctionSpec {
    std::string name;
    FnParams params;
    std::string text;
};
FunctionSpec parse_function_spec(const std::string& text);

int resolve_threads(int requested);
// Runs body(i) for i in [0, count); results must be written by index for determinism.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

// Replicate i of (beta, n, seed) is drawn from RngStream(seed, i), so prefixes are shared.
class SampleCache {
public:
    std::span<const SpectrumSample> get(double beta, int n, std::size_t replicates, std::uint64_t seed, int threads);

private:
    std::mutex mutex_;
    std::map<std::tuple<double, int, std::uint64_t>, std::vector<SpectrumSample>> store_;
};

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ExperimentResult {
    std::string name;
    RunSummary summary;  // headline statistic
    nlohmann::json report = nlohmann::json::object();
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;  // per replicate
    std::vector<Check> checks;
    bool passed() const;
};

// All drivers accept an optional shared cache; without one they draw privately.
ExperimentResult run_global_clt(const Config& cfg, SampleCache* cache = nullptr);
ExperimentResult run_meso_clt(const Config& cfg, SampleCache* cache = nullptr);
ExperimentResult run_sine_clt(const Config& cfg, SampleCache* cache = nullptr);
ExperimentResult run_rigidity(const Config& cfg, SampleCache* cache = nullptr);
ExperimentResult run_loop_null(const Config& cfg, SampleCache* cache = nullptr);
ExperimentResult run_error_budget(const Config& cfg, SampleCache* cache = nullptr);
ExperimentResult run_gmc(const Config& cfg, SampleCache* cache = nullptr);
ExperimentResult run_experiment(const Config& cfg, SampleCache* cache = nullptr);

nlohmann::json to_json(const RunSummary& s);

}  // namespace cbe
