// cbe_lab: sampling, field dumps, oracle tables and the Monte Carlo experiments.
// Exit codes: 0 success, 1 a check failed, 2 usage or configuration error, 3 runtime error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cbe/experiments.hpp"
#include "cbe/fields.hpp"
#include "cbe/io.hpp"
#include "cbe/oracles.hpp"
#include "cbe/sampler.hpp"

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    int threads = -1;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string default_out(const cbe::Config& cfg)
{
    const char* env = std::getenv("CBE_LAB_OUT");
    std::string base = env && *env ? env : "cbe_out";
    return base + "/" + cfg.experiment() + "-" + cfg.hash();
}

cbe::Config build_config(const std::string& experiment, const Common& c, bool config_required,
                         const std::vector<std::pair<std::string, std::string>>& flag_overrides)
{
    cbe::Config cfg = cbe::Config::for_experiment(experiment);
    if (c.config.empty() && config_required)
        throw UsageError("subcommand '" + experiment + "' requires --config <file.json>");
    if (!c.config.empty())
        cfg.merge_file(c.config);
    for (const auto& [k, v] : flag_overrides)
        cfg.apply_override(k + "=" + v);
    for (const auto& s : c.sets)
        cfg.apply_override(s);
    if (c.threads >= 0 && cfg.has("threads"))
        cfg.set("threads", c.threads);
    return cfg;
}

std::string command_line(int argc, char** argv)
{
    std::string s;
    for (int i = 0; i < argc; ++i)
        s += (i ? " " : "") + std::string(argv[i]);
    return s;
}

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "JSON config file");
    sub->add_option("--set", c.sets, "Override key=value (repeatable; beats the config file)");
    sub->add_option("--out", c.out, "Output directory (default $CBE_LAB_OUT or ./cbe_out)");
    sub->add_option("--threads", c.threads, "Worker threads (0 = logical cores)");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Monte Carlo laboratory for circular beta-ensembles"};
    app.require_subcommand(1);

    Common common;
    std::vector<std::pair<std::string, std::string>> flags;
    auto flag = [&](CLI::App* sub, const std::string& name, const std::string& help) {
        sub->add_option_function<std::string>(
            "--" + name, [&flags, name](const std::string& v) { flags.emplace_back(name, v); }, help);
    };

    auto* sample = app.add_subcommand("sample", "Draw CbE spectra; CSV replicate,index,angle");
    add_common(sample, common);
    flag(sample, "beta", "Inverse temperature");
    flag(sample, "n", "Matrix size");
    flag(sample, "seed", "Master seed");
    flag(sample, "replicates", "Number of spectra");

    auto* fields = app.add_subcommand("fields", "Dump log|P|, Psi or counting function on a grid");
    add_common(fields, common);
    for (const char* f : {"beta", "n", "seed", "replicate", "field", "r", "grid", "offset"})
        flag(fields, f, std::string("Config key ") + f);

    auto* oracle = app.add_subcommand("oracle", "Exact log-moment of |P_N| or e^{Psi_N}");
    add_common(oracle, common);
    flag(oracle, "beta", "Inverse temperature");
    flag(oracle, "n", "Matrix size");
    flag(oracle, "gamma", "Exponent");
    flag(oracle, "kind", "abs_charpoly or exp_psi");

    const std::vector<std::pair<std::string, std::string>> experiments = {
        {"clt", "Global CLT for a smooth periodic statistic"},
        {"meso", "Mesoscopic CLT for w(L theta)"},
        {"sine", "Sine-beta window statistic"},
        {"gmc", "Multiplicative chaos moments, free energy, thick points"},
        {"rigidity", "Rigidity, counting-function tails and extremes"},
        {"loopeq", "Importance-sampling null test of the loop equation"},
        {"errbudget", "Error budget delta_N against R-functionals"}};
    std::vector<CLI::App*> exp_subs;
    for (const auto& [name, help] : experiments) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, common);
        exp_subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    const std::string cmd = command_line(argc, argv);
    CLI::App* used = app.get_subcommands().front();
    try {
        const std::string name = used->get_name();
        if (name == "oracle") {
            cbe::Config cfg = build_config(name, common, false, flags);
            const bool table = cfg.has("beta_list") || cfg.has("n_list") || cfg.has("gamma_list") || cfg.has("kind_list");
            if (table) {
                auto list = [&](const char* k, const char* scalar) { return cfg.has(k) ? cfg.numbers(k) : cfg.numbers(scalar); };
                std::vector<int> ns = cfg.has("n_list") ? cfg.integers("n_list") : cfg.integers("n");
                std::vector<std::string> kinds = cfg.has("kind_list") ? cfg.strings("kind_list") : cfg.strings("kind");
                if (common.out.empty()) {
                    cbe::write_oracle_table(std::cout, list("beta_list", "beta"), ns, list("gamma_list", "gamma"), kinds);
                    return 0;
                }
                std::filesystem::create_directories(common.out);
                std::ofstream os(common.out + "/oracle.csv");
                cbe::write_oracle_table(os, list("beta_list", "beta"), ns, list("gamma_list", "gamma"), kinds);
                cbe::write_json_file(common.out + "/manifest.json", cbe::make_manifest(cfg, cmd, elapsed()));
                return 0;
            }
            cbe::MomentQuery q{cfg.number("beta"), static_cast<int>(cfg.integer("n")), cfg.number("gamma"),
                               cbe::moment_kind_from_string(cfg.string("kind"))};
            std::cout << cbe::format_number(cbe::log_moment(q)) << '\n';
            return 0;
        }
        if (name == "sample") {
            cbe::Config cfg = build_config(name, common, false, flags);
            const double beta = cfg.number("beta");
            const int n = static_cast<int>(cfg.integer("n"));
            const auto reps = cfg.integer("replicates");
            if (reps < 1)
                throw cbe::ConfigError("replicates must be at least 1");
            cbe::SampleCache cache;
            auto s = cache.get(beta, n, reps, cfg.seed(), cfg.integer("threads"));
            if (common.out.empty()) {
                cbe::write_samples(std::cout, s);
                return 0;
            }
            std::filesystem::create_directories(common.out);
            std::ofstream os(common.out + "/samples.csv");
            cbe::write_samples(os, s);
            cbe::write_json_file(common.out + "/manifest.json", cbe::make_manifest(cfg, cmd, elapsed()));
            return 0;
        }
        if (name == "fields") {
            cbe::Config cfg = build_config(name, common, false, flags);
            cbe::EnsembleSpec spec{cfg.number("beta"), static_cast<int>(cfg.integer("n")), cfg.seed()};
            const auto rep = cfg.integer("replicate");
            if (rep < 0)
                throw cbe::ConfigError("replicate must be nonnegative");
            cbe::RngStream rng(spec.seed, static_cast<std::uint64_t>(rep));
            cbe::SpectrumSample s = cbe::sample_spectrum(spec, rng);
            std::size_t m = cfg.integer("grid") > 0 ? cfg.integer("grid") : cbe::default_field_grid(spec.n);
            cbe::FieldGrid f = cbe::field_grid(s, cbe::field_kind_from_string(cfg.string("field")), cfg.number("r"), m,
                                               cfg.number("offset"));
            if (common.out.empty()) {
                cbe::write_field(std::cout, f);
                return 0;
            }
            std::filesystem::create_directories(common.out);
            std::ofstream os(common.out + "/field.csv");
            cbe::write_field(os, f);
            cbe::write_json_file(common.out + "/field.json", cbe::field_sidecar(f));
            cbe::write_json_file(common.out + "/manifest.json", cbe::make_manifest(cfg, cmd, elapsed()));
            return 0;
        }
        cbe::Config cfg = build_config(name, common, true, flags);
        cbe::ExperimentResult r = cbe::run_experiment(cfg);
        const std::string out = common.out.empty() ? default_out(cfg) : common.out;
        cbe::write_result(out, r, cfg, cmd, elapsed());
        for (const auto& c : r.checks)
            std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        std::cout << "estimate " << cbe::format_number(r.summary.estimate) << " +- "
                  << cbe::format_number(r.summary.std_error) << '\n';
        std::cout << "results in " << out << '\n';
        return r.passed() ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << used->help();
        return 2;
    } catch (const cbe::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << used->help();
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        // Oracle parameters outside their domain.
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const cbe::FieldError& e) {
        // Direct field dumps only fail on their own parameters; inside experiments this is a runtime fault.
        std::cerr << "error: " << e.what() << '\n';
        return used->get_name() == "fields" ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
