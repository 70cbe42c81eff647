#include "cbe/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace cbe {

namespace {

std::ofstream open_out(const std::string& path)
{
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot write '" + path + "'");
    return os;
}

}  // namespace

std::string format_number(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_csv(std::ostream& os, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows)
{
    for (std::size_t i = 0; i < header.size(); ++i)
        os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw std::invalid_argument("CSV row width differs from header");
        for (std::size_t i = 0; i < row.size(); ++i)
            os << (i ? "," : "") << format_number(row[i]);
        os << '\n';
    }
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& rows)
{
    auto os = open_out(path);
    write_csv(os, header, rows);
}

void write_samples(std::ostream& os, std::span<const SpectrumSample> samples)
{
    os << "replicate,index,angle\n";
    for (std::size_t r = 0; r < samples.size(); ++r)
        for (std::size_t k = 0; k < samples[r].angles.size(); ++k)
            os << r << ',' << k << ',' << format_number(samples[r].angles[k]) << '\n';
}

void write_field(std::ostream& os, const FieldGrid& field)
{
    os << "theta,value\n";
    for (std::size_t m = 0; m < field.size(); ++m)
        os << format_number(field.theta(m)) << ',' << format_number(field.values[m]) << '\n';
}

nlohmann::json field_sidecar(const FieldGrid& field)
{
    return {{"kind", to_string(field.kind)},
            {"r", field.r},
            {"offset", field.offset},
            {"grid", field.size()},
            {"beta", field.source.beta},
            {"n", field.source.n},
            {"seed", field.source.seed}};
}

void write_oracle_table(std::ostream& os, const std::vector<double>& betas, const std::vector<int>& ns,
                        const std::vector<double>& gammas, const std::vector<std::string>& kinds)
{
    os << "beta,n,gamma,kind,log_moment\n";
    for (const auto& k : kinds) {
        const MomentKind kind = moment_kind_from_string(k);
        for (double b : betas)
            for (int n : ns)
                for (double g : gammas)
                    os << format_number(b) << ',' << n << ',' << format_number(g) << ',' << to_string(kind) << ','
                       << format_number(log_moment({b, n, g, kind})) << '\n';
    }
}

void write_measure(std::ostream& os, const GmcMeasureGrid& measure)
{
    os << "theta,weight\n";
    const double m = static_cast<double>(measure.weights.size());
    for (std::size_t i = 0; i < measure.weights.size(); ++i)
        os << format_number(2.0 * M_PI * i / m) << ',' << format_number(measure.weights[i]) << '\n';
}

void write_json_file(const std::string& path, const nlohmann::json& j)
{
    auto os = open_out(path);
    os << j.dump(2) << '\n';
}

nlohmann::json make_manifest(const Config& cfg, const std::string& command, double seconds)
{
    nlohmann::json cfg_json = cfg.values();
    cfg_json["experiment"] = cfg.experiment();
    nlohmann::json m = {{"command", command},
                        {"config", cfg_json},
                        {"config_hash", cfg.hash()},
                        {"overrides", cfg.overrides()},
                        {"duration_seconds", seconds},
                        {"versions",
                         {{"cbe_lab", "1.0.0"},
                          {"compiler", __VERSION__},
                          {"cplusplus", __cplusplus},
                          {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                       std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
    if (cfg.has("seed"))
        m["seed"] = cfg.seed();
    return m;
}

void write_result(const std::string& dir, const ExperimentResult& result, const Config& cfg,
                  const std::string& command, double seconds)
{
    std::filesystem::create_directories(dir);
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : result.checks)
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    nlohmann::json summary = {{"experiment", result.name},
                              {"config_hash", cfg.hash()},
                              {"summary", to_json(result.summary)},
                              {"report", result.report},
                              {"checks", checks},
                              {"passed", result.passed()}};
    write_json_file(dir + "/summary.json", summary);
    write_csv_file(dir + "/statistics.csv", result.columns, result.rows);
    write_json_file(dir + "/manifest.json", make_manifest(cfg, command, seconds));
}

}  // namespace cbe
