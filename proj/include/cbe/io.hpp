#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cbe/experiments.hpp"
#include "cbe/fields.hpp"
#include "cbe/gmc.hpp"
#include "cbe/oracles.hpp"
#include "cbe/sampler.hpp"
#include "json.hpp"

namespace cbe {

// 17 significant digits; reads back to the same double.
std::string format_number(double x);

void write_csv(std::ostream& os, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& rows);

// replicate,index,angle
void write_samples(std::ostream& os, std::span<const SpectrumSample> samples);
// theta,value
void write_field(std::ostream& os, const FieldGrid& field);
nlohmann::json field_sidecar(const FieldGrid& field);
// beta,n,gamma,kind,log_moment over the full grid, kinds outermost.
void write_oracle_table(std::ostream& os, const std::vector<double>& betas, const std::vector<int>& ns,
                        const std::vector<double>& gammas, const std::vector<std::string>& kinds);
// theta,weight
void write_measure(std::ostream& os, const GmcMeasureGrid& measure);

void write_json_file(const std::string& path, const nlohmann::json& j);

// Run manifest: effective config, overrides, hash, seed, versions and wall time.
nlohmann::json make_manifest(const Config& cfg, const std::string& command, double seconds);

// summary.json, statistics.csv and manifest.json under dir (created if missing).
void write_result(const std::string& dir, const ExperimentResult& result, const Config& cfg,
                  const std::string& command, double seconds);

}  // namespace cbe
