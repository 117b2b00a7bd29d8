#pragma once

#include "config.hpp"

#include <json.hpp>

#include <ostream>
#include <string>
#include <vector>

namespace dsi::cli {

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct Artifact {
    std::string filename;  // relative to the output directory
    std::string content;
};

struct RunOutput {
    nlohmann::json results = nlohmann::json::object();
    std::vector<Check> checks;
    std::vector<Artifact> csvs;

    bool passed() const;
};

/// Builds every input of the experiment without computing anything. Throws ConfigError.
void validate(const RunConfig& config);

/// validate, then compute. Results never depend on config.workers.
RunOutput execute(const RunConfig& config);

/// Full JSON document: version, config hash, parameters, results, checks.
nlohmann::json summary_json(const RunConfig& config, const RunOutput& out);

/// Writes <experiment>.json and the CSVs into config.output_dir; returns the paths written.
std::vector<std::string> write_artifacts(const RunConfig& config, const RunOutput& out);

/// Sorted catalog of integrands and strategies, one entry per line.
std::string list_catalog();

/// Subcommand bodies with the documented exit codes: 0 ok, 1 check failure, 2 config error.
int command_run(const std::string& config_path, const Overrides& overrides, std::ostream& out, std::ostream& err);
int command_validate(const std::string& config_path, const Overrides& overrides, std::ostream& out,
                     std::ostream& err);

} // namespace dsi::cli
