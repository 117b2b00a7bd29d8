#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dsi::cli {

inline constexpr const char* kVersion = "dsilab 1.0.0";
inline constexpr const char* kOutputDirEnv = "DSILAB_OUTPUT_DIR";

/// Bad configuration; key names the offending entry (may be empty for file-level errors).
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& message)
        : std::runtime_error(key.empty() ? message : "'" + key + "': " + message), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

enum class ParamType { real, integer, text, flag, real_list, optional_real };

struct ParamDef {
    ParamDef(std::string k, ParamType t, std::string f, std::string h, std::vector<std::string> c = {})
        : key(std::move(k)), type(t), fallback(std::move(f)), help(std::move(h)), choices(std::move(c)) {}

    std::string key;
    ParamType type = ParamType::real;
    std::string fallback;  // default in config syntax
    std::string help;
    std::vector<std::string> choices;  // text parameters only; empty = free text
};

struct ExperimentDef {
    std::string name;
    std::string summary;
    std::vector<ParamDef> params;

    const ParamDef* find(const std::string& key) const;
};

/// Sorted by name.
const std::vector<ExperimentDef>& experiment_defs();
const ExperimentDef* find_experiment(const std::string& name);

/// Parsed and validated run description. params holds every key of the selected
/// experiment's block, defaults filled in, in canonical text form.
struct RunConfig {
    std::string experiment;
    std::uint64_t seed = 1;
    std::string output_dir;
    unsigned workers = 0;
    std::map<std::string, std::string> params;

    double real(const std::string& key) const;
    std::size_t integer(const std::string& key) const;
    const std::string& text(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> real_list(const std::string& key) const;
    std::optional<double> optional_real(const std::string& key) const;
};

/// --key=value pairs; key is a top-level name, experiment.key, or a bare key of the
/// selected experiment.
using Overrides = std::vector<std::pair<std::string, std::string>>;

/// INI text: top-level keys experiment, seed, output_dir, workers; one [section] per
/// experiment. Sections for experiments other than the selected one are checked too.
/// Throws ConfigError.
RunConfig parse_config(std::istream& in, const Overrides& overrides = {});
RunConfig load_config(const std::string& path, const Overrides& overrides = {});

/// Splits "--key=value" arguments; throws ConfigError for anything else.
Overrides parse_overrides(const std::vector<std::string>& args);

/// FNV-1a 64 over the canonical config text; workers and output_dir are excluded.
std::uint64_t config_hash(const RunConfig& config);
std::string canonical_text(const RunConfig& config);
std::string hex64(std::uint64_t value);

/// Strict parsers shared with the experiments (throw ConfigError naming key).
double parse_real(const std::string& key, const std::string& value);
std::size_t parse_integer(const std::string& key, const std::string& value);
std::vector<double> parse_real_list(const std::string& key, const std::string& value);

} // namespace dsi::cli
