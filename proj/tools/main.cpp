#include "config.hpp"
#include "experiments.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    using namespace dsi::cli;
    CLI::App app{"Monte Carlo and PDE lab for double stochastic integrals and gamma-constrained hedging"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path;
    unsigned workers = 0;
    bool workers_given = false;
    std::string output_dir;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config_path, "INI config file")->required();
        sub->add_option_function<unsigned>(
            "--workers", [&](unsigned w) { workers = w, workers_given = true; },
            "worker threads (0 = hardware); never changes results");
        sub->allow_extras();
    };
    auto* run = app.add_subcommand("run", "run the configured experiment and write its artifacts");
    add_common(run);
    run->add_option("--output-dir", output_dir, "artifact directory (default: config, then $" +
                                                    std::string(kOutputDirEnv) + ", then ./dsilab-output)");
    auto* check = app.add_subcommand("validate-config", "parse and validate a config without computing");
    add_common(check);
    auto* list = app.add_subcommand("list-catalog", "list integrand and strategy catalog entries");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (list->parsed()) {
        std::cout << list_catalog();
        return 0;
    }
    CLI::App* sub = run->parsed() ? run : check;
    Overrides overrides;
    try {
        overrides = parse_overrides(sub->remaining());
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    if (workers_given) overrides.emplace_back("workers", std::to_string(workers));
    if (!output_dir.empty()) overrides.emplace_back("output_dir", output_dir);
    if (run->parsed()) return command_run(config_path, overrides, std::cout, std::cerr);
    return command_validate(config_path, overrides, std::cout, std::cerr);
}
