#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gctrl/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Stochastic control under volatility ambiguity"};
    app.require_subcommand(1);

    gctrl::CliOptions options;
    std::string output_dir;
    std::uint64_t seed = 0;

    for (const char* name : {"solve-hjb", "merton", "simulate", "verify"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", options.config_path, "configuration file")->required();
        sub->add_option("--output", output_dir, "output directory (overrides [output] directory)");
        sub->add_flag("--force", options.force, "overwrite existing output files");
        sub->add_option("--seed", seed, "simulation seed (overrides [simulation] seed)");
    }
    app.footer("Environment: GCTRL_THREADS caps worker threads (0 = automatic).\n"
               "Exit codes: 0 ok, 1 verification failed, 2 config error, 3 numerical precondition,\n"
               "4 oracle inconsistency.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : gctrl::kExitConfigError;
    }

    const CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--output") > 0) options.output_dir = output_dir;
    if (sub->count("--seed") > 0) options.seed = seed;
    return gctrl::run_command(sub->get_name(), options, std::cout, std::cerr);
}
