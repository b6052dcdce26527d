#pragma once

// Subcommands behind the `gctrl` executable.  Each command computes its
// results in memory first and writes files only once everything succeeded,
// so a failed run leaves no partial artifacts.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gctrl/config.hpp"

namespace gctrl {

enum ExitCode : int {
    kExitOk = 0,
    kExitVerifyFailed = 1,
    kExitConfigError = 2,
    kExitPrecondition = 3,
    kExitInconsistent = 4,
};

struct CliOptions {
    std::string config_path;
    std::optional<std::string> output_dir;  // overrides [output] directory
    std::optional<std::uint64_t> seed;      // overrides [simulation] seed
    bool force = false;                     // allow overwriting existing files
};

struct RunReport {
    std::string command;
    std::string config_echo;
    std::vector<std::pair<std::string, std::string>> results;
    std::vector<std::string> artifact_paths;
    bool passed = true;  // verify only

    void add(std::string key, std::string value) { results.emplace_back(std::move(key), std::move(value)); }
    [[nodiscard]] std::string text() const;
};

// Applies command-line overrides to a parsed configuration.
[[nodiscard]] RunConfig apply_overrides(RunConfig config, const CliOptions& options);

// The commands proper.  They throw on failure; run_command maps exceptions
// to exit codes.  Artifacts are written under config.output.
RunReport cmd_solve_hjb(const RunConfig& config, bool force);
RunReport cmd_merton(const RunConfig& config, bool force);
RunReport cmd_simulate(const RunConfig& config, bool force);
RunReport cmd_verify(const RunConfig& config, bool force);

// Loads the config, runs `command`, prints the report to `out` and
// diagnostics to `err`.  Returns the process exit code.
int run_command(const std::string& command, const CliOptions& options, std::ostream& out,
                std::ostream& err);

}  // namespace gctrl
