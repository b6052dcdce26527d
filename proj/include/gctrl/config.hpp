#pragma once

// Run configuration: flat `[section]` headers followed by `key = value`
// lines.  `#` starts a comment.  Unknown sections or keys are errors, and
// every error carries the 1-based line and column of the offending token.
//
// List syntax
//   breakpoints = 0, 0.5           comma-separated reals
//   r           = 0.02 | 0.03      one entry per market segment
//   alpha       = 0.06, 0.05       components within a segment
//   gamma       = 0.2, 0; 0, 0.3   rows separated by ';'

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gctrl/merton.hpp"
#include "gctrl/sublinear.hpp"

namespace gctrl {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& message, std::size_t line, std::size_t column);

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

enum class Payoff { kSquare, kNegSquare, kConstant };

struct AmbiguityConfig {
    std::size_t d = 1;
    double sigma_lo_sq = 0.25;
    double sigma_hi_sq = 1.0;

    bool operator==(const AmbiguityConfig&) const = default;
};

struct MarketConfig {
    std::vector<double> breakpoints{0.0};
    std::vector<double> r{0.02};
    std::vector<std::vector<double>> alpha{{0.06}};
    std::vector<std::vector<std::vector<double>>> gamma{{{0.2}}};  // segment, row, column

    bool operator==(const MarketConfig&) const = default;
};

struct UtilityConfig {
    double kappa = 2.0;
    double beta = 0.1;

    bool operator==(const UtilityConfig&) const = default;
};

// Scalar test problem for solve-hjb and simulate: dx = drift dt + volatility dB,
// terminal payoff, optional discount.
struct ProblemConfig {
    double horizon = 1.0;
    double x0 = 0.0;
    double drift = 0.0;
    double volatility = 1.0;
    double discount = 0.0;
    Payoff payoff = Payoff::kSquare;
    double payoff_constant = 1.0;

    bool operator==(const ProblemConfig&) const = default;
};

struct SolverConfig {
    double x_min = -5.0;
    double x_max = 5.0;
    std::size_t n_x = 401;
    std::size_t n_t = 0;  // 0: smallest CFL-admissible count
    Direction attitude = Direction::kUpper;
    OptDirection direction = OptDirection::kMinimize;

    bool operator==(const SolverConfig&) const = default;
};

enum class AttitudeChoice { kPessimist, kOptimist, kBoth };

struct MertonConfig {
    AttitudeChoice attitude = AttitudeChoice::kPessimist;
    double x0 = 1.0;
    double x_min = 0.4;
    double x_max = 2.5;
    std::size_t n_x = 201;
    std::size_t n_t = 0;
    std::size_t n_pi = 41;
    double pi_max = 0.0;
    std::size_t n_rho = 60;
    std::size_t n_a = 2000;  // steps of the A(t) integrator
    std::size_t n_policy_times = 11;

    bool operator==(const MertonConfig&) const = default;
};

struct SimulationConfig {
    std::size_t n_paths = 4000;
    std::size_t n_steps = 100;
    std::size_t n_segments = 4;
    std::size_t n_grid = 5;
    std::uint64_t seed = 0;
    std::size_t n_export_paths = 10;
    Direction direction = Direction::kUpper;

    bool operator==(const SimulationConfig&) const = default;
};

struct OutputConfig {
    std::string directory = ".";
    std::string prefix = "run";

    bool operator==(const OutputConfig&) const = default;
};

struct VerifyConfig {
    double perturb_a = 1.0;  // debug: scale A(t) before the residual check
    std::size_t n_points = 100;
    std::uint64_t residual_seed = 20240601;
    std::size_t property_trials = 1000;

    bool operator==(const VerifyConfig&) const = default;
};

struct RunConfig {
    AmbiguityConfig ambiguity;
    MarketConfig market;
    UtilityConfig utility;
    ProblemConfig problem;
    SolverConfig solver;
    MertonConfig merton;
    SimulationConfig simulation;
    OutputConfig output;
    VerifyConfig verify;

    bool operator==(const RunConfig&) const = default;
};

// Parses and validates (finite reals, 0 < lo <= hi, matching market
// dimensions, ...).  Missing keys keep the defaults above.
[[nodiscard]] RunConfig parse_config(std::string_view text);
[[nodiscard]] RunConfig load_config(const std::string& path);

// Every field in a fixed order with round-trip number formatting;
// parse_config(emit_config(c)) == c.
[[nodiscard]] std::string emit_config(const RunConfig& config);

[[nodiscard]] AmbiguitySet make_ambiguity(const RunConfig& config);
[[nodiscard]] MarketModel make_market(const RunConfig& config);
[[nodiscard]] CrraUtility make_utility(const RunConfig& config);

[[nodiscard]] const char* to_string(Payoff p) noexcept;
[[nodiscard]] const char* to_string(AttitudeChoice a) noexcept;

}  // namespace gctrl
