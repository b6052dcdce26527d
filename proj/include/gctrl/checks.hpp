#pragma once

// Cross-checks and randomized property runners shared by the `verify`
// command and the acceptance binary.  Each returns measured quantities
// alongside the verdict so callers can report gaps, not just pass/fail.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gctrl/config.hpp"
#include "gctrl/hjb.hpp"
#include "gctrl/merton.hpp"
#include "gctrl/sublinear.hpp"

namespace gctrl {

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct PropertyOutcome {
    std::string name;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double worst = 0.0;  // largest violation seen (0 when none)
    std::string first_failure;

    [[nodiscard]] bool passed() const noexcept { return trials > 0 && failures == 0; }
};

// dx = drift dt + volatility dB with terminal payoff, no running cost, a
// singleton control set and the given generator side.
[[nodiscard]] HjbProblem scalar_problem(const ProblemConfig& p, const AmbiguitySet& set,
                                        Direction attitude, OptDirection direction);

// Terminal x^2 (sign > 0) or -x^2 (sign < 0) with f = 0, g = 1, beta = 0.
[[nodiscard]] HjbProblem g_heat_problem(const AmbiguitySet& set, double horizon, double sign);

// V(0,x) for the G-heat problem on `grid` (n_t = 0: CFL minimum).
struct HeatRun {
    double value = 0.0;
    double expected = 0.0;
    std::size_t n_t = 0;
    double dpp_gap = 0.0;
};
[[nodiscard]] HeatRun run_g_heat(const AmbiguitySet& set, Grid1D grid, double horizon, double sign,
                                 double x0);

struct MertonRun {
    ClosedForm closed_form;
    HjbSolution pde;
    HjbProblem problem;
    double max_rel_error = 0.0;  // PDE vs closed form at t = 0, interior window
    double max_pi_error = 0.0;   // |pi(PDE) - pi_hat| over interior window, all levels
    double pi_hat = 0.0;
    double dpp_gap = 0.0;
};

// Solves the wealth PDE and compares against the resolved closed form.
// The interior window drops the 10% of nodes nearest each boundary.
[[nodiscard]] MertonRun run_merton(const MarketModel& m, const CrraUtility& u,
                                   const AmbiguitySet& set, Attitude attitude, double horizon,
                                   const Grid1D& grid, const MertonPdeOptions& options,
                                   std::size_t n_a = 2000, bool with_dpp = true);

[[nodiscard]] std::pair<std::size_t, std::size_t> interior_window(std::size_t n_x);

// Randomized property suites.  Each draws `trials` cases from a generator
// seeded with `seed`.
[[nodiscard]] PropertyOutcome property_g_subadditivity(std::size_t trials, std::uint64_t seed);
[[nodiscard]] PropertyOutcome property_g_homogeneity(std::size_t trials, std::uint64_t seed);
[[nodiscard]] PropertyOutcome property_g_direction_order(std::size_t trials, std::uint64_t seed);
[[nodiscard]] PropertyOutcome property_g_maximizer(std::size_t trials, std::uint64_t seed);
[[nodiscard]] PropertyOutcome property_g_brute_force(std::size_t trials, std::uint64_t seed);
[[nodiscard]] PropertyOutcome property_comparison_principle(std::size_t trials, std::uint64_t seed);
[[nodiscard]] PropertyOutcome property_fund_weights(std::size_t trials, std::uint64_t seed);
[[nodiscard]] PropertyOutcome property_pi_decreasing_in_ambiguity(std::size_t trials,
                                                                  std::uint64_t seed);
[[nodiscard]] PropertyOutcome property_csv_byte_stability(std::size_t trials, std::uint64_t seed);

[[nodiscard]] std::vector<PropertyOutcome> run_property_suites(std::size_t trials,
                                                               std::uint64_t seed);

// The full cross-check suite on a run configuration.
[[nodiscard]] std::vector<CheckResult> run_verification(const RunConfig& config);

}  // namespace gctrl
