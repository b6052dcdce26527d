#pragma once

// G-Brownian motion and controlled G-SDEs simulated as families of classical
// SDEs, one per volatility scenario.  A scenario is a piecewise-constant
// schedule t -> v_t in Sigma; under it the increments of B are Gaussian with
// covariance v_t dt.  Upper / lower expectations are estimated by optimising
// the Monte Carlo mean over a finite family of schedules with common random
// numbers.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "gctrl/sublinear.hpp"

namespace gctrl {

// Piecewise-constant covariance schedule on right-open intervals
// [b_0, b_1), [b_1, b_2), ..., [b_k, inf) with b_0 = 0.
class VolSchedule {
public:
    VolSchedule() = default;  // empty; only valid as a placeholder
    [[nodiscard]] static VolSchedule constant(SymMatrix value);
    // `breakpoints` starts at 0 and is strictly increasing; one value per
    // breakpoint.
    VolSchedule(std::vector<double> breakpoints, std::vector<SymMatrix> values);

    [[nodiscard]] const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
    [[nodiscard]] const std::vector<SymMatrix>& values() const noexcept { return values_; }
    [[nodiscard]] std::size_t segment_at(double t) const noexcept;
    [[nodiscard]] const SymMatrix& value_at(double t) const noexcept {
        return values_[segment_at(t)];
    }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }
    [[nodiscard]] std::size_t dim() const noexcept {
        return values_.empty() ? 0 : values_.front().dim();
    }

    // Throws InvalidArgument if a value lies outside `set` or has the wrong dim.
    void validate(const AmbiguitySet& set) const;

private:
    std::vector<double> breakpoints_;
    std::vector<SymMatrix> values_;
};

struct PathConfig {
    std::size_t n_steps = 100;
    double horizon = 1.0;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 0;

    [[nodiscard]] double dt() const noexcept {
        return horizon / static_cast<double>(n_steps);
    }
    [[nodiscard]] double time(std::size_t k) const noexcept {
        return horizon * static_cast<double>(k) / static_cast<double>(n_steps);
    }
    void validate() const;
};

// Controlled SDE dx = f(t,x,u) dt + g(t,x,u) dB, u = control(t,x).
// Callbacks write into caller-provided buffers: drift gets m entries,
// diffusion gets m x d entries in row-major order.
struct SdeSpec {
    using ControlFn = std::function<void(double t, std::span<const double> x, std::span<double> u)>;
    using DriftFn = std::function<void(double t, std::span<const double> x,
                                       std::span<const double> u, std::span<double> out)>;
    using DomainFn = std::function<bool(std::span<const double> x)>;

    std::size_t dim_state = 1;
    std::size_t dim_noise = 1;
    std::size_t dim_control = 0;
    DriftFn drift;
    DriftFn diffusion;
    std::vector<double> initial_state;
    ControlFn control;  // may be empty when dim_control == 0
    DomainFn in_domain;  // optional; a false return aborts the simulation

    void validate() const;

    // f = 0, g = I_d, x(0) = 0: the state is B itself.
    [[nodiscard]] static SdeSpec brownian(std::size_t dim);
};

struct PathBundle {
    std::vector<double> times;   // n_steps + 1
    std::vector<double> states;  // n_paths x (n_steps + 1) x dim_state
    std::size_t n_paths = 0;
    std::size_t dim_state = 0;
    VolSchedule schedule;

    [[nodiscard]] std::size_t n_times() const noexcept { return times.size(); }
    [[nodiscard]] double state(std::size_t path, std::size_t k, std::size_t j = 0) const {
        return states[(path * n_times() + k) * dim_state + j];
    }
};

// Read-only view of one simulated path handed to path functionals.
struct PathView {
    std::span<const double> times;
    std::span<const double> states;  // (n_steps + 1) x dim
    std::size_t dim = 1;

    [[nodiscard]] std::size_t n_times() const noexcept { return times.size(); }
    [[nodiscard]] double state(std::size_t k, std::size_t j = 0) const {
        return states[k * dim + j];
    }
    [[nodiscard]] std::span<const double> state_vector(std::size_t k) const {
        return states.subspan(k * dim, dim);
    }
    [[nodiscard]] double terminal(std::size_t j = 0) const { return state(n_times() - 1, j); }
};

using PathFunctional = std::function<double(const PathView&)>;

struct ExpectationEstimate {
    double value = 0.0;
    double std_error = 0.0;
    VolSchedule best_schedule;
    std::size_t n_schedules_searched = 0;
};

// Fills `out` (n_steps x dim) with the standard normals of one path.  The
// stream depends only on (seed, path), so adding paths never reshuffles
// existing ones.
void path_normals(std::uint64_t seed, std::size_t path, std::span<double> out);

[[nodiscard]] PathBundle sample_gbm(const AmbiguitySet& set, const VolSchedule& schedule,
                                    const PathConfig& cfg);

// Euler-Maruyama.  Throws NumericError naming path and step on a non-finite
// state or a domain violation.
[[nodiscard]] PathBundle integrate_gsde(const SdeSpec& spec, const AmbiguitySet& set,
                                        const VolSchedule& schedule, const PathConfig& cfg);

struct ScheduleSearch {
    std::size_t n_segments = 4;
    std::size_t n_grid = 5;
};

// Equal-length segments, each taking one of `n_grid` evenly spaced variance
// levels in [lo^2, hi^2] (per diagonal entry when d > 1).  Enumerated in
// lexicographic order of level indices, first segment most significant.
[[nodiscard]] std::vector<VolSchedule> schedule_family(const AmbiguitySet& set, double horizon,
                                                       const ScheduleSearch& search);

// Optimises the sample mean of `functional` over schedule_family(); kUpper
// takes the max, kLower the min, ties to the earliest schedule.  All
// candidates share the same normals.
[[nodiscard]] ExpectationEstimate upper_expectation_mc(const SdeSpec& spec,
                                                       const AmbiguitySet& set,
                                                       const PathFunctional& functional,
                                                       const PathConfig& cfg,
                                                       const ScheduleSearch& search,
                                                       Direction direction);

struct MomentReport {
    double sup_moment = 0.0;     // max over schedules of E[max_s |x(s)|^ell]
    double k_moment = 0.0;       // sup_moment / (1 + |x0|^ell)
    double holder_slope = 0.0;   // mean fitted slope over schedules
    double slope_min = 0.0;
    double slope_max = 0.0;
    double k_holder = 0.0;       // max E|dx|^ell / ((1 + |x0|^ell) h^{ell/2})
    std::size_t n_schedules = 0;
};

// Moment and Hoelder-increment statistics over the constant schedules at
// `n_grid` variance levels.  The slope is an OLS fit of log E|x(t+h)-x(t)|^ell
// against log h for dyadic lags h = dt, 2dt, ... up to horizon / 8.
[[nodiscard]] MomentReport moment_bound_check(const SdeSpec& spec, const AmbiguitySet& set,
                                              const PathConfig& cfg, int ell,
                                              std::size_t n_grid = 5);

// path_id,time,state_0..state_{m-1}; time with 9 fractional digits, states
// with 17 significant digits, LF line endings.
void write_paths_csv(std::ostream& out, const PathBundle& bundle);

}  // namespace gctrl
