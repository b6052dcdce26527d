#pragma once

// Explicit monotone finite-difference solver for one-dimensional, fully
// nonlinear HJB equations of the form
//
//   V_t + opt_u { f(t,x,u) V_x + G(g(t,x,u)^2 V_xx) + L(t,x,u) - beta V } = 0,
//   V(T, x) = Phi(x),
//
// where G is the upper generator (sup over priors) or its lower mirror and
// opt is min or max.  The backward sweep is
//
//   V^k_i = V^{k+1}_i + dt * opt_u { f D_x V + G(g^2 D_xx V) + L - beta V_i }
//
// with D_x upwinded in the direction of f and D_xx central.  Under the CFL
// bound below every update is a monotone, nonexpansive map of V^{k+1}.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gctrl/gsde.hpp"
#include "gctrl/sublinear.hpp"

namespace gctrl {

enum class OptDirection { kMinimize, kMaximize };

[[nodiscard]] const char* to_string(OptDirection d) noexcept;

// Finite list of control values, each a vector of `dim` components.
class ControlSet {
public:
    ControlSet(std::size_t dim, std::vector<double> flat_values);

    [[nodiscard]] static ControlSet scalars(std::vector<double> values);
    [[nodiscard]] static ControlSet singleton(double value = 0.0) { return scalars({value}); }
    // Cartesian product; the last list varies fastest.
    [[nodiscard]] static ControlSet product(const std::vector<std::vector<double>>& axes);

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size() / dim_; }
    [[nodiscard]] std::span<const double> operator[](std::size_t i) const {
        return {values_.data() + i * dim_, dim_};
    }

private:
    std::size_t dim_;
    std::vector<double> values_;
};

enum class BoundaryKind {
    kOneSided,             // one-sided D_x, D_xx with the adjacent node's control
    kDirichlet,            // boundary_value(t, x)
    kLinearExtrapolation,  // V_0 = 2 V_1 - V_2 on the new level
};

[[nodiscard]] const char* to_string(BoundaryKind k) noexcept;

struct HjbProblem {
    using CoefficientFn = std::function<double(double t, double x, std::span<const double> u)>;

    CoefficientFn drift;         // f
    CoefficientFn diffusion;     // g (noise loading)
    CoefficientFn running_cost;  // running cost or reward
    std::function<double(double x)> terminal_cost;
    double discount = 0.0;  // beta
    double horizon = 1.0;   // T
    ControlSet controls = ControlSet::singleton();
    OptDirection opt_direction = OptDirection::kMinimize;
    Direction attitude = Direction::kUpper;
    AmbiguitySet ambiguity{1, 1.0, 1.0};

    BoundaryKind boundary = BoundaryKind::kOneSided;
    std::function<double(double t, double x)> boundary_value;  // kDirichlet only

    // Coefficients do not depend on t; the solver then tabulates them once.
    bool autonomous = false;

    void validate() const;
};

struct Grid1D {
    double x_min = -1.0;
    double x_max = 1.0;
    std::size_t n_x = 3;
    std::size_t n_t = 1;

    [[nodiscard]] double dx() const noexcept {
        return (x_max - x_min) / static_cast<double>(n_x - 1);
    }
    [[nodiscard]] double x(std::size_t i) const noexcept {
        return i + 1 == n_x ? x_max : x_min + dx() * static_cast<double>(i);
    }
    [[nodiscard]] double dt(double horizon) const noexcept {
        return horizon / static_cast<double>(n_t);
    }
    [[nodiscard]] double t(std::size_t k, double horizon) const noexcept {
        return horizon * static_cast<double>(k) / static_cast<double>(n_t);
    }
    void validate() const;
};

struct HjbSolution {
    Grid1D grid;
    double horizon = 1.0;
    // Levels k_begin..n_t are stored; a full solve has k_begin == 0.
    std::size_t k_begin = 0;
    std::vector<double> values;          // (n_t + 1 - k_begin) x n_x
    std::vector<std::uint32_t> policy;   // (n_t - k_begin) x n_x
    BoundaryKind boundary_kind = BoundaryKind::kOneSided;

    [[nodiscard]] double value(std::size_t k, std::size_t i) const {
        return values[(k - k_begin) * grid.n_x + i];
    }
    [[nodiscard]] std::span<const double> level(std::size_t k) const {
        return {values.data() + (k - k_begin) * grid.n_x, grid.n_x};
    }
    [[nodiscard]] std::uint32_t control_index(std::size_t k, std::size_t i) const {
        return policy[(k - k_begin) * grid.n_x + i];
    }
    [[nodiscard]] double time(std::size_t k) const noexcept { return grid.t(k, horizon); }
    // Piecewise-linear interpolation in x on level k (clamped to the grid).
    [[nodiscard]] double interpolate(std::size_t k, double x) const;
};

// Largest dt for which the explicit scheme is monotone:
//   dx^2 / (hi^2 max g^2 + dx max |f| + dx^2 beta),
// with the maxima over controls and x nodes, sampled at the start, middle and
// end of the time grid.
[[nodiscard]] double cfl_time_step(const HjbProblem& problem, const Grid1D& grid);

// Smallest n_t satisfying cfl_time_step() for the given spatial grid.
[[nodiscard]] std::size_t min_time_steps(const HjbProblem& problem, Grid1D grid);

// Full backward sweep.  Throws PreconditionError if dt violates the CFL bound
// and NumericError naming (k, i) on a non-finite value.
[[nodiscard]] HjbSolution solve(const HjbProblem& problem, const Grid1D& grid);

// Sweep from level k_end (with the given slice as data) down to k_begin.
[[nodiscard]] HjbSolution solve_window(const HjbProblem& problem, const Grid1D& grid,
                                       std::size_t k_begin, std::size_t k_end,
                                       std::span<const double> terminal_slice);

// Solves on [0,T] directly and by composition through t_bar ([t_bar,T] first,
// its t_bar slice then used as terminal data on [0,t_bar]); returns the max
// |V_direct(0,.) - V_composed(0,.)|.  t_bar must be an interior grid time.
[[nodiscard]] double dpp_composition_check(const HjbProblem& problem, const Grid1D& grid,
                                           double t_bar);

// Feedback control from a solved policy: the time level containing t and the
// nearest node in x.
[[nodiscard]] std::span<const double> policy_control(const HjbProblem& problem,
                                                     const HjbSolution& solution, double t,
                                                     double x);

// Monte Carlo value of the extracted feedback policy: running cost plus
// terminal cost, discounted at beta, optimised over volatility schedules in
// the direction of problem.attitude.  Starts at x0.
[[nodiscard]] ExpectationEstimate evaluate_policy_mc(const HjbProblem& problem,
                                                     const HjbSolution& solution,
                                                     const AmbiguitySet& set,
                                                     const PathConfig& cfg, double x0,
                                                     const ScheduleSearch& search = {});

// t,x,value,control_index,control_value.  Multi-component controls are joined
// with ';'.  The terminal level has empty control fields.
void write_solution_csv(std::ostream& out, const HjbProblem& problem, const HjbSolution& solution);

// key=value sidecar describing grid and problem metadata.
void write_solution_metadata(std::ostream& out, const HjbProblem& problem,
                             const HjbSolution& solution);

}  // namespace gctrl
