#include "gctrl/hjb.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "gctrl/errors.hpp"
#include "gctrl/parallel.hpp"

namespace gctrl {

namespace {

constexpr double kCflSlack = 1e-12;

// Pointwise second-order generator on the scalar g^2 * V_xx.  Same
// arithmetic as g_scalar(), without the per-call dimension check.
struct ScalarGenerator {
    double pos_coef;  // variance applied when the argument is positive
    double neg_coef;

    ScalarGenerator(const AmbiguitySet& set, Direction direction)
        : pos_coef(direction == Direction::kUpper ? set.sigma_hi_sq() : set.sigma_lo_sq()),
          neg_coef(direction == Direction::kUpper ? set.sigma_lo_sq() : set.sigma_hi_sq()) {}

    [[nodiscard]] double operator()(double a) const noexcept {
        return a > 0.0 ? 0.5 * (pos_coef * a) : 0.5 * (neg_coef * a);
    }
};

struct CoefficientMaxima {
    double g2 = 0.0;
    double f = 0.0;
};

CoefficientMaxima coefficient_maxima(const HjbProblem& problem, const Grid1D& grid, double t) {
    CoefficientMaxima out;
    for (std::size_t i = 0; i < grid.n_x; ++i) {
        const double x = grid.x(i);
        for (std::size_t u = 0; u < problem.controls.size(); ++u) {
            const double g = problem.diffusion(t, x, problem.controls[u]);
            out.g2 = std::max(out.g2, g * g);
            out.f = std::max(out.f, std::abs(problem.drift(t, x, problem.controls[u])));
        }
    }
    return out;
}

double cfl_from_maxima(const CoefficientMaxima& m, double hi, double dx, double beta) {
    const double denom = hi * m.g2 + dx * m.f + dx * dx * beta;
    return denom > 0.0 ? dx * dx / denom : std::numeric_limits<double>::infinity();
}

// Coefficients of one time level, laid out [node][control].
struct LevelTable {
    std::vector<double> f, g2, run;

    void fill(const HjbProblem& problem, const Grid1D& grid, double t) {
        const std::size_t nu = problem.controls.size();
        f.resize(grid.n_x * nu);
        g2.resize(grid.n_x * nu);
        run.resize(grid.n_x * nu);
        for (std::size_t i = 0; i < grid.n_x; ++i) {
            const double x = grid.x(i);
            for (std::size_t u = 0; u < nu; ++u) {
                const auto c = problem.controls[u];
                const double g = problem.diffusion(t, x, c);
                f[i * nu + u] = problem.drift(t, x, c);
                g2[i * nu + u] = g * g;
                run[i * nu + u] = problem.running_cost(t, x, c);
            }
        }
    }
};

void check_level_cfl(const LevelTable& table, double hi, double dx, double dt, double beta) {
    CoefficientMaxima m;
    for (std::size_t j = 0; j < table.f.size(); ++j) {
        m.g2 = std::max(m.g2, table.g2[j]);
        m.f = std::max(m.f, std::abs(table.f[j]));
    }
    const double bound = cfl_from_maxima(m, hi, dx, beta);
    if (dt > bound * (1.0 + kCflSlack)) {
        throw PreconditionError(
            fmt::format("time step {:.6g} exceeds the monotonicity bound {:.6g}", dt, bound),
            bound);
    }
}

}  // namespace

const char* to_string(OptDirection d) noexcept {
    return d == OptDirection::kMinimize ? "minimize" : "maximize";
}

const char* to_string(BoundaryKind k) noexcept {
    switch (k) {
        case BoundaryKind::kOneSided: return "one_sided";
        case BoundaryKind::kDirichlet: return "dirichlet";
        case BoundaryKind::kLinearExtrapolation: return "linear_extrapolation";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// ControlSet

ControlSet::ControlSet(std::size_t dim, std::vector<double> flat_values)
    : dim_(dim), values_(std::move(flat_values)) {
    if (dim_ == 0) throw InvalidArgument("control dimension must be positive");
    if (values_.empty() || values_.size() % dim_ != 0) {
        throw InvalidArgument("control list must be non-empty with whole control vectors");
    }
}

ControlSet ControlSet::scalars(std::vector<double> values) {
    return ControlSet(1, std::move(values));
}

ControlSet ControlSet::product(const std::vector<std::vector<double>>& axes) {
    if (axes.empty()) throw InvalidArgument("control product needs at least one axis");
    std::size_t total = 1;
    for (const auto& a : axes) {
        if (a.empty()) throw InvalidArgument("control axis is empty");
        total *= a.size();
    }
    std::vector<double> flat;
    flat.reserve(total * axes.size());
    for (std::size_t c = 0; c < total; ++c) {
        std::vector<double> v(axes.size());
        std::size_t code = c;
        for (std::size_t j = axes.size(); j-- > 0;) {
            v[j] = axes[j][code % axes[j].size()];
            code /= axes[j].size();
        }
        flat.insert(flat.end(), v.begin(), v.end());
    }
    return ControlSet(axes.size(), std::move(flat));
}

// ---------------------------------------------------------------------------
// Problem / grid

void HjbProblem::validate() const {
    if (!drift || !diffusion || !running_cost || !terminal_cost) {
        throw InvalidArgument("HJB problem needs drift, diffusion, running and terminal costs");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon must be > 0");
    if (!(discount >= 0.0)) throw InvalidArgument("discount must be >= 0");
    if (controls.size() == 0) throw InvalidArgument("control list is empty");
    if (ambiguity.dim() != 1) throw InvalidArgument("HJB solver needs a one-dimensional ambiguity set");
    if (boundary == BoundaryKind::kDirichlet && !boundary_value) {
        throw InvalidArgument("Dirichlet boundary requires boundary_value");
    }
}

void Grid1D::validate() const {
    if (!(x_min < x_max)) throw InvalidArgument("grid needs x_min < x_max");
    if (n_x < 3) throw InvalidArgument("grid needs n_x >= 3");
    if (n_t < 1) throw InvalidArgument("grid needs n_t >= 1");
}

double HjbSolution::interpolate(std::size_t k, double x) const {
    const auto v = level(k);
    const double dx = grid.dx();
    const double s = std::clamp((x - grid.x_min) / dx, 0.0, static_cast<double>(grid.n_x - 1));
    const auto i = std::min(static_cast<std::size_t>(s), grid.n_x - 2);
    const double w = s - static_cast<double>(i);
    return (1.0 - w) * v[i] + w * v[i + 1];
}

double cfl_time_step(const HjbProblem& problem, const Grid1D& grid) {
    problem.validate();
    grid.validate();
    const double dx = grid.dx();
    const double hi = problem.ambiguity.sigma_hi_sq();
    std::vector<std::size_t> levels{0};
    if (!problem.autonomous) levels.insert(levels.end(), {grid.n_t / 2, grid.n_t - 1});
    double bound = std::numeric_limits<double>::infinity();
    for (std::size_t k : levels) {
        const auto m = coefficient_maxima(problem, grid, grid.t(k, problem.horizon));
        bound = std::min(bound, cfl_from_maxima(m, hi, dx, problem.discount));
    }
    return bound;
}

std::size_t min_time_steps(const HjbProblem& problem, Grid1D grid) {
    grid.n_t = std::max<std::size_t>(grid.n_t, 1);  // the bound is sampled on the time grid
    for (int iter = 0; iter < 8; ++iter) {
        const double bound = cfl_time_step(problem, grid);
        const auto n = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(problem.horizon / bound * (1.0 - 1e-14))));
        if (n == grid.n_t) return n;
        grid.n_t = n;
    }
    return grid.n_t;
}

// ---------------------------------------------------------------------------
// Sweep

HjbSolution solve_window(const HjbProblem& problem, const Grid1D& grid, std::size_t k_begin,
                         std::size_t k_end, std::span<const double> terminal_slice) {
    problem.validate();
    grid.validate();
    if (!(k_begin < k_end && k_end <= grid.n_t)) {
        throw InvalidArgument("time window must satisfy k_begin < k_end <= n_t");
    }
    if (terminal_slice.size() != grid.n_x) {
        throw InvalidArgument("terminal slice has the wrong number of nodes");
    }

    const double dx = grid.dx();
    const double inv_dx = 1.0 / dx;
    const double inv_dx2 = 1.0 / (dx * dx);
    const double dt = grid.dt(problem.horizon);
    const double beta = problem.discount;
    const double hi = problem.ambiguity.sigma_hi_sq();
    const std::size_t n = grid.n_x;
    const std::size_t nu = problem.controls.size();
    const bool maximize = problem.opt_direction == OptDirection::kMaximize;
    const ScalarGenerator gen(problem.ambiguity, problem.attitude);

    {
        const double bound = cfl_time_step(problem, grid);
        if (dt > bound * (1.0 + kCflSlack)) {
            throw PreconditionError(
                fmt::format("time step {:.6g} exceeds the monotonicity bound {:.6g} "
                            "(need n_t >= {})",
                            dt, bound,
                            static_cast<std::size_t>(std::ceil(problem.horizon / bound))),
                bound);
        }
    }

    HjbSolution sol;
    sol.grid = grid;
    sol.horizon = problem.horizon;
    sol.k_begin = k_begin;
    sol.boundary_kind = problem.boundary;
    // Only levels k_begin..k_end are materialised; levels past k_end are
    // never addressed for a window solve.
    const std::size_t n_levels = k_end - k_begin + 1;
    sol.values.assign(n_levels * n, 0.0);
    sol.policy.assign((n_levels - 1) * n, 0);
    std::copy(terminal_slice.begin(), terminal_slice.end(),
              sol.values.begin() + static_cast<std::ptrdiff_t>((k_end - k_begin) * n));

    LevelTable table;
    if (problem.autonomous) {
        table.fill(problem, grid, 0.0);
        check_level_cfl(table, hi, dx, dt, beta);
    }

    const int threads = worker_threads();
    for (std::size_t k = k_end; k-- > k_begin;) {
        const double t = grid.t(k, problem.horizon);
        if (!problem.autonomous) {
            table.fill(problem, grid, t);
            check_level_cfl(table, hi, dx, dt, beta);
        }
        const double* next = sol.values.data() + (k + 1 - k_begin) * n;
        double* cur = sol.values.data() + (k - k_begin) * n;
        std::uint32_t* pol = sol.policy.data() + (k - k_begin) * n;

        std::atomic<long> bad_node{-1};
        const auto n_interior = static_cast<long>(n - 2);
#ifdef GCTRL_HAVE_OPENMP
#pragma omp parallel for num_threads(threads) if (n_interior * static_cast<long>(nu) > 20000)
#endif
        for (long jj = 0; jj < n_interior; ++jj) {
            const auto i = static_cast<std::size_t>(jj) + 1;
            const double vm = next[i - 1];
            const double v0 = next[i];
            const double vp = next[i + 1];
            const double d_fwd = (vp - v0) * inv_dx;
            const double d_bwd = (v0 - vm) * inv_dx;
            const double d_xx = (vp - 2.0 * v0 + vm) * inv_dx2;
            const double* f = table.f.data() + i * nu;
            const double* g2 = table.g2.data() + i * nu;
            const double* run = table.run.data() + i * nu;

            double best = maximize ? -std::numeric_limits<double>::infinity()
                                   : std::numeric_limits<double>::infinity();
            std::uint32_t arg = 0;
            for (std::size_t u = 0; u < nu; ++u) {
                const double h = (f[u] > 0.0 ? f[u] * d_fwd : f[u] * d_bwd) + gen(g2[u] * d_xx) +
                                 run[u] - beta * v0;
                if (maximize ? h > best : h < best) {
                    best = h;
                    arg = static_cast<std::uint32_t>(u);
                }
            }
            cur[i] = v0 + dt * best;
            pol[i] = arg;
            if (!std::isfinite(cur[i])) bad_node.store(static_cast<long>(i));
        }
        (void)threads;
        if (bad_node.load() >= 0) {
            throw NumericError(fmt::format("non-finite value at time level k={}, node i={}", k,
                                           bad_node.load()));
        }

        pol[0] = pol[1];
        pol[n - 1] = pol[n - 2];
        switch (problem.boundary) {
            case BoundaryKind::kOneSided: {
                const std::size_t u0 = pol[0];
                const std::size_t un = pol[n - 1];
                const double d_lo = (next[1] - next[0]) * inv_dx;
                const double dxx_lo = (next[0] - 2.0 * next[1] + next[2]) * inv_dx2;
                cur[0] = next[0] + dt * (table.f[u0] * d_lo + gen(table.g2[u0] * dxx_lo) +
                                         table.run[u0] - beta * next[0]);
                const std::size_t last = (n - 1) * nu;
                const double d_hi = (next[n - 1] - next[n - 2]) * inv_dx;
                const double dxx_hi = (next[n - 1] - 2.0 * next[n - 2] + next[n - 3]) * inv_dx2;
                cur[n - 1] = next[n - 1] + dt * (table.f[last + un] * d_hi +
                                                 gen(table.g2[last + un] * dxx_hi) +
                                                 table.run[last + un] - beta * next[n - 1]);
                break;
            }
            case BoundaryKind::kDirichlet:
                cur[0] = problem.boundary_value(t, grid.x(0));
                cur[n - 1] = problem.boundary_value(t, grid.x(n - 1));
                break;
            case BoundaryKind::kLinearExtrapolation:
                cur[0] = 2.0 * cur[1] - cur[2];
                cur[n - 1] = 2.0 * cur[n - 2] - cur[n - 3];
                break;
        }
        if (!std::isfinite(cur[0]) || !std::isfinite(cur[n - 1])) {
            throw NumericError(fmt::format("non-finite boundary value at time level k={}", k));
        }
    }
    return sol;
}

HjbSolution solve(const HjbProblem& problem, const Grid1D& grid) {
    problem.validate();
    grid.validate();
    std::vector<double> terminal(grid.n_x);
    for (std::size_t i = 0; i < grid.n_x; ++i) terminal[i] = problem.terminal_cost(grid.x(i));
    return solve_window(problem, grid, 0, grid.n_t, terminal);
}

double dpp_composition_check(const HjbProblem& problem, const Grid1D& grid, double t_bar) {
    grid.validate();
    const double dt = grid.dt(problem.horizon);
    const auto k_bar = static_cast<long long>(std::llround(t_bar / dt));
    if (k_bar <= 0 || k_bar >= static_cast<long long>(grid.n_t) ||
        std::abs(grid.t(static_cast<std::size_t>(k_bar), problem.horizon) - t_bar) >
            1e-9 * std::max(1.0, problem.horizon)) {
        throw InvalidArgument(fmt::format("t_bar={} is not an interior time of the grid", t_bar));
    }
    const auto kb = static_cast<std::size_t>(k_bar);

    const HjbSolution direct = solve(problem, grid);
    std::vector<double> terminal(grid.n_x);
    for (std::size_t i = 0; i < grid.n_x; ++i) terminal[i] = problem.terminal_cost(grid.x(i));
    const HjbSolution tail = solve_window(problem, grid, kb, grid.n_t, terminal);
    const HjbSolution head = solve_window(problem, grid, 0, kb, tail.level(kb));

    double gap = 0.0;
    const auto a = direct.level(0);
    const auto b = head.level(0);
    for (std::size_t i = 0; i < grid.n_x; ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
    return gap;
}

// ---------------------------------------------------------------------------
// Policy evaluation

std::span<const double> policy_control(const HjbProblem& problem, const HjbSolution& solution,
                                       double t, double x) {
    const Grid1D& grid = solution.grid;
    const double dt = grid.dt(solution.horizon);
    const std::size_t k_last = solution.k_begin + solution.policy.size() / grid.n_x - 1;
    const double s = std::floor(t / dt + 1e-9);
    const std::size_t k =
        std::clamp(s < 0.0 ? std::size_t{0} : static_cast<std::size_t>(s), solution.k_begin, k_last);
    const double pos = std::round((x - grid.x_min) / grid.dx());
    const std::size_t i =
        pos <= 0.0 ? 0 : std::min(static_cast<std::size_t>(pos), grid.n_x - 1);
    return problem.controls[solution.control_index(k, i)];
}

ExpectationEstimate evaluate_policy_mc(const HjbProblem& problem, const HjbSolution& solution,
                                       const AmbiguitySet& set, const PathConfig& cfg, double x0,
                                       const ScheduleSearch& search) {
    problem.validate();
    if (solution.k_begin != 0 || solution.policy.empty()) {
        throw InvalidArgument("policy evaluation needs a full solution from t = 0");
    }
    const std::size_t cdim = problem.controls.dim();

    SdeSpec spec;
    spec.dim_state = 1;
    spec.dim_noise = 1;
    spec.dim_control = cdim;
    spec.initial_state = {x0};
    spec.control = [&problem, &solution](double t, std::span<const double> x, std::span<double> u) {
        const auto c = policy_control(problem, solution, t, x[0]);
        std::copy(c.begin(), c.end(), u.begin());
    };
    spec.drift = [&problem](double t, std::span<const double> x, std::span<const double> u,
                            std::span<double> out) { out[0] = problem.drift(t, x[0], u); };
    spec.diffusion = [&problem](double t, std::span<const double> x, std::span<const double> u,
                                std::span<double> out) { out[0] = problem.diffusion(t, x[0], u); };

    const double beta = problem.discount;
    const PathFunctional functional = [&problem, &solution, beta](const PathView& path) {
        const std::size_t n_steps = path.n_times() - 1;
        double acc = 0.0;
        for (std::size_t k = 0; k < n_steps; ++k) {
            const double t = path.times[k];
            const double x = path.state(k);
            const double h = path.times[k + 1] - t;
            acc += std::exp(-beta * t) *
                   problem.running_cost(t, x, policy_control(problem, solution, t, x)) * h;
        }
        const double t_end = path.times[n_steps];
        return acc + std::exp(-beta * t_end) * problem.terminal_cost(path.terminal());
    };
    return upper_expectation_mc(spec, set, functional, cfg, search, problem.attitude);
}

// ---------------------------------------------------------------------------
// Export

void write_solution_csv(std::ostream& out, const HjbProblem& problem, const HjbSolution& solution) {
    const Grid1D& grid = solution.grid;
    const std::size_t n_levels = solution.values.size() / grid.n_x;
    const std::size_t k_last = solution.k_begin + n_levels - 1;
    out << "t,x,value,control_index,control_value\n";
    for (std::size_t k = solution.k_begin; k <= k_last; ++k) {
        const double t = solution.time(k);
        for (std::size_t i = 0; i < grid.n_x; ++i) {
            std::string line = fmt::format("{:.17g},{:.17g},{:.17g},", t, grid.x(i), solution.value(k, i));
            if (k < k_last) {
                const auto idx = solution.control_index(k, i);
                line += fmt::format("{},", idx);
                const auto c = problem.controls[idx];
                for (std::size_t j = 0; j < c.size(); ++j) {
                    if (j > 0) line += ';';
                    line += fmt::format("{:.17g}", c[j]);
                }
            } else {
                line += ",";
            }
            out << line << '\n';
        }
    }
}

void write_solution_metadata(std::ostream& out, const HjbProblem& problem,
                             const HjbSolution& solution) {
    const Grid1D& g = solution.grid;
    out << fmt::format("x_min={:.17g}\n", g.x_min) << fmt::format("x_max={:.17g}\n", g.x_max)
        << fmt::format("n_x={}\n", g.n_x) << fmt::format("n_t={}\n", g.n_t)
        << fmt::format("dx={:.17g}\n", g.dx())
        << fmt::format("dt={:.17g}\n", g.dt(solution.horizon))
        << fmt::format("horizon={:.17g}\n", solution.horizon)
        << fmt::format("k_begin={}\n", solution.k_begin)
        << fmt::format("discount={:.17g}\n", problem.discount)
        << fmt::format("attitude={}\n", to_string(problem.attitude))
        << fmt::format("opt_direction={}\n", to_string(problem.opt_direction))
        << fmt::format("boundary={}\n", to_string(solution.boundary_kind))
        << fmt::format("sigma_lo_sq={:.17g}\n", problem.ambiguity.sigma_lo_sq())
        << fmt::format("sigma_hi_sq={:.17g}\n", problem.ambiguity.sigma_hi_sq())
        << fmt::format("n_controls={}\n", problem.controls.size())
        << fmt::format("control_dim={}\n", problem.controls.dim());
}

}  // namespace gctrl
