#include "gctrl/gsde.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include <fmt/format.h>

#include "gctrl/errors.hpp"
#include "gctrl/parallel.hpp"

namespace gctrl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Per-step square roots of the schedule, sampled at the left end of each step.
struct StepRoots {
    std::vector<Eigen::MatrixXd> roots;     // one per schedule segment
    std::vector<std::size_t> segment;       // one per step
};

StepRoots prepare_roots(const VolSchedule& schedule, const PathConfig& cfg) {
    StepRoots out;
    out.roots.reserve(schedule.values().size());
    for (const auto& v : schedule.values()) out.roots.push_back(v.sqrt().matrix());
    out.segment.resize(cfg.n_steps);
    for (std::size_t k = 0; k < cfg.n_steps; ++k) out.segment[k] = schedule.segment_at(cfg.time(k));
    return out;
}

void check_schedule(const VolSchedule& schedule, const AmbiguitySet& set) {
    if (schedule.empty()) throw InvalidArgument("volatility schedule has no segments");
    schedule.validate(set);
}

// Scratch buffers for one path.
struct PathWork {
    std::vector<double> x, u, f, g, db;

    explicit PathWork(const SdeSpec& spec)
        : x(spec.dim_state),
          u(spec.dim_control),
          f(spec.dim_state),
          g(spec.dim_state * spec.dim_noise),
          db(spec.dim_noise) {}
};

// Euler-Maruyama for one path; `states` receives (n_steps + 1) x m values.
void simulate_path(const SdeSpec& spec, const StepRoots& roots, const PathConfig& cfg,
                   std::span<const double> normals, std::size_t path, PathWork& w,
                   std::span<double> states) {
    const std::size_t m = spec.dim_state;
    const std::size_t d = spec.dim_noise;
    const double dt = cfg.dt();
    const double sqrt_dt = std::sqrt(dt);

    std::copy(spec.initial_state.begin(), spec.initial_state.end(), states.begin());
    for (std::size_t k = 0; k < cfg.n_steps; ++k) {
        const double t = cfg.time(k);
        const std::span<const double> x(states.data() + k * m, m);
        if (spec.dim_control > 0) spec.control(t, x, w.u);
        spec.drift(t, x, w.u, w.f);
        spec.diffusion(t, x, w.u, w.g);

        const Eigen::MatrixXd& root = roots.roots[roots.segment[k]];
        const double* xi = normals.data() + k * d;
        for (std::size_t a = 0; a < d; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < d; ++b) {
                s += root(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * xi[b];
            }
            w.db[a] = sqrt_dt * s;
        }

        double* next = states.data() + (k + 1) * m;
        for (std::size_t i = 0; i < m; ++i) {
            double noise = 0.0;
            for (std::size_t j = 0; j < d; ++j) noise += w.g[i * d + j] * w.db[j];
            next[i] = x[i] + w.f[i] * dt + noise;
            if (!std::isfinite(next[i])) {
                throw NumericError("non-finite state at path " + std::to_string(path) +
                                   ", step " + std::to_string(k + 1));
            }
        }
        if (spec.in_domain && !spec.in_domain(std::span<const double>(next, m))) {
            throw NumericError("state left the admissible domain at path " +
                               std::to_string(path) + ", step " + std::to_string(k + 1));
        }
    }
}

std::vector<double> all_normals(const PathConfig& cfg, std::size_t d) {
    const std::size_t per_path = cfg.n_steps * d;
    std::vector<double> out(cfg.n_paths * per_path);
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
        path_normals(cfg.seed, p, std::span<double>(out.data() + p * per_path, per_path));
    }
    return out;
}

std::vector<double> variance_levels(const AmbiguitySet& set, std::size_t n_grid) {
    if (n_grid < 1) throw InvalidArgument("n_grid must be >= 1");
    if (n_grid == 1) return {set.sigma_hi_sq()};
    std::vector<double> levels(n_grid);
    const double lo = set.sigma_lo_sq();
    const double hi = set.sigma_hi_sq();
    for (std::size_t i = 0; i < n_grid; ++i) {
        levels[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_grid - 1);
    }
    levels.back() = hi;
    return levels;
}

}  // namespace

// ---------------------------------------------------------------------------
// VolSchedule

VolSchedule VolSchedule::constant(SymMatrix value) {
    return VolSchedule({0.0}, {std::move(value)});
}

VolSchedule::VolSchedule(std::vector<double> breakpoints, std::vector<SymMatrix> values)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
    if (breakpoints_.empty() || breakpoints_.front() != 0.0) {
        throw InvalidArgument("schedule breakpoints must start at 0");
    }
    if (values_.size() != breakpoints_.size()) {
        throw InvalidArgument("schedule needs exactly one value per interval");
    }
    for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
        if (!(breakpoints_[i] > breakpoints_[i - 1]) || !std::isfinite(breakpoints_[i])) {
            throw InvalidArgument("schedule breakpoints must be strictly increasing");
        }
    }
    for (const auto& v : values_) {
        if (v.dim() != values_.front().dim()) {
            throw InvalidArgument("schedule values have inconsistent dimensions");
        }
    }
}

std::size_t VolSchedule::segment_at(double t) const noexcept {
    // Right-open intervals; the slack absorbs rounding in k * T / n.
    const double probe = t + 1e-12 * std::max(1.0, std::abs(t));
    const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), probe);
    return it == breakpoints_.begin() ? 0 : static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
}

void VolSchedule::validate(const AmbiguitySet& set) const {
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!contains(set, values_[i])) {
            throw InvalidArgument("schedule segment " + std::to_string(i) +
                                  " is not in the ambiguity set");
        }
    }
}

void PathConfig::validate() const {
    if (n_steps == 0) throw InvalidArgument("n_steps must be positive");
    if (n_paths == 0) throw InvalidArgument("n_paths must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw InvalidArgument("horizon must be a positive finite time");
    }
}

void SdeSpec::validate() const {
    if (dim_state == 0 || dim_noise == 0) throw InvalidArgument("SDE dimensions must be positive");
    if (!drift || !diffusion) throw InvalidArgument("SDE needs drift and diffusion callbacks");
    if (initial_state.size() != dim_state) {
        throw InvalidArgument("initial state has " + std::to_string(initial_state.size()) +
                              " entries, expected " + std::to_string(dim_state));
    }
    if (dim_control > 0 && !control) throw InvalidArgument("SDE with controls needs a control map");
}

SdeSpec SdeSpec::brownian(std::size_t dim) {
    SdeSpec spec;
    spec.dim_state = dim;
    spec.dim_noise = dim;
    spec.drift = [](double, std::span<const double>, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    spec.diffusion = [dim](double, std::span<const double>, std::span<const double>,
                           std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < dim; ++i) out[i * dim + i] = 1.0;
    };
    spec.initial_state.assign(dim, 0.0);
    return spec;
}

// ---------------------------------------------------------------------------
// Simulation

void path_normals(std::uint64_t seed, std::size_t path, std::span<double> out) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(path))));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& z : out) z = normal(rng);
}

PathBundle sample_gbm(const AmbiguitySet& set, const VolSchedule& schedule, const PathConfig& cfg) {
    return integrate_gsde(SdeSpec::brownian(set.dim()), set, schedule, cfg);
}

PathBundle integrate_gsde(const SdeSpec& spec, const AmbiguitySet& set,
                          const VolSchedule& schedule, const PathConfig& cfg) {
    cfg.validate();
    spec.validate();
    check_schedule(schedule, set);
    if (spec.dim_noise != set.dim()) {
        throw InvalidArgument("noise dimension does not match the ambiguity set");
    }
    const StepRoots roots = prepare_roots(schedule, cfg);

    PathBundle bundle;
    bundle.n_paths = cfg.n_paths;
    bundle.dim_state = spec.dim_state;
    bundle.schedule = schedule;
    bundle.times.resize(cfg.n_steps + 1);
    for (std::size_t k = 0; k <= cfg.n_steps; ++k) bundle.times[k] = cfg.time(k);
    const std::size_t per_path = (cfg.n_steps + 1) * spec.dim_state;
    bundle.states.resize(cfg.n_paths * per_path);

    PathWork work(spec);
    std::vector<double> normals(cfg.n_steps * spec.dim_noise);
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
        path_normals(cfg.seed, p, normals);
        simulate_path(spec, roots, cfg, normals, p, work,
                      std::span<double>(bundle.states.data() + p * per_path, per_path));
    }
    return bundle;
}

std::vector<VolSchedule> schedule_family(const AmbiguitySet& set, double horizon,
                                         const ScheduleSearch& search) {
    if (search.n_segments < 1) throw InvalidArgument("n_segments must be >= 1");
    if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
    const auto levels = variance_levels(set, search.n_grid);
    const std::size_t d = set.dim();

    // Candidate covariances for one segment: diagonal matrices over levels^d.
    std::vector<SymMatrix> per_segment;
    std::size_t n_diag = 1;
    for (std::size_t j = 0; j < d; ++j) n_diag *= levels.size();
    per_segment.reserve(n_diag);
    for (std::size_t c = 0; c < n_diag; ++c) {
        Eigen::VectorXd diag(static_cast<Eigen::Index>(d));
        std::size_t code = c;
        for (std::size_t j = d; j-- > 0;) {
            diag(static_cast<Eigen::Index>(j)) = levels[code % levels.size()];
            code /= levels.size();
        }
        per_segment.push_back(SymMatrix::diagonal(diag));
    }

    double total = 1.0;
    for (std::size_t s = 0; s < search.n_segments; ++s) total *= static_cast<double>(n_diag);
    if (total > 1e6) throw InvalidArgument("schedule family too large to enumerate");
    const auto n_total = static_cast<std::size_t>(total);

    std::vector<double> breaks(search.n_segments);
    for (std::size_t s = 0; s < search.n_segments; ++s) {
        breaks[s] = horizon * static_cast<double>(s) / static_cast<double>(search.n_segments);
    }

    std::vector<VolSchedule> family;
    family.reserve(n_total);
    for (std::size_t c = 0; c < n_total; ++c) {
        std::vector<SymMatrix> values(search.n_segments, per_segment.front());
        std::size_t code = c;
        for (std::size_t s = search.n_segments; s-- > 0;) {
            values[s] = per_segment[code % n_diag];
            code /= n_diag;
        }
        family.emplace_back(breaks, std::move(values));
    }
    return family;
}

ExpectationEstimate upper_expectation_mc(const SdeSpec& spec, const AmbiguitySet& set,
                                         const PathFunctional& functional, const PathConfig& cfg,
                                         const ScheduleSearch& search, Direction direction) {
    cfg.validate();
    spec.validate();
    if (spec.dim_noise != set.dim()) {
        throw InvalidArgument("noise dimension does not match the ambiguity set");
    }
    const auto family = schedule_family(set, cfg.horizon, search);
    const auto normals = all_normals(cfg, spec.dim_noise);
    const std::size_t per_path_normals = cfg.n_steps * spec.dim_noise;
    const std::size_t per_path_states = (cfg.n_steps + 1) * spec.dim_state;

    std::vector<double> times(cfg.n_steps + 1);
    for (std::size_t k = 0; k <= cfg.n_steps; ++k) times[k] = cfg.time(k);

    std::vector<double> means(family.size());
    std::vector<double> errors(family.size());
    std::vector<std::exception_ptr> failures(family.size());

    const auto n_family = static_cast<long>(family.size());
#ifdef GCTRL_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
#endif
    for (long c = 0; c < n_family; ++c) {
        const auto idx = static_cast<std::size_t>(c);
        try {
            const StepRoots roots = prepare_roots(family[idx], cfg);
            PathWork work(spec);
            std::vector<double> states(per_path_states);
            // Welford accumulation over paths.
            double mean = 0.0;
            double m2 = 0.0;
            for (std::size_t p = 0; p < cfg.n_paths; ++p) {
                simulate_path(spec, roots, cfg,
                              std::span<const double>(normals.data() + p * per_path_normals,
                                                      per_path_normals),
                              p, work, states);
                const double y = functional(PathView{times, states, spec.dim_state});
                if (!std::isfinite(y)) {
                    throw NumericError("path functional returned a non-finite value on path " +
                                       std::to_string(p));
                }
                const double delta = y - mean;
                mean += delta / static_cast<double>(p + 1);
                m2 += delta * (y - mean);
            }
            means[idx] = mean;
            errors[idx] = cfg.n_paths > 1
                              ? std::sqrt(m2 / static_cast<double>(cfg.n_paths - 1) /
                                          static_cast<double>(cfg.n_paths))
                              : 0.0;
        } catch (...) {
            failures[idx] = std::current_exception();
        }
    }
    for (const auto& failure : failures) {
        if (failure) std::rethrow_exception(failure);
    }

    std::size_t best = 0;
    for (std::size_t c = 1; c < family.size(); ++c) {
        const bool better = direction == Direction::kUpper ? means[c] > means[best]
                                                           : means[c] < means[best];
        if (better) best = c;
    }
    return ExpectationEstimate{means[best], errors[best], family[best], family.size()};
}

MomentReport moment_bound_check(const SdeSpec& spec, const AmbiguitySet& set,
                                const PathConfig& cfg, int ell, std::size_t n_grid) {
    if (ell < 1) throw InvalidArgument("moment order ell must be >= 1");
    if (cfg.n_steps < 16) throw InvalidArgument("moment_bound_check needs n_steps >= 16");
    cfg.validate();
    spec.validate();

    std::vector<std::size_t> lags;
    for (std::size_t h = 1; h <= cfg.n_steps / 8; h *= 2) lags.push_back(h);

    const double p = static_cast<double>(ell);
    double x0_norm = 0.0;
    for (double v : spec.initial_state) x0_norm += v * v;
    const double scale = 1.0 + std::pow(std::sqrt(x0_norm), p);

    MomentReport report;
    report.slope_min = std::numeric_limits<double>::infinity();
    report.slope_max = -std::numeric_limits<double>::infinity();
    double slope_sum = 0.0;

    const std::size_t m = spec.dim_state;
    for (double level : variance_levels(set, n_grid)) {
        const auto schedule = VolSchedule::constant(SymMatrix::identity(set.dim(), level));
        const PathBundle bundle = integrate_gsde(spec, set, schedule, cfg);
        const std::size_t n_times = bundle.n_times();

        double max_moment = 0.0;
        std::vector<double> incr(lags.size(), 0.0);
        std::vector<std::size_t> counts(lags.size(), 0);
        for (std::size_t path = 0; path < bundle.n_paths; ++path) {
            const double* s = bundle.states.data() + path * n_times * m;
            double running_max = 0.0;
            for (std::size_t k = 0; k < n_times; ++k) {
                double n2 = 0.0;
                for (std::size_t j = 0; j < m; ++j) n2 += s[k * m + j] * s[k * m + j];
                running_max = std::max(running_max, std::pow(std::sqrt(n2), p));
            }
            max_moment += running_max;
            for (std::size_t l = 0; l < lags.size(); ++l) {
                const std::size_t h = lags[l];
                for (std::size_t k = 0; k + h < n_times; ++k) {
                    double n2 = 0.0;
                    for (std::size_t j = 0; j < m; ++j) {
                        const double dx = s[(k + h) * m + j] - s[k * m + j];
                        n2 += dx * dx;
                    }
                    incr[l] += std::pow(std::sqrt(n2), p);
                    ++counts[l];
                }
            }
        }
        max_moment /= static_cast<double>(bundle.n_paths);
        report.sup_moment = std::max(report.sup_moment, max_moment);

        // OLS slope of log E|dx|^ell on log h.
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        const double n = static_cast<double>(lags.size());
        for (std::size_t l = 0; l < lags.size(); ++l) {
            const double h = cfg.dt() * static_cast<double>(lags[l]);
            const double mean_incr = incr[l] / static_cast<double>(counts[l]);
            report.k_holder = std::max(report.k_holder, mean_incr / (scale * std::pow(h, p / 2.0)));
            const double lx = std::log(h);
            const double ly = std::log(mean_incr);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        report.slope_min = std::min(report.slope_min, slope);
        report.slope_max = std::max(report.slope_max, slope);
        slope_sum += slope;
        ++report.n_schedules;
    }
    report.holder_slope = slope_sum / static_cast<double>(report.n_schedules);
    report.k_moment = report.sup_moment / scale;
    return report;
}

void write_paths_csv(std::ostream& out, const PathBundle& bundle) {
    std::string line = "path_id,time";
    for (std::size_t j = 0; j < bundle.dim_state; ++j) line += fmt::format(",state_{}", j);
    out << line << '\n';
    for (std::size_t p = 0; p < bundle.n_paths; ++p) {
        for (std::size_t k = 0; k < bundle.n_times(); ++k) {
            line = fmt::format("{},{:.9f}", p, bundle.times[k]);
            for (std::size_t j = 0; j < bundle.dim_state; ++j) {
                line += fmt::format(",{:.17g}", bundle.state(p, k, j));
            }
            out << line << '\n';
        }
    }
}

}  // namespace gctrl
