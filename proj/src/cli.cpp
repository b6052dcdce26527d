#include "gctrl/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "gctrl/checks.hpp"
#include "gctrl/errors.hpp"
#include "gctrl/gsde.hpp"
#include "gctrl/hjb.hpp"
#include "gctrl/merton.hpp"

namespace gctrl {

namespace fs = std::filesystem;

namespace {

// Raised when an artifact exists and --force was not given.
class OutputExists : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string num(double v) { return fmt::format("{:.6g}", v); }

std::string vec(const Eigen::VectorXd& v) {
    std::string out = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i > 0 ? ", " : "") + num(v(i));
    return out + "]";
}

std::string mat(const SymMatrix& m) {
    std::string out = "[";
    for (std::size_t i = 0; i < m.dim(); ++i) {
        if (i > 0) out += "; ";
        for (std::size_t j = 0; j < m.dim(); ++j) out += (j > 0 ? ", " : "") + num(m(i, j));
    }
    return out + "]";
}

// Collects file contents and writes them all at the end.
class Artifacts {
public:
    Artifacts(const OutputConfig& out, bool force) : dir_(out.directory), prefix_(out.prefix), force_(force) {}

    std::string add(const std::string& suffix, std::string content) {
        const std::string path = (dir_ / (prefix_ + suffix)).string();
        files_.emplace_back(path, std::move(content));
        return path;
    }

    [[nodiscard]] std::string path_for(const std::string& suffix) const {
        return (dir_ / (prefix_ + suffix)).string();
    }

    [[nodiscard]] std::vector<std::string> paths() const {
        std::vector<std::string> p;
        for (const auto& f : files_) p.push_back(f.first);
        return p;
    }

    void commit() const {
        for (const auto& [path, content] : files_) {
            if (!force_ && fs::exists(path)) {
                throw OutputExists(fmt::format("'{}' exists; pass --force to overwrite", path));
            }
        }
        fs::create_directories(dir_);
        for (const auto& [path, content] : files_) {
            const std::string tmp = path + ".partial";
            {
                std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
                os << content;
                if (!os) throw std::runtime_error(fmt::format("cannot write '{}'", tmp));
            }
            fs::rename(tmp, path);
        }
    }

private:
    fs::path dir_;
    std::string prefix_;
    bool force_;
    std::vector<std::pair<std::string, std::string>> files_;
};

// solve-hjb owns the plain report name; the others carry their command.
std::string report_suffix(const std::string& command) {
    if (command == "solve-hjb") return "_report.txt";
    if (command == "verify") return "_verify.txt";
    return "_" + command + "_report.txt";
}

// Adds the report itself as the last artifact and writes everything.
void finish(RunReport& report, Artifacts& files, const RunConfig& config) {
    report.config_echo = emit_config(config);
    const std::string suffix = report_suffix(report.command);
    report.artifact_paths = files.paths();
    report.artifact_paths.push_back(files.path_for(suffix));
    files.add(suffix, report.text());
    files.commit();
}

std::string schedule_text(const VolSchedule& s) {
    std::string out;
    const auto& b = s.breakpoints();
    for (std::size_t i = 0; i < s.values().size(); ++i) {
        if (i > 0) out += " ";
        out += fmt::format("[t>={:g}] {}", b[i], mat(s.values()[i]));
    }
    return out;
}

double terminal_norm_sq(const PathView& v) {
    double s = 0.0;
    for (double x : v.state_vector(v.n_times() - 1)) s += x * x;
    return s;
}

}  // namespace

std::string RunReport::text() const {
    std::string out = fmt::format("command = {}\n", command);
    for (const auto& [k, v] : results) out += fmt::format("{} = {}\n", k, v);
    out += "\n[artifacts]\n";
    for (const auto& p : artifact_paths) out += p + "\n";
    out += "\n[config]\n" + config_echo;
    return out;
}

RunConfig apply_overrides(RunConfig config, const CliOptions& options) {
    if (options.output_dir) config.output.directory = *options.output_dir;
    if (options.seed) config.simulation.seed = *options.seed;
    return config;
}

// ---------------------------------------------------------------------------

RunReport cmd_solve_hjb(const RunConfig& config, bool force) {
    if (config.ambiguity.d != 1) throw InvalidArgument("solve-hjb works on a scalar state (d = 1)");
    const AmbiguitySet set = make_ambiguity(config);
    const HjbProblem problem = scalar_problem(config.problem, set, config.solver.attitude, config.solver.direction);
    Grid1D grid{config.solver.x_min, config.solver.x_max, config.solver.n_x, config.solver.n_t};
    const bool auto_steps = grid.n_t == 0;
    if (auto_steps) grid.n_t = min_time_steps(problem, grid);
    const HjbSolution sol = solve(problem, grid);

    Artifacts files(config.output, force);
    std::ostringstream csv;
    write_solution_csv(csv, problem, sol);
    files.add("_solution.csv", csv.str());
    std::ostringstream meta;
    write_solution_metadata(meta, problem, sol);
    files.add("_solution.meta", meta.str());

    RunReport r;
    r.command = "solve-hjb";
    const double x0 = config.problem.x0;
    r.add(fmt::format("V(0,{:g})", x0), num(sol.interpolate(0, x0)));
    r.add("n_x", fmt::format("{}", grid.n_x));
    r.add("n_t", fmt::format("{}{}", grid.n_t, auto_steps ? " (CFL minimum)" : ""));
    r.add("dt", num(grid.dt(problem.horizon)));
    r.add("cfl_dt_bound", num(cfl_time_step(problem, grid)));
    r.add("attitude", to_string(problem.attitude));
    r.add("opt_direction", to_string(problem.opt_direction));
    r.add("boundary", to_string(sol.boundary_kind));
    finish(r, files, config);
    return r;
}

RunReport cmd_merton(const RunConfig& config, bool force) {
    const AmbiguitySet set = make_ambiguity(config);
    const MarketModel market = make_market(config);
    const CrraUtility utility = make_utility(config);
    const auto& me = config.merton;
    const double horizon = config.problem.horizon;

    std::vector<Attitude> attitudes;
    if (me.attitude != AttitudeChoice::kOptimist) attitudes.push_back(Attitude::kPessimist);
    if (me.attitude != AttitudeChoice::kPessimist) attitudes.push_back(Attitude::kOptimist);
    const bool tagged = attitudes.size() > 1;

    Artifacts files(config.output, force);
    RunReport r;
    r.command = "merton";
    const auto points = residual_sample_points(horizon, config.verify.n_points, config.verify.residual_seed);
    const Grid1D grid{me.x_min, me.x_max, me.n_x, me.n_t};
    MertonPdeOptions opts;
    opts.n_pi = me.n_pi;
    opts.pi_max = me.pi_max;
    opts.n_rho = me.n_rho;

    for (Attitude att : attitudes) {
        const std::string tag = to_string(att);
        const std::string key_prefix = tagged ? tag + "." : "";
        const std::string file_prefix = tagged ? "_" + tag : "";
        const auto add = [&](const std::string& k, std::string v) { r.add(key_prefix + k, std::move(v)); };

        const ClosedForm cf = resolve_closed_form(market, utility, set, att, horizon, me.n_a);
        const PolicyField policy = optimal_policy(cf, market, utility, set);
        add("attitude", tag);
        add("resolved_branch", cf.resolved_branch);
        std::string eta_samples;
        for (int j = 0; j <= 4; ++j) {
            const double t = horizon * j / 4.0;
            eta_samples += fmt::format("{}eta({:g}) = {}", j > 0 ? ", " : "", t, num(cf.eta(t)));
        }
        add("eta_samples", eta_samples);
        add("Lambda_bar", mat(cf.lambda_bar));
        const Eigen::VectorXd pi0 = policy.portfolio(0.0, me.x0);
        add("pi_hat", market.dim == 1 ? num(pi0(0)) : vec(pi0));
        const FundWeights fw = policy.fund_weights(0.0, me.x0);
        add("fund_weights", fmt::format("riskless = {}, risky = {}, F2 = {}", num(fw.riskless), num(fw.risky),
                                        vec(fw.fund)));
        add("A(0)", num(cf.a(0.0)));
        add("A(T)", num(cf.a_values.back()));
        add(fmt::format("V(0,{:g})", me.x0), num(closed_form_value(cf, utility, 0.0, me.x0)));
        add("c_hat(0,x)/x", num(policy.consumption(0.0, me.x0) / me.x0));
        add("max_hjb_residual", fmt::format("{:.6g}", verify_hjb_residual(cf, market, utility, set, points)));

        std::ostringstream a_csv;
        write_a_csv(a_csv, cf);
        files.add(file_prefix + "_A.csv", a_csv.str());

        std::string pol = "t,x,consumption";
        for (std::size_t j = 0; j < market.dim; ++j) pol += fmt::format(",pi_{}", j);
        pol += ",riskless_weight,risky_weight";
        for (std::size_t j = 0; j < market.dim; ++j) pol += fmt::format(",fund_{}", j);
        pol += "\n";
        for (std::size_t k = 0; k < me.n_policy_times; ++k) {
            const double t = horizon * static_cast<double>(k) / static_cast<double>(me.n_policy_times - 1);
            for (std::size_t i = 0; i < grid.n_x; ++i) {
                const double x = grid.x(i);
                pol += fmt::format("{:.17g},{:.17g},{:.17g}", t, x, policy.consumption(t, x));
                const Eigen::VectorXd pi = policy.portfolio(t, x);
                for (Eigen::Index j = 0; j < pi.size(); ++j) pol += fmt::format(",{:.17g}", pi(j));
                const FundWeights w = policy.fund_weights(t, x);
                pol += fmt::format(",{:.17g},{:.17g}", w.riskless, w.risky);
                for (Eigen::Index j = 0; j < w.fund.size(); ++j) pol += fmt::format(",{:.17g}", w.fund(j));
                pol += "\n";
            }
        }
        files.add(file_prefix + "_policy.csv", std::move(pol));

        if (market.dim != 1) {
            add("pde", "skipped (the wealth PDE is solved for d = 1 only)");
            continue;
        }
        const MertonRun run = run_merton(market, utility, set, att, horizon, grid, opts, me.n_a, false);
        std::string cmp = "x,value_pde,value_closed_form,rel_error,pi_pde,rho_pde\n";
        for (std::size_t i = 0; i < grid.n_x; ++i) {
            const double x = run.pde.grid.x(i);
            const double exact = closed_form_value(cf, utility, 0.0, x);
            const auto u = run.problem.controls[run.pde.control_index(0, i)];
            cmp += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", x, run.pde.value(0, i), exact,
                               run.pde.value(0, i) / exact - 1.0, u[0], u[1]);
        }
        files.add(file_prefix + "_comparison.csv", std::move(cmp));
        add("pde_grid", fmt::format("n_x = {}, n_t = {}, x in [{:g}, {:g}]", grid.n_x, run.pde.grid.n_t,
                                    grid.x_min, grid.x_max));
        add("pde_max_rel_error_interior", num(run.max_rel_error));
        add("pde_max_pi_error_interior", num(run.max_pi_error));
    }

    if (set.degenerate()) {
        // With a singleton prior set both attitudes pick the same Lambda.
        const ClosedForm p = resolve_closed_form(market, utility, set, Attitude::kPessimist, horizon, me.n_a);
        const ClosedForm o = resolve_closed_form(market, utility, set, Attitude::kOptimist, horizon, me.n_a);
        double gap = 0.0;
        for (std::size_t k = 0; k < p.a_values.size(); ++k) {
            gap = std::max(gap, std::abs(p.a_values[k] - o.a_values[k]));
        }
        r.add("ambiguity", fmt::format("degenerate (sigma_lo_sq == sigma_hi_sq): pessimist == optimist, "
                                       "max |A_pessimist - A_optimist| = {:.6g}",
                                       gap));
    }
    finish(r, files, config);
    return r;
}

RunReport cmd_simulate(const RunConfig& config, bool force) {
    const AmbiguitySet set = make_ambiguity(config);
    const auto& sim = config.simulation;
    const PathConfig cfg{sim.n_steps, config.problem.horizon, sim.n_paths, sim.seed};
    const SdeSpec spec = SdeSpec::brownian(set.dim());
    const ProblemConfig& p = config.problem;

    PathFunctional functional;
    std::string label;
    switch (p.payoff) {
        case Payoff::kSquare:
            functional = [](const PathView& v) { return terminal_norm_sq(v); };
            label = "|B(T)|^2";
            break;
        case Payoff::kNegSquare:
            functional = [](const PathView& v) { return -terminal_norm_sq(v); };
            label = "-|B(T)|^2";
            break;
        case Payoff::kConstant: {
            const double c = p.payoff_constant;
            functional = [c](const PathView&) { return c; };
            label = fmt::format("constant {:g}", c);
            break;
        }
    }

    const ExpectationEstimate est =
        upper_expectation_mc(spec, set, functional, cfg, {sim.n_segments, sim.n_grid}, sim.direction);

    Artifacts files(config.output, force);
    const std::size_t n_export = std::min(sim.n_export_paths, sim.n_paths);
    if (n_export > 0) {
        PathConfig export_cfg = cfg;
        export_cfg.n_paths = n_export;
        std::ostringstream os;
        write_paths_csv(os, sample_gbm(set, est.best_schedule, export_cfg));
        files.add("_paths.csv", os.str());
    }

    RunReport r;
    r.command = "simulate";
    r.add("functional", label);
    r.add("direction", to_string(sim.direction));
    r.add("value", num(est.value));
    r.add("std_error", num(est.std_error));
    r.add("n_schedules_searched", fmt::format("{}", est.n_schedules_searched));
    r.add("best_schedule", schedule_text(est.best_schedule));
    r.add("n_paths", fmt::format("{}", sim.n_paths));
    r.add("n_steps", fmt::format("{}", sim.n_steps));
    r.add("seed", fmt::format("{}", sim.seed));
    finish(r, files, config);
    return r;
}

RunReport cmd_verify(const RunConfig& config, bool force) {
    const std::vector<CheckResult> checks = run_verification(config);
    RunReport r;
    r.command = "verify";
    std::size_t failed = 0;
    for (const CheckResult& c : checks) {
        failed += c.passed ? 0 : 1;
        r.add(c.name, fmt::format("{} measured={:.6g} tolerance={:.6g}{}", c.passed ? "PASS" : "FAIL", c.measured,
                                  c.tolerance, c.detail.empty() ? "" : " (" + c.detail + ")"));
    }
    r.add("summary", fmt::format("{} checks, {} failed", checks.size(), failed));
    r.passed = failed == 0;
    Artifacts files(config.output, force);
    finish(r, files, config);
    return r;
}

// ---------------------------------------------------------------------------

int run_command(const std::string& command, const CliOptions& options, std::ostream& out,
                std::ostream& err) {
    try {
        const RunConfig config = apply_overrides(load_config(options.config_path), options);
        RunReport report;
        if (command == "solve-hjb") {
            report = cmd_solve_hjb(config, options.force);
        } else if (command == "merton") {
            report = cmd_merton(config, options.force);
        } else if (command == "simulate") {
            report = cmd_simulate(config, options.force);
        } else if (command == "verify") {
            report = cmd_verify(config, options.force);
        } else {
            err << fmt::format("unknown command '{}'\n", command);
            return kExitConfigError;
        }
        out << report.text();
        return report.passed ? kExitOk : kExitVerifyFailed;
    } catch (const ConfigError& e) {
        err << fmt::format("config error: {}:{}\n", options.config_path, e.what());
        return kExitConfigError;
    } catch (const OutputExists& e) {
        err << fmt::format("output error: {}\n", e.what());
        return kExitConfigError;
    } catch (const PreconditionError& e) {
        err << fmt::format("precondition violated: {} (bound {:.6g})\n", e.what(), e.bound());
        return kExitPrecondition;
    } catch (const ConsistencyError& e) {
        err << fmt::format("oracle inconsistency: {}\n", e.what());
        return kExitInconsistent;
    } catch (const NumericError& e) {
        err << fmt::format("numeric error: {}\n", e.what());
        return kExitPrecondition;
    } catch (const std::invalid_argument& e) {
        err << fmt::format("invalid configuration: {}\n", e.what());
        return kExitConfigError;
    } catch (const std::domain_error& e) {
        err << fmt::format("invalid configuration: {}\n", e.what());
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << fmt::format("error: {}\n", e.what());
        return kExitConfigError;
    }
}

}  // namespace gctrl
