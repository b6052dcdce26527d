#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "gctrl/errors.hpp"
#include "gctrl/hjb.hpp"

using namespace gctrl;

namespace {

const AmbiguitySet kDesk(1, 0.25, 1.0);

HjbProblem heat(double sign, Direction attitude = Direction::kUpper,
                const AmbiguitySet& set = kDesk) {
    HjbProblem p;
    p.drift = [](double, double, std::span<const double>) { return 0.0; };
    p.diffusion = [](double, double, std::span<const double>) { return 1.0; };
    p.running_cost = [](double, double, std::span<const double>) { return 0.0; };
    p.terminal_cost = [sign](double x) { return sign * x * x; };
    p.attitude = attitude;
    p.ambiguity = set;
    p.autonomous = true;
    return p;
}

Grid1D grid(double lo, double hi, std::size_t n_x, std::size_t n_t) {
    Grid1D g;
    g.x_min = lo;
    g.x_max = hi;
    g.n_x = n_x;
    g.n_t = n_t;
    return g;
}

std::size_t even_cfl_steps(const HjbProblem& p, const Grid1D& g) {
    const std::size_t n = min_time_steps(p, g);
    return n + n % 2;
}

}  // namespace

TEST(HjbSolve, GHeatUpperRecoversMaximalVariance) {
    const auto p = heat(1.0);
    auto g = grid(-5.0, 5.0, 401, 0);
    g.n_t = min_time_steps(p, g);
    const auto sol = solve(p, g);
    EXPECT_NEAR(sol.value(0, 200), 1.0, 1e-2);
    // The discrete solution is exactly x^2 + hi^2 (T - t) away from the edges.
    EXPECT_NEAR(sol.interpolate(0, 1.0), 2.0, 1e-9);
}

TEST(HjbSolve, GHeatLowerRecoversMinimalVariance) {
    const auto p = heat(-1.0);
    auto g = grid(-5.0, 5.0, 401, 0);
    g.n_t = min_time_steps(p, g);
    EXPECT_NEAR(solve(p, g).value(0, 200), -0.25, 1e-2);
}

TEST(HjbSolve, ConstantTerminalIsPreserved) {
    for (Direction att : {Direction::kUpper, Direction::kLower}) {
        HjbProblem p = heat(1.0, att);
        p.drift = [](double t, double x, std::span<const double> u) { return std::sin(x) + t + u[0]; };
        p.diffusion = [](double, double x, std::span<const double>) { return 1.0 + 0.5 * std::cos(x); };
        p.terminal_cost = [](double) { return 3.5; };
        p.controls = ControlSet::scalars({-1.0, 0.0, 1.0});
        p.autonomous = false;
        auto g = grid(-2.0, 2.0, 81, 0);
        g.n_t = min_time_steps(p, g);
        const auto sol = solve(p, g);
        for (double v : sol.values) EXPECT_NEAR(v, 3.5, 1e-12);
    }
}

TEST(HjbSolve, TerminalLevelIsExact) {
    const auto p = heat(1.0);
    auto g = grid(-1.0, 1.0, 21, 0);
    g.n_t = min_time_steps(p, g);
    const auto sol = solve(p, g);
    for (std::size_t i = 0; i < g.n_x; ++i) EXPECT_EQ(sol.value(g.n_t, i), g.x(i) * g.x(i));
}

TEST(HjbSolve, CflViolationFailsBeforeSweeping) {
    const auto p = heat(1.0);
    const auto g = grid(-5.0, 5.0, 401, 10);
    try {
        (void)solve(p, g);
        FAIL() << "expected PreconditionError";
    } catch (const PreconditionError& e) {
        EXPECT_DOUBLE_EQ(e.bound(), cfl_time_step(p, g));
        EXPECT_NEAR(e.bound(), 0.025 * 0.025, 1e-15);
    }
}

TEST(HjbSolve, CflBoundCountsDriftAndDiscount) {
    HjbProblem p = heat(1.0);
    p.drift = [](double, double, std::span<const double>) { return 2.0; };
    p.discount = 0.5;
    const auto g = grid(0.0, 1.0, 11, 1);
    const double dx = 0.1;
    EXPECT_NEAR(cfl_time_step(p, g), dx * dx / (1.0 + dx * 2.0 + dx * dx * 0.5), 1e-15);
}

TEST(HjbSolve, AttitudesAreOrderedAndCoincideWhenDegenerate) {
    auto g = grid(-3.0, 3.0, 121, 0);
    const auto up_p = heat(1.0, Direction::kUpper);
    g.n_t = min_time_steps(up_p, g);
    HjbProblem up_mixed = up_p;
    up_mixed.terminal_cost = [](double x) { return std::sin(2.0 * x); };
    HjbProblem lo_mixed = up_mixed;
    lo_mixed.attitude = Direction::kLower;
    const auto up = solve(up_mixed, g);
    const auto lo = solve(lo_mixed, g);
    for (std::size_t i = 0; i < up.values.size(); ++i) EXPECT_GE(up.values[i], lo.values[i]);

    const AmbiguitySet flat(1, 0.6, 0.6);
    up_mixed.ambiguity = flat;
    lo_mixed.ambiguity = flat;
    EXPECT_EQ(solve(up_mixed, g).values, solve(lo_mixed, g).values);
}

TEST(HjbSolve, LipschitzTerminalStaysLipschitz) {
    HjbProblem p = heat(1.0);
    p.terminal_cost = [](double x) { return std::abs(x); };
    for (std::size_t n_x : {41u, 81u, 161u}) {
        auto g = grid(-2.0, 2.0, n_x, 0);
        g.n_t = min_time_steps(p, g);
        const auto sol = solve(p, g);
        double lip = 0.0;
        for (std::size_t i = 1; i < n_x; ++i) {
            lip = std::max(lip, std::abs(sol.value(0, i) - sol.value(0, i - 1)) / g.dx());
        }
        EXPECT_LE(lip, 1.0 + 1e-12) << n_x;
    }
}

TEST(HjbSolve, OptimalControlSteersTowardTheMinimum) {
    HjbProblem p = heat(1.0);
    p.drift = [](double, double, std::span<const double> u) { return u[0]; };
    p.controls = ControlSet::scalars({-1.0, 0.0, 1.0});
    auto g = grid(-2.0, 2.0, 81, 0);
    g.n_t = min_time_steps(p, g);
    const auto sol = solve(p, g);
    for (std::size_t i = 5; i < 75; ++i) {
        const double x = g.x(i);
        const double u = p.controls[sol.control_index(0, i)][0];
        if (x > 0.05) EXPECT_EQ(u, -1.0) << x;
        if (x < -0.05) EXPECT_EQ(u, 1.0) << x;
    }
    EXPECT_EQ(policy_control(p, sol, 0.0, 1.0)[0], -1.0);
}

TEST(DppComposition, HeatAndControlledProblemsComposeExactly) {
    const auto p = heat(1.0);
    auto g = grid(-5.0, 5.0, 401, 0);
    g.n_t = even_cfl_steps(p, g);
    EXPECT_LE(dpp_composition_check(p, g, 0.5), 1e-12);

    HjbProblem c = heat(-1.0, Direction::kLower);
    c.drift = [](double t, double x, std::span<const double> u) { return u[0] - 0.3 * x + t; };
    c.running_cost = [](double, double x, std::span<const double> u) { return x * x + u[0] * u[0]; };
    c.controls = ControlSet::scalars({-0.5, 0.0, 0.5});
    c.discount = 0.2;
    c.autonomous = false;
    auto gc = grid(-2.0, 2.0, 81, 0);
    gc.n_t = even_cfl_steps(c, gc);
    EXPECT_LE(dpp_composition_check(c, gc, gc.t(gc.n_t / 2, 1.0)), 1e-12);
}

TEST(DppComposition, RefinedSecondSolveAgreesToSchemeOrder) {
    // Compose through T/2 with the [T/2, T] slice taken from a finer grid;
    // the gap is bounded by the discretisation error of the two grids.
    const HjbProblem p = [] {
        HjbProblem q = heat(1.0);
        q.terminal_cost = [](double x) { return std::cos(x); };
        return q;
    }();
    auto coarse = grid(-4.0, 4.0, 81, 0);
    coarse.n_t = even_cfl_steps(p, coarse);
    auto fine = grid(-4.0, 4.0, 161, 0);
    fine.n_t = 4 * coarse.n_t;
    const auto direct = solve(p, coarse);
    const auto upper_half = solve_window(p, fine, fine.n_t / 2, fine.n_t, [&] {
        std::vector<double> v(fine.n_x);
        for (std::size_t i = 0; i < fine.n_x; ++i) v[i] = p.terminal_cost(fine.x(i));
        return v;
    }());
    std::vector<double> slice(coarse.n_x);
    for (std::size_t i = 0; i < coarse.n_x; ++i) slice[i] = upper_half.value(fine.n_t / 2, 2 * i);
    const auto composed = solve_window(p, coarse, 0, coarse.n_t / 2, slice);
    const double dx = coarse.dx();
    double gap = 0.0;
    for (std::size_t i = 10; i + 10 < coarse.n_x; ++i) {
        gap = std::max(gap, std::abs(composed.value(0, i) - direct.value(0, i)));
    }
    EXPECT_LE(gap, 10.0 * (dx * dx + coarse.dt(1.0)));
    EXPECT_GT(gap, 0.0);
}

TEST(DppComposition, OffGridTimeIsRejected) {
    const auto p = heat(1.0);
    const auto g = grid(-1.0, 1.0, 21, 200);
    EXPECT_THROW((void)dpp_composition_check(p, g, 0.5 + 1e-4), InvalidArgument);
    EXPECT_THROW((void)dpp_composition_check(p, g, 0.0), InvalidArgument);
}

TEST(EvaluatePolicyMc, HeatValueMatchesPde) {
    const auto p = heat(1.0);
    auto g = grid(-5.0, 5.0, 201, 0);
    g.n_t = min_time_steps(p, g);
    const auto sol = solve(p, g);
    PathConfig cfg;
    cfg.n_paths = 20000;
    cfg.n_steps = 50;
    cfg.seed = 12;
    const auto est = evaluate_policy_mc(p, sol, kDesk, cfg, 0.0, {1, 5});
    EXPECT_NEAR(est.value, sol.value(0, 100), 3.0 * est.std_error + 1e-2);
}

TEST(EvaluatePolicyMc, ConstantTerminalIsExact) {
    HjbProblem p = heat(1.0);
    p.terminal_cost = [](double) { return -2.0; };
    auto g = grid(-1.0, 1.0, 21, 0);
    g.n_t = min_time_steps(p, g);
    PathConfig cfg;
    cfg.n_paths = 200;
    cfg.n_steps = 10;
    const auto est = evaluate_policy_mc(p, solve(p, g), kDesk, cfg, 0.0, {2, 2});
    EXPECT_EQ(est.value, -2.0);
    EXPECT_NEAR(est.std_error, 0.0, 1e-12);
}

TEST(WriteSolutionCsv, LayoutAndDeterminism) {
    HjbProblem p = heat(1.0);
    p.controls = ControlSet::scalars({0.0, 1.5});
    auto g = grid(-1.0, 1.0, 3, 0);
    g.n_t = min_time_steps(p, g);
    const auto sol = solve(p, g);
    std::ostringstream out;
    write_solution_csv(out, p, sol);
    const std::string text = out.str();
    EXPECT_EQ(text.rfind("t,x,value,control_index,control_value\n", 0), 0u);
    EXPECT_NE(text.find("\n1,1,1,,\n"), std::string::npos) << text;
    std::ostringstream again;
    write_solution_csv(again, p, solve(p, g));
    EXPECT_EQ(text, again.str());

    std::ostringstream meta;
    write_solution_metadata(meta, p, sol);
    EXPECT_NE(meta.str().find("n_x=3\n"), std::string::npos);
    EXPECT_NE(meta.str().find("attitude=upper\n"), std::string::npos);
}

TEST(ControlSet, ProductOrdering) {
    const auto c = ControlSet::product({{1.0, 2.0}, {10.0, 20.0, 30.0}});
    ASSERT_EQ(c.size(), 6u);
    EXPECT_EQ(c[1][0], 1.0);
    EXPECT_EQ(c[1][1], 20.0);
    EXPECT_EQ(c[3][0], 2.0);
    EXPECT_EQ(c[3][1], 10.0);
}
