#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "gctrl/errors.hpp"
#include "gctrl/merton.hpp"

using namespace gctrl;

namespace {

const AmbiguitySet kDesk(1, 0.25, 1.0);
const MarketModel kMarket = MarketModel::scalar(0.02, 0.06, 0.2);
const CrraUtility kUtility(2.0, 0.1);

// Constant-eta solution of A' = (eta/kappa) A - 1, A(T) = 1.
double a_exact(double eta, double kappa, double horizon, double t) {
    const double ratio = kappa / eta;
    return ratio + (1.0 - ratio) * std::exp(-(eta / kappa) * (horizon - t));
}

}  // namespace

TEST(MarketPriceOfRisk, Examples) {
    EXPECT_NEAR(market_price_of_risk(kMarket, 0.0)(0), 0.2, 1e-15);
    EXPECT_EQ(market_price_of_risk(MarketModel::scalar(0.03, 0.03, 0.4), 0.0)(0), 0.0);
    const auto two = MarketModel::constant(0.02, Eigen::Vector2d(0.12, -0.08), Eigen::Matrix2d::Identity());
    const Eigen::VectorXd theta = market_price_of_risk(two, 0.5);
    EXPECT_NEAR(theta(0), 0.1, 1e-15);
    EXPECT_NEAR(theta(1), -0.1, 1e-15);
}

TEST(MarketPriceOfRisk, SingularLoadingThrows) {
    Eigen::Matrix2d g;
    g << 1.0, 2.0, 2.0, 4.0;
    const auto m = MarketModel::constant(0.02, Eigen::Vector2d(0.05, 0.05), g);
    EXPECT_THROW((void)market_price_of_risk(m, 0.0), NumericError);
}

TEST(WorstCaseLambda, Examples) {
    EXPECT_EQ(worst_case_lambda(kDesk, Curvature::kNegative, Attitude::kPessimist)(0, 0), 1.0);
    EXPECT_EQ(worst_case_lambda(kDesk, Curvature::kNegative, Attitude::kOptimist)(0, 0), 0.25);
    EXPECT_EQ(worst_case_lambda(kDesk, Curvature::kPositive, Attitude::kPessimist)(0, 0), 0.25);
    const AmbiguitySet flat(2, 0.5, 0.5);
    EXPECT_EQ(worst_case_lambda(flat, Curvature::kNegative, Attitude::kPessimist).matrix(),
              worst_case_lambda(flat, Curvature::kNegative, Attitude::kOptimist).matrix());
}

TEST(WorstCaseLambda, MatchesGridSearchOfTheDiffusionTerm) {
    // inf / sup over v of 1/2 V_xx v (pi gamma)^2 with V_xx = -1.
    double arg_inf = 0.0, arg_sup = 0.0, lo = INFINITY, hi = -INFINITY;
    for (int i = 0; i <= 1000; ++i) {
        const double v = 0.25 + 0.75 * i / 1000.0;
        const double term = -0.5 * v * 0.3 * 0.3;
        if (term < lo) { lo = term; arg_inf = v; }
        if (term > hi) { hi = term; arg_sup = v; }
    }
    EXPECT_EQ(worst_case_lambda(kDesk, Curvature::kNegative, Attitude::kPessimist)(0, 0), arg_inf);
    EXPECT_EQ(worst_case_lambda(kDesk, Curvature::kNegative, Attitude::kOptimist)(0, 0), arg_sup);
}

TEST(Eta, DeskValueAndVanishingLimit) {
    const SymMatrix one = SymMatrix::scalar(1.0);
    EXPECT_NEAR(eta(kMarket, kUtility, one, 0.0), 0.13, 1e-15);
    EXPECT_EQ(eta(kMarket, kUtility, one, 0.0, EtaForm::kLambda),
              eta(kMarket, kUtility, one, 0.0, EtaForm::kLambdaInverse));
    const auto flat = MarketModel::scalar(0.0, 0.0, 0.3);
    EXPECT_EQ(eta(flat, CrraUtility(5.0, 0.0), one, 0.0), 0.0);
    // Off the unit variance the two forms separate.
    const SymMatrix two = SymMatrix::scalar(2.0);
    EXPECT_NEAR(eta(kMarket, kUtility, two, 0.0), 0.1 + 0.02 + 0.005, 1e-15);
    EXPECT_NEAR(eta(kMarket, kUtility, two, 0.0, EtaForm::kLambda), 0.1 + 0.02 + 0.02, 1e-15);
}

TEST(Eta, LowRiskAversionFlipsTheSigns) {
    const CrraUtility u(0.5, 0.1);
    const SymMatrix lam = SymMatrix::scalar(1.0);
    EXPECT_NEAR(eta(kMarket, u, lam, 0.0), 0.1 - 0.5 * 0.02 - 0.5 * 0.04, 1e-15);
    const auto cf = resolve_closed_form(kMarket, u, kDesk, Attitude::kPessimist, 1.0);
    EXPECT_LE(verify_hjb_residual(cf, kMarket, u, kDesk, residual_sample_points(1.0, 100, 5)), 1e-6);
}

TEST(SolveA, FixedPointWhenEtaEqualsKappa) {
    const CrraUtility u(2.0, 1.97);  // eta = 1.97 + 0.02 + 0.01 = 2
    const auto cf = solve_A(kMarket, u, SymMatrix::scalar(1.0), 1.0, 500);
    for (double a : cf.a_values) EXPECT_NEAR(a, 1.0, 1e-12);
}

TEST(SolveA, TerminalValueIsExactlyOne) {
    for (double beta : {0.0, 0.1, 0.7}) {
        const auto cf = solve_A(kMarket, CrraUtility(3.0, beta), SymMatrix::scalar(1.0), 2.5, 100);
        EXPECT_EQ(cf.a_values.back(), 1.0);
        EXPECT_EQ(cf.a(2.5), 1.0);
    }
}

TEST(SolveA, DeskValueAgainstExactSolutionAndRichardson) {
    const auto coarse = solve_A(kMarket, kUtility, SymMatrix::scalar(1.0), 1.0, 50);
    const auto fine = solve_A(kMarket, kUtility, SymMatrix::scalar(1.0), 1.0, 100);
    // RK4: A_fine + (A_fine - A_coarse) / 15 removes the leading error term.
    const double richardson = fine.a_values.front() + (fine.a_values.front() - coarse.a_values.front()) / 15.0;
    EXPECT_NEAR(richardson, 1.9052603345, 1e-8);
    EXPECT_NEAR(a_exact(0.13, 2.0, 1.0, 0.0), 1.9052603345, 1e-10);
    EXPECT_EQ(fine.a_branch, ABranch::kReciprocal);
    EXPECT_LE(fine.a_branch_residual, 1e-8);
}

TEST(SolveA, ZeroEtaUsesTheLinearLimit) {
    const auto flat = MarketModel::scalar(0.0, 0.0, 0.2);
    const auto cf = solve_A(flat, CrraUtility(2.0, 0.0), SymMatrix::scalar(1.0), 2.0, 200);
    EXPECT_EQ(cf.a_branch, ABranch::kZeroEtaLimit);
    for (std::size_t k = 0; k < cf.times.size(); ++k) {
        EXPECT_NEAR(cf.a_values[k], 2.0 - cf.times[k] + 1.0, 1e-12);
    }
}

TEST(SolveA, TimeVaryingRatesStayOnTheOde) {
    const auto m = MarketModel::piecewise({0.0, 0.5}, {0.01, 0.04}, {Eigen::VectorXd::Constant(1, 0.05), Eigen::VectorXd::Constant(1, 0.08)},
                                          {Eigen::MatrixXd::Constant(1, 1, 0.2), Eigen::MatrixXd::Constant(1, 1, 0.25)});
    const auto cf = solve_A(m, kUtility, SymMatrix::scalar(1.0), 1.0, 2000);
    EXPECT_EQ(cf.a_branch, ABranch::kOdeOnly);
    // On [0.5, 1] eta is constant, so the exact solution applies there.
    const double eta_late = eta(m, kUtility, SymMatrix::scalar(1.0), 0.75);
    EXPECT_NEAR(cf.a(0.5), a_exact(eta_late, 2.0, 1.0, 0.5), 1e-6);
}

TEST(ClosedFormValue, TerminalUtilityAndExamples) {
    const auto cf = solve_A(kMarket, kUtility, SymMatrix::scalar(1.0), 1.0, 2000);
    for (double x : {0.3, 1.0, 4.0}) EXPECT_NEAR(closed_form_value(cf, kUtility, 1.0, x), kUtility.utility(x), 1e-15);
    EXPECT_NEAR(closed_form_value(cf, kUtility, 0.0, 1.0), -3.63002, 1e-5);
    const auto unit = solve_A(kMarket, CrraUtility(2.0, 1.97), SymMatrix::scalar(1.0), 1.0, 100);
    EXPECT_NEAR(closed_form_value(unit, kUtility, 0.3, 2.0), -0.5, 1e-12);
    EXPECT_THROW((void)closed_form_value(cf, kUtility, 0.0, 0.0), DomainError);
    EXPECT_THROW((void)closed_form_value(cf, kUtility, 0.0, -1.0), DomainError);
}

TEST(ClosedFormValue, HomogeneousInWealth) {
    const auto cf = solve_A(kMarket, CrraUtility(3.0, 0.05), SymMatrix::scalar(1.0), 1.0, 500);
    const CrraUtility u(3.0, 0.05);
    for (double s : {0.5, 2.0, 7.0}) {
        EXPECT_NEAR(closed_form_value(cf, u, 0.2, s * 1.3), std::pow(s, -2.0) * closed_form_value(cf, u, 0.2, 1.3),
                    1e-12);
    }
}

TEST(CrraUtility, InverseMarginalAndValidation) {
    for (double z : {0.1, 1.0, 3.3}) EXPECT_NEAR(kUtility.inverse_marginal(kUtility.marginal(z)), z, 1e-14);
    EXPECT_THROW(CrraUtility(1.0, 0.1), InvalidArgument);
    EXPECT_THROW(CrraUtility(-2.0, 0.1), InvalidArgument);
    EXPECT_THROW((void)kUtility.utility(0.0), DomainError);
}

TEST(OptimalPolicy, DeskPortfolioAndFunds) {
    const auto cf = resolve_closed_form(kMarket, kUtility, kDesk, Attitude::kPessimist, 1.0);
    const auto pol = optimal_policy(cf, kMarket, kUtility, kDesk);
    EXPECT_NEAR(pol.portfolio(0.0, 1.0)(0), 0.5, 1e-12);
    EXPECT_NEAR(pol.portfolio(0.7, 3.0)(0), 0.5, 1e-12);
    EXPECT_NEAR(pol.consumption(0.0, 2.0), 2.0 / cf.a(0.0), 1e-15);
    const FundWeights w = pol.fund_weights(0.4, 1.5);
    EXPECT_EQ(w.riskless + w.risky, 1.0);
    EXPECT_NEAR(w.risky, 0.5, 1e-12);
    EXPECT_NEAR(w.risky * w.fund(0), pol.portfolio(0.4, 1.5)(0), 1e-12);
}

TEST(OptimalPolicy, OptimistHoldsMoreRisk) {
    const auto pess = resolve_closed_form(kMarket, kUtility, kDesk, Attitude::kPessimist, 1.0);
    const auto opt = resolve_closed_form(kMarket, kUtility, kDesk, Attitude::kOptimist, 1.0);
    EXPECT_EQ(opt.lambda_bar(0, 0), 0.25);
    const double pi_opt = optimal_policy(opt, kMarket, kUtility, kDesk).portfolio(0.0, 1.0)(0);
    EXPECT_NEAR(pi_opt, 2.0, 1e-12);
    EXPECT_GT(closed_form_value(opt, kUtility, 0.0, 1.0), closed_form_value(pess, kUtility, 0.0, 1.0));
}

TEST(HjbResidual, ResolvedBranchSatisfiesTheEquation) {
    const auto points = residual_sample_points(1.0, 100, 99);
    ASSERT_EQ(points.size(), 100u);
    for (Attitude att : {Attitude::kPessimist, Attitude::kOptimist}) {
        const auto cf = resolve_closed_form(kMarket, kUtility, kDesk, att, 1.0);
        EXPECT_LE(verify_hjb_residual(cf, kMarket, kUtility, kDesk, points), 1e-6);
        EXPECT_GT(verify_hjb_residual(cf.scaled(1.01), kMarket, kUtility, kDesk, points), 1e-3);
    }
}

TEST(HjbResidual, VanishingEtaLimit) {
    const auto flat = MarketModel::scalar(0.0, 0.0, 0.2);
    const CrraUtility u(2.0, 0.0);
    const auto cf = solve_A(flat, u, SymMatrix::scalar(1.0), 1.0, 200);
    EXPECT_LE(verify_hjb_residual(cf, flat, u, kDesk, residual_sample_points(1.0, 100, 3)), 1e-8);
}

TEST(ResolveClosedForm, InverseFormWinsWhenTheFormsDiffer) {
    const AmbiguitySet wide(1, 0.25, 2.0);
    const auto cf = resolve_closed_form(kMarket, kUtility, wide, Attitude::kPessimist, 1.0);
    EXPECT_EQ(cf.eta_form, EtaForm::kLambdaInverse);
    EXPECT_EQ(cf.a_branch, ABranch::kReciprocal);
    EXPECT_FALSE(cf.resolved_branch.empty());
    // The Lambda form, forced, fails the residual oracle.
    const auto direct_form = solve_A(kMarket, kUtility, cf.lambda_bar, 1.0, 2000, EtaForm::kLambda);
    EXPECT_GT(verify_hjb_residual(direct_form, kMarket, kUtility, wide, residual_sample_points(1.0, 100, 1)), 1e-4);
}

TEST(ResolveClosedForm, BranchesCoincideAtUnitVariance) {
    const auto a = solve_A(kMarket, kUtility, SymMatrix::scalar(1.0), 1.0, 2000, EtaForm::kLambda);
    const auto b = solve_A(kMarket, kUtility, SymMatrix::scalar(1.0), 1.0, 2000, EtaForm::kLambdaInverse);
    for (std::size_t k = 0; k < a.a_values.size(); ++k) EXPECT_NEAR(a.a_values[k], b.a_values[k], 1e-6);
}

TEST(ClosedFormPolicy, WealthStaysPositive) {
    const auto cf = resolve_closed_form(kMarket, kUtility, kDesk, Attitude::kPessimist, 1.0);
    const auto pol = optimal_policy(cf, kMarket, kUtility, kDesk);
    const auto spec = wealth_sde(kMarket, pol, 1.0);
    PathConfig cfg;
    cfg.n_paths = 500;
    cfg.n_steps = 200;
    cfg.seed = 4;
    const auto bundle = integrate_gsde(spec, kDesk, VolSchedule::constant(SymMatrix::scalar(1.0)), cfg);
    for (double x : bundle.states) EXPECT_GT(x, 0.0);
}

TEST(ClosedFormPolicy, MonteCarloMatchesTheValue) {
    const auto cf = resolve_closed_form(kMarket, kUtility, kDesk, Attitude::kPessimist, 1.0);
    PathConfig cfg;
    cfg.n_paths = 4000;
    cfg.n_steps = 200;
    cfg.seed = 21;
    const auto est = evaluate_closed_form_policy_mc(cf, kMarket, kUtility, kDesk, cfg, 1.0, {1, 5});
    const double v = closed_form_value(cf, kUtility, 0.0, 1.0);
    EXPECT_LE(std::abs(est.value - v) / std::abs(v), 0.05);
}

TEST(MertonPde, CoarseGridTracksTheClosedForm) {
    Grid1D g;
    g.x_min = 0.4;
    g.x_max = 2.5;
    g.n_x = 101;
    g.n_t = 0;
    MertonPdeOptions opt;
    opt.n_rho = 30;
    const auto sol = solve_merton_pde(kMarket, kUtility, kDesk, g, Attitude::kPessimist, 1.0, opt);
    const auto cf = resolve_closed_form(kMarket, kUtility, kDesk, Attitude::kPessimist, 1.0);
    double worst = 0.0;
    for (std::size_t i = 10; i + 10 < sol.grid.n_x; ++i) {
        const double x = sol.grid.x(i);
        const double v = closed_form_value(cf, kUtility, 0.0, x);
        worst = std::max(worst, std::abs(sol.value(0, i) - v) / std::abs(v));
    }
    EXPECT_LE(worst, 0.03);
}

TEST(WriteACsv, Layout) {
    const auto cf = solve_A(kMarket, kUtility, SymMatrix::scalar(1.0), 1.0, 4);
    std::ostringstream out;
    write_a_csv(out, cf);
    EXPECT_EQ(out.str().rfind("t,A\n0,", 0), 0u);
    EXPECT_NE(out.str().find("\n1,1\n"), std::string::npos);
}
