#pragma once

// Consumption-portfolio choice under volatility ambiguity with CRRA utility.
//
// Wealth follows dX = r X dt + X pi^T gamma (dB + theta dt) - c dt with
// theta = gamma^{-1}(alpha - r 1).  A pessimist maximises the lower
// expectation of discounted utility, an optimist the upper one.  With
// V(t,x) = A(t)^kappa x^{1-kappa} / (1-kappa) the HJB equation collapses to
// the linear ODE
//
//   A'(t) = (eta(t) / kappa) A(t) - 1,  A(T) = 1,
//   eta   = beta - (1-kappa) r - (1-kappa)/(2 kappa) theta^T Lambda^{-1} theta,
//
// and the optimal controls are c = x / A(t), pi = (gamma^T)^{-1} Lambda^{-1}
// theta / kappa, where Lambda is the worst-case (pessimist) or best-case
// (optimist) covariance in Sigma.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gctrl/gsde.hpp"
#include "gctrl/hjb.hpp"
#include "gctrl/sublinear.hpp"

namespace gctrl {

enum class Attitude { kPessimist, kOptimist };
enum class Curvature { kNegative, kPositive };

[[nodiscard]] const char* to_string(Attitude a) noexcept;
// Pessimists use the lower generator, optimists the upper one.
[[nodiscard]] Direction generator_direction(Attitude a) noexcept;

struct MarketModel {
    std::size_t dim = 1;
    std::function<double(double)> r;
    std::function<Eigen::VectorXd(double)> alpha;
    std::function<Eigen::MatrixXd(double)> gamma;  // row k: loading of asset k on dB
    bool time_homogeneous = false;  // coefficients do not depend on t

    [[nodiscard]] static MarketModel constant(double r, Eigen::VectorXd alpha, Eigen::MatrixXd gamma);
    [[nodiscard]] static MarketModel scalar(double r, double alpha, double gamma);
    // Piecewise constant on [b_0 = 0, b_1), [b_1, b_2), ...; one entry per
    // interval in each coefficient list.
    [[nodiscard]] static MarketModel piecewise(std::vector<double> breakpoints, std::vector<double> r,
                                               std::vector<Eigen::VectorXd> alpha,
                                               std::vector<Eigen::MatrixXd> gamma);

    // Checks dimensions and that gamma gamma^T is positive definite at the
    // sampled times.
    void validate(std::span<const double> times) const;
};

struct CrraUtility {
    double kappa = 2.0;  // relative risk aversion, > 0 and != 1
    double beta = 0.0;   // utility discount rate

    CrraUtility(double kappa, double beta);

    [[nodiscard]] double utility(double z) const;           // z^{1-kappa} / (1-kappa); z > 0
    [[nodiscard]] double marginal(double z) const;          // z^{-kappa}
    [[nodiscard]] double inverse_marginal(double y) const;  // y^{-1/kappa}
};

// How the ambiguity matrix enters eta: directly (theta^T Lambda theta)
// or inverted, as it arises in the HJB portfolio maximisation
// (theta^T Lambda^{-1} theta).
enum class EtaForm { kLambda, kLambdaInverse };

// Closed-form candidates for A(t) under constant eta.
enum class ABranch {
    kOdeOnly,           // time-varying eta: no closed form, ODE values only
    kInverted,           // (kappa/eta + (1 - kappa/eta) e^{-(eta/kappa)(T-t)})^{-1}
    kReciprocal,        //  kappa/eta + (1 - kappa/eta) e^{-(eta/kappa)(T-t)}
    kZeroEtaLimit,      //  T - t + 1
};

[[nodiscard]] const char* to_string(EtaForm f) noexcept;
[[nodiscard]] const char* to_string(ABranch b) noexcept;

struct ClosedForm {
    double horizon = 1.0;
    double kappa = 2.0;
    std::vector<double> times;     // uniform grid on [0, T]
    std::vector<double> a_values;  // A(t_k), ODE-integrated
    std::vector<double> a_slopes;  // A'(t_k) from the ODE right-hand side
    std::function<double(double)> eta;
    SymMatrix lambda_bar = SymMatrix::scalar(1.0);
    Attitude attitude = Attitude::kPessimist;
    EtaForm eta_form = EtaForm::kLambdaInverse;
    ABranch a_branch = ABranch::kOdeOnly;
    double a_branch_residual = 0.0;  // max ODE residual of the adopted candidate
    std::string resolved_branch;     // human-readable record of the resolution

    [[nodiscard]] double a(double t) const;        // linear interpolation
    [[nodiscard]] double a_slope(double t) const;  // linear interpolation
    // A and A' multiplied by `factor` (sensitivity harness).
    [[nodiscard]] ClosedForm scaled(double factor) const;
};

struct FundWeights {
    double riskless = 0.0;  // varpi^1
    double risky = 0.0;     // varpi^2
    Eigen::VectorXd fund;   // F^2(t)
};

struct PolicyField {
    std::function<double(double t, double x)> consumption;
    std::function<Eigen::VectorXd(double t, double x)> portfolio;
    std::function<FundWeights(double t, double x)> fund_weights;
};

// gamma(t)^{-1} (alpha(t) - r(t) 1); NumericError if gamma is singular.
[[nodiscard]] Eigen::VectorXd market_price_of_risk(const MarketModel& m, double t);

// Extremal covariance for the diffusion term of a value function with the
// given curvature: the minimiser of tr(L M) (pessimist) or maximiser
// (optimist) for M of the sign of V_xx.
[[nodiscard]] SymMatrix worst_case_lambda(const AmbiguitySet& set, Curvature vxx_sign,
                                          Attitude attitude);

[[nodiscard]] double eta(const MarketModel& m, const CrraUtility& u, const SymMatrix& lambda_bar,
                         double t, EtaForm form = EtaForm::kLambdaInverse);

// Integrates A' = (eta/kappa) A - 1 backward from A(T) = 1 with classical
// RK4 on n_t steps.  For constant eta, substitutes each closed-form
// candidate into the ODE and records the first one with residual <= 1e-8
// (throws ConsistencyError if none does).
[[nodiscard]] ClosedForm solve_A(const MarketModel& m, const CrraUtility& u,
                                 const SymMatrix& lambda_bar, double horizon, std::size_t n_t,
                                 EtaForm form = EtaForm::kLambdaInverse);

// A(t)^kappa x^{1-kappa} / (1-kappa); DomainError for x <= 0.
[[nodiscard]] double closed_form_value(const ClosedForm& cf, const CrraUtility& u, double t,
                                       double x);

[[nodiscard]] PolicyField optimal_policy(const ClosedForm& cf, const MarketModel& m,
                                         const CrraUtility& u, const AmbiguitySet& set);

// Max over the points of the normalised residual of
//   V_t - beta V + r x V_x + kappa/(1-kappa) V_x^{(kappa-1)/kappa}
//     - V_x^2 / (2 V_xx) theta^T Lambda^{-1} theta,
// divided by |beta V| + |r x V_x| + 1.
[[nodiscard]] double verify_hjb_residual(const ClosedForm& cf, const MarketModel& m,
                                         const CrraUtility& u, const AmbiguitySet& set,
                                         const std::vector<std::pair<double, double>>& sample_points);

// Deterministic interior sample points: t uniform in (0,T), x log-uniform in
// [x_lo, x_hi].
[[nodiscard]] std::vector<std::pair<double, double>> residual_sample_points(
    double horizon, std::size_t n, std::uint64_t seed, double x_lo = 0.2, double x_hi = 5.0);

inline constexpr double kResidualTolerance = 1e-6;

// Tries the Lambda eta form, then the inverse form, and adopts the first
// whose ODE solution passes verify_hjb_residual at kResidualTolerance.
// Throws ConsistencyError if neither does.
[[nodiscard]] ClosedForm resolve_closed_form(const MarketModel& m, const CrraUtility& u,
                                             const AmbiguitySet& set, Attitude attitude,
                                             double horizon, std::size_t n_t = 2000);

struct MertonPdeOptions {
    std::size_t n_pi = 41;
    double pi_max = 0.0;       // 0: twice the closed-form portfolio, at least 1
    std::size_t n_rho = 60;    // consumption fractions, log-spaced
    double rho_min = 1e-3;
    double rho_max = 3.0;
    bool crra_boundary = true;  // Dirichlet rows from the closed form
};

// Assembles the wealth HJB with control (pi, rho), c = rho x.
[[nodiscard]] HjbProblem merton_problem(const MarketModel& m, const CrraUtility& u,
                                        const AmbiguitySet& set, Attitude attitude,
                                        double horizon, const MertonPdeOptions& options = {});

// merton_problem() handed to hjb::solve on `grid` (x_min > 0, d = 1).
// grid.n_t == 0 picks the smallest CFL-admissible step count.
[[nodiscard]] HjbSolution solve_merton_pde(const MarketModel& m, const CrraUtility& u,
                                           const AmbiguitySet& set, Grid1D grid,
                                           Attitude attitude, double horizon,
                                           const MertonPdeOptions& options = {});

// Monte Carlo value of the closed-form policy started at x0, optimised over
// volatility schedules in the attitude's direction.  Wealth must stay
// positive on every path.
[[nodiscard]] ExpectationEstimate evaluate_closed_form_policy_mc(
    const ClosedForm& cf, const MarketModel& m, const CrraUtility& u, const AmbiguitySet& set,
    const PathConfig& cfg, double x0, const ScheduleSearch& search = {});

// SDE of the wealth under a feedback policy (d = 1 noise per asset).
[[nodiscard]] SdeSpec wealth_sde(const MarketModel& m, const PolicyField& policy, double x0);

// t,A
void write_a_csv(std::ostream& out, const ClosedForm& cf);

}  // namespace gctrl
