#include "gctrl/merton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include <fmt/format.h>

#include "gctrl/errors.hpp"

namespace gctrl {

namespace {

constexpr double kCandidateTolerance = 1e-8;
constexpr double kZeroEta = 1e-10;

std::size_t piece_index(const std::vector<double>& breakpoints, double t) {
    const double probe = t + 1e-12 * std::max(1.0, std::abs(t));
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), probe);
    return it == breakpoints.begin() ? 0 : static_cast<std::size_t>(it - breakpoints.begin()) - 1;
}

double interpolate_uniform(const std::vector<double>& values, double horizon, double t) {
    const std::size_t n = values.size() - 1;
    const double s = std::clamp(t / horizon, 0.0, 1.0) * static_cast<double>(n);
    const auto i = std::min(static_cast<std::size_t>(s), n - 1);
    const double w = s - static_cast<double>(i);
    return (1.0 - w) * values[i] + w * values[i + 1];
}

// (gamma^T)^{-1} Lambda^{-1} theta
Eigen::VectorXd risky_fund(const MarketModel& m, const SymMatrix& lambda_bar, double t) {
    const Eigen::MatrixXd g = m.gamma(t);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(g.transpose());
    if (!lu.isInvertible()) throw NumericError("volatility matrix gamma is singular");
    const Eigen::VectorXd theta = market_price_of_risk(m, t);
    return lu.solve(lambda_bar.inverse().matrix() * theta);
}

struct Candidate {
    ABranch branch;
    double residual;
};

// Max over the grid of |A' - (eta/kappa) A + 1| / (|A'| + |eta/kappa| A + 1):
// the A ODE divided by kappa A^{kappa-1}, relative to its terms.
template <typename Fn>
double candidate_residual(const std::vector<double>& times, double eta_value, double kappa, Fn&& a_and_slope) {
    double worst = 0.0;
    const double rate = eta_value / kappa;
    for (double t : times) {
        const auto [a, slope] = a_and_slope(t);
        if (!(a > 0.0) || !std::isfinite(a) || !std::isfinite(slope)) {
            return std::numeric_limits<double>::infinity();
        }
        const double scale = std::abs(slope) + std::abs(rate) * a + 1.0;
        worst = std::max(worst, std::abs(slope - rate * a + 1.0) / scale);
    }
    return worst;
}

}  // namespace

const char* to_string(Attitude a) noexcept {
    return a == Attitude::kPessimist ? "pessimist" : "optimist";
}

Direction generator_direction(Attitude a) noexcept {
    return a == Attitude::kPessimist ? Direction::kLower : Direction::kUpper;
}

const char* to_string(EtaForm f) noexcept {
    return f == EtaForm::kLambda ? "theta^T Lambda theta" : "theta^T Lambda^-1 theta";
}

const char* to_string(ABranch b) noexcept {
    switch (b) {
        case ABranch::kOdeOnly: return "ode_only";
        case ABranch::kInverted: return "inverted";
        case ABranch::kReciprocal: return "reciprocal";
        case ABranch::kZeroEtaLimit: return "zero_eta_limit";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Market and utility

MarketModel MarketModel::constant(double r, Eigen::VectorXd alpha, Eigen::MatrixXd gamma) {
    const auto d = static_cast<std::size_t>(alpha.size());
    if (d == 0 || gamma.rows() != alpha.size() || gamma.cols() != alpha.size()) {
        throw InvalidArgument("market needs alpha in R^d and gamma in R^{d x d}");
    }
    MarketModel m;
    m.dim = d;
    m.r = [r](double) { return r; };
    m.alpha = [alpha = std::move(alpha)](double) { return alpha; };
    m.gamma = [gamma = std::move(gamma)](double) { return gamma; };
    m.time_homogeneous = true;
    return m;
}

MarketModel MarketModel::scalar(double r, double alpha, double gamma) {
    return constant(r, Eigen::VectorXd::Constant(1, alpha), Eigen::MatrixXd::Constant(1, 1, gamma));
}

MarketModel MarketModel::piecewise(std::vector<double> breakpoints, std::vector<double> r,
                                   std::vector<Eigen::VectorXd> alpha,
                                   std::vector<Eigen::MatrixXd> gamma) {
    const std::size_t n = breakpoints.size();
    if (n == 0 || breakpoints.front() != 0.0) {
        throw InvalidArgument("market breakpoints must start at 0");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(breakpoints[i] > breakpoints[i - 1])) {
            throw InvalidArgument("market breakpoints must be strictly increasing");
        }
    }
    if (r.size() != n || alpha.size() != n || gamma.size() != n) {
        throw InvalidArgument("market needs one r, alpha and gamma per segment");
    }
    if (n == 1) return constant(r[0], alpha[0], gamma[0]);
    const auto d = static_cast<std::size_t>(alpha[0].size());
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(alpha[i].size()) != d ||
            static_cast<std::size_t>(gamma[i].rows()) != d ||
            static_cast<std::size_t>(gamma[i].cols()) != d) {
            throw InvalidArgument("market segments have inconsistent dimensions");
        }
    }
    MarketModel m;
    m.dim = d;
    m.r = [breakpoints, r](double t) { return r[piece_index(breakpoints, t)]; };
    m.alpha = [breakpoints, alpha](double t) { return alpha[piece_index(breakpoints, t)]; };
    m.gamma = [breakpoints, gamma](double t) { return gamma[piece_index(breakpoints, t)]; };
    return m;
}

void MarketModel::validate(std::span<const double> times) const {
    if (!r || !alpha || !gamma) throw InvalidArgument("market coefficients are not set");
    for (double t : times) {
        const Eigen::VectorXd a = alpha(t);
        const Eigen::MatrixXd g = gamma(t);
        if (static_cast<std::size_t>(a.size()) != dim || static_cast<std::size_t>(g.rows()) != dim ||
            static_cast<std::size_t>(g.cols()) != dim) {
            throw InvalidArgument("market coefficient dimensions do not match dim");
        }
        if (!std::isfinite(r(t)) || !a.allFinite() || !g.allFinite()) {
            throw InvalidArgument("market coefficients must be finite");
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g * g.transpose(), Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0)) {
            throw InvalidArgument(fmt::format("gamma gamma^T is not positive definite at t={}", t));
        }
    }
}

CrraUtility::CrraUtility(double kappa_, double beta_) : kappa(kappa_), beta(beta_) {
    if (!(kappa > 0.0) || kappa == 1.0 || !std::isfinite(kappa)) {
        throw InvalidArgument("CRRA needs kappa > 0 and kappa != 1");
    }
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be >= 0");
}

double CrraUtility::utility(double z) const {
    if (!(z > 0.0)) throw DomainError(fmt::format("utility needs a positive argument, got {}", z));
    return std::pow(z, 1.0 - kappa) / (1.0 - kappa);
}
double CrraUtility::marginal(double z) const {
    if (!(z > 0.0)) throw DomainError(fmt::format("marginal utility needs a positive argument, got {}", z));
    return std::pow(z, -kappa);
}
double CrraUtility::inverse_marginal(double y) const { return std::pow(y, -1.0 / kappa); }

// ---------------------------------------------------------------------------
// Closed form

Eigen::VectorXd market_price_of_risk(const MarketModel& m, double t) {
    const Eigen::MatrixXd g = m.gamma(t);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
    if (!lu.isInvertible()) throw NumericError(fmt::format("gamma is singular at t={}", t));
    const Eigen::VectorXd excess = m.alpha(t) - m.r(t) * Eigen::VectorXd::Ones(g.rows());
    return lu.solve(excess);
}

SymMatrix worst_case_lambda(const AmbiguitySet& set, Curvature vxx_sign, Attitude attitude) {
    const double sign = vxx_sign == Curvature::kNegative ? -1.0 : 1.0;
    return g_matrix(SymMatrix::identity(set.dim(), sign), set, generator_direction(attitude))
        .maximizer;
}

double eta(const MarketModel& m, const CrraUtility& u, const SymMatrix& lambda_bar, double t,
           EtaForm form) {
    const Eigen::VectorXd theta = market_price_of_risk(m, t);
    const Eigen::MatrixXd lam =
        form == EtaForm::kLambda ? lambda_bar.matrix() : lambda_bar.inverse().matrix();
    const double quad = theta.dot(lam * theta);
    const double k = u.kappa;
    return u.beta - (1.0 - k) * m.r(t) - (1.0 - k) / (2.0 * k) * quad;
}

double ClosedForm::a(double t) const { return interpolate_uniform(a_values, horizon, t); }

double ClosedForm::a_slope(double t) const { return interpolate_uniform(a_slopes, horizon, t); }

ClosedForm ClosedForm::scaled(double factor) const {
    ClosedForm out = *this;
    for (double& v : out.a_values) v *= factor;
    for (double& v : out.a_slopes) v *= factor;
    out.resolved_branch += fmt::format(" [A scaled by {}]", factor);
    return out;
}

ClosedForm solve_A(const MarketModel& m, const CrraUtility& u, const SymMatrix& lambda_bar,
                   double horizon, std::size_t n_t, EtaForm form) {
    if (n_t < 2) throw InvalidArgument("solve_A needs n_t >= 2");
    if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
    if (lambda_bar.dim() != m.dim) throw InvalidArgument("Lambda dimension does not match market");

    ClosedForm cf;
    cf.horizon = horizon;
    cf.kappa = u.kappa;
    cf.lambda_bar = lambda_bar;
    cf.eta_form = form;
    cf.eta = [m, u, lambda_bar, form](double t) { return eta(m, u, lambda_bar, t, form); };

    const double kappa = u.kappa;
    const auto rhs = [&](double t, double a) { return cf.eta(t) / kappa * a - 1.0; };

    cf.times.resize(n_t + 1);
    for (std::size_t k = 0; k <= n_t; ++k) {
        cf.times[k] = horizon * static_cast<double>(k) / static_cast<double>(n_t);
    }
    cf.a_values.assign(n_t + 1, 0.0);
    cf.a_slopes.assign(n_t + 1, 0.0);
    cf.a_values[n_t] = 1.0;
    cf.a_slopes[n_t] = rhs(horizon, 1.0);
    const double h = -horizon / static_cast<double>(n_t);
    for (std::size_t k = n_t; k-- > 0;) {
        const double t = cf.times[k + 1];
        const double y = cf.a_values[k + 1];
        const double k1 = rhs(t, y);
        const double k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
        const double k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
        const double k4 = rhs(t + h, y + h * k3);
        const double a = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!(a > 0.0) || !std::isfinite(a)) {
            throw NumericError(fmt::format("A(t) left (0, inf) at t={}", cf.times[k]));
        }
        cf.a_values[k] = a;
        cf.a_slopes[k] = rhs(cf.times[k], a);
    }

    // Closed-form candidates exist only for constant eta.
    double eta_min = std::numeric_limits<double>::infinity();
    double eta_max = -eta_min;
    for (double t : cf.times) {
        const double e = cf.eta(t);
        eta_min = std::min(eta_min, e);
        eta_max = std::max(eta_max, e);
    }
    if (eta_max - eta_min > 1e-14 * std::max(1.0, std::abs(eta_max))) {
        cf.a_branch = ABranch::kOdeOnly;
        cf.resolved_branch = "A(t): time-varying eta, ODE integration only";
        return cf;
    }

    const double e = eta_max;
    std::vector<Candidate> tried;
    if (std::abs(e) < kZeroEta) {
        tried.push_back({ABranch::kZeroEtaLimit,
                         candidate_residual(cf.times, e, kappa, [&](double t) {
                             return std::pair{horizon - t + 1.0, -1.0};
                         })});
    } else {
        const double ratio = kappa / e;
        const auto reciprocal = [&](double t) {
            const double ex = std::exp(-(e / kappa) * (horizon - t));
            return std::pair{ratio + (1.0 - ratio) * ex, (1.0 - ratio) * (e / kappa) * ex};
        };
        tried.push_back({ABranch::kInverted,
                         candidate_residual(cf.times, e, kappa, [&](double t) {
                             const auto [q, dq] = reciprocal(t);
                             return std::pair{1.0 / q, -dq / (q * q)};
                         })});
        tried.push_back({ABranch::kReciprocal, candidate_residual(cf.times, e, kappa, reciprocal)});
    }

    std::string note = "A(t):";
    const Candidate* adopted = nullptr;
    for (const auto& c : tried) {
        const bool ok = c.residual <= kCandidateTolerance;
        note += fmt::format(" {} form {} (ODE residual {:.3g});", to_string(c.branch),
                            ok ? "verifies" : "rejected", c.residual);
        if (ok && adopted == nullptr) adopted = &c;
    }
    if (adopted == nullptr) {
        throw ConsistencyError("no closed-form candidate satisfies the A(t) ODE: " + note);
    }
    cf.a_branch = adopted->branch;
    cf.a_branch_residual = adopted->residual;
    note += fmt::format(" adopted {}", to_string(adopted->branch));
    cf.resolved_branch = note;
    return cf;
}

double closed_form_value(const ClosedForm& cf, const CrraUtility& u, double t, double x) {
    if (!(x > 0.0)) throw DomainError(fmt::format("closed-form value needs x > 0, got {}", x));
    const double k = u.kappa;
    return std::pow(cf.a(t), k) * (std::pow(x, 1.0 - k) / (1.0 - k));
}

PolicyField optimal_policy(const ClosedForm& cf, const MarketModel& m, const CrraUtility& u,
                           const AmbiguitySet& set) {
    if (!contains(set, cf.lambda_bar)) {
        throw InvalidArgument("closed form was built with a Lambda outside the ambiguity set");
    }
    const double kappa = u.kappa;
    PolicyField p;
    p.consumption = [cf](double t, double x) { return x / cf.a(t); };
    p.portfolio = [m, lam = cf.lambda_bar, kappa](double t, double) -> Eigen::VectorXd {
        return risky_fund(m, lam, t) / kappa;
    };
    p.fund_weights = [cf, m, kappa](double t, double x) {
        const double a_k = std::pow(cf.a(t), kappa);
        const double vx = a_k * std::pow(x, -kappa);
        const double vxx = -kappa * a_k * std::pow(x, -kappa - 1.0);
        FundWeights w;
        w.risky = -vx / (x * vxx);
        w.riskless = 1.0 - w.risky;
        w.fund = risky_fund(m, cf.lambda_bar, t);
        return w;
    };
    return p;
}

double verify_hjb_residual(const ClosedForm& cf, const MarketModel& m, const CrraUtility& u,
                           const AmbiguitySet& set,
                           const std::vector<std::pair<double, double>>& sample_points) {
    if (cf.lambda_bar.dim() != set.dim()) throw InvalidArgument("Lambda dimension mismatch");
    const double k = u.kappa;
    const Eigen::MatrixXd lam_inv = cf.lambda_bar.inverse().matrix();
    double worst = 0.0;
    for (const auto& [t, x] : sample_points) {
        if (!(x > 0.0)) throw DomainError("residual sample points need x > 0");
        const double a = cf.a(t);
        const double a_dot = cf.a_slope(t);
        const double x_pow = std::pow(x, 1.0 - k);
        const double v = std::pow(a, k) * x_pow / (1.0 - k);
        const double v_t = k * std::pow(a, k - 1.0) * a_dot * x_pow / (1.0 - k);
        const double v_x = std::pow(a, k) * std::pow(x, -k);
        const double v_xx = -k * std::pow(a, k) * std::pow(x, -k - 1.0);
        const Eigen::VectorXd theta = market_price_of_risk(m, t);
        const double r = m.r(t);

        const double residual = v_t - u.beta * v + r * x * v_x +
                                k / (1.0 - k) * std::pow(v_x, (k - 1.0) / k) -
                                v_x * v_x / (2.0 * v_xx) * theta.dot(lam_inv * theta);
        const double scale = std::abs(u.beta * v) + std::abs(r * x * v_x) + 1.0;
        worst = std::max(worst, std::abs(residual) / scale);
    }
    return worst;
}

std::vector<std::pair<double, double>> residual_sample_points(double horizon, std::size_t n,
                                                              std::uint64_t seed, double x_lo,
                                                              double x_hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::pair<double, double>> pts;
    pts.reserve(n);
    while (pts.size() < n) {
        const double s = unit(rng);
        if (s <= 0.0) continue;
        const double x = x_lo * std::pow(x_hi / x_lo, unit(rng));
        pts.emplace_back(horizon * s, x);
    }
    return pts;
}

ClosedForm resolve_closed_form(const MarketModel& m, const CrraUtility& u, const AmbiguitySet& set,
                               Attitude attitude, double horizon, std::size_t n_t) {
    const SymMatrix lambda_bar = worst_case_lambda(set, Curvature::kNegative, attitude);
    const auto points = residual_sample_points(horizon, 100, 0x5eed);

    struct Tried {
        EtaForm form;
        double residual;
        ClosedForm cf;
    };
    std::vector<Tried> tried;
    for (EtaForm form : {EtaForm::kLambda, EtaForm::kLambdaInverse}) {
        ClosedForm cf = solve_A(m, u, lambda_bar, horizon, n_t, form);
        cf.attitude = attitude;
        const double res = verify_hjb_residual(cf, m, u, set, points);
        tried.push_back({form, res, std::move(cf)});
    }

    std::string note = "eta:";
    const Tried* adopted = nullptr;
    for (const auto& t : tried) {
        const bool ok = t.residual <= kResidualTolerance;
        note += fmt::format(" {} {} (HJB residual {:.3g});", to_string(t.form),
                            ok ? "verifies" : "rejected", t.residual);
        if (ok && adopted == nullptr) adopted = &t;
    }
    if (adopted == nullptr) {
        throw ConsistencyError("HJB residual oracle rejected every eta form: " + note);
    }
    ClosedForm out = adopted->cf;
    note += fmt::format(" adopted {}", to_string(adopted->form));
    if (tried[0].residual <= kResidualTolerance && tried[1].residual <= kResidualTolerance) {
        note += " (both forms coincide for this Lambda)";
    }
    out.resolved_branch = note + " | " + out.resolved_branch;
    return out;
}

// ---------------------------------------------------------------------------
// PDE

HjbProblem merton_problem(const MarketModel& m, const CrraUtility& u, const AmbiguitySet& set,
                          Attitude attitude, double horizon, const MertonPdeOptions& options) {
    if (m.dim != 1 || set.dim() != 1) {
        throw InvalidArgument("the wealth PDE is solved for a single risky asset (d = 1)");
    }
    if (options.n_pi < 2 || options.n_rho < 2) {
        throw InvalidArgument("control grid needs at least two levels per axis");
    }
    if (!(options.rho_min > 0.0 && options.rho_min < options.rho_max)) {
        throw InvalidArgument("consumption fractions need 0 < rho_min < rho_max");
    }
    const ClosedForm cf = resolve_closed_form(m, u, set, attitude, horizon);

    double pi_lo = 0.0;
    double pi_hi = options.pi_max;
    if (!(pi_hi > 0.0)) {
        double pi_hat = 0.0;
        for (double t : {0.0, 0.5 * horizon, horizon}) {
            const double p = risky_fund(m, cf.lambda_bar, t)(0) / u.kappa;
            if (std::abs(p) > std::abs(pi_hat)) pi_hat = p;
        }
        if (pi_hat >= 0.0) {
            pi_hi = std::max(1.0, 2.0 * pi_hat);
        } else {
            pi_lo = std::min(-1.0, 2.0 * pi_hat);
            pi_hi = 0.0;
        }
    }
    std::vector<double> pis(options.n_pi);
    for (std::size_t i = 0; i < options.n_pi; ++i) {
        pis[i] = pi_lo + (pi_hi - pi_lo) * static_cast<double>(i) / static_cast<double>(options.n_pi - 1);
    }
    std::vector<double> rhos(options.n_rho);
    const double log_ratio = std::log(options.rho_max / options.rho_min);
    for (std::size_t i = 0; i < options.n_rho; ++i) {
        rhos[i] = options.rho_min *
                  std::exp(log_ratio * static_cast<double>(i) / static_cast<double>(options.n_rho - 1));
    }
    rhos.back() = options.rho_max;

    HjbProblem p;
    p.horizon = horizon;
    p.discount = u.beta;
    p.controls = ControlSet::product({pis, rhos});
    p.opt_direction = OptDirection::kMaximize;
    p.attitude = generator_direction(attitude);
    p.ambiguity = set;
    p.autonomous = m.time_homogeneous;
    p.drift = [m](double t, double x, std::span<const double> c) {
        const double g = m.gamma(t)(0, 0);
        const double theta = market_price_of_risk(m, t)(0);
        return x * (c[0] * g * theta + m.r(t) - c[1]);
    };
    p.diffusion = [m](double t, double x, std::span<const double> c) {
        return x * c[0] * m.gamma(t)(0, 0);
    };
    p.running_cost = [u](double, double x, std::span<const double> c) {
        return u.utility(c[1] * x);
    };
    p.terminal_cost = [u](double x) { return u.utility(x); };
    if (options.crra_boundary) {
        p.boundary = BoundaryKind::kDirichlet;
        p.boundary_value = [cf, u](double t, double x) { return closed_form_value(cf, u, t, x); };
    } else {
        p.boundary = BoundaryKind::kLinearExtrapolation;
    }
    return p;
}

HjbSolution solve_merton_pde(const MarketModel& m, const CrraUtility& u, const AmbiguitySet& set,
                             Grid1D grid, Attitude attitude, double horizon,
                             const MertonPdeOptions& options) {
    if (!(grid.x_min > 0.0)) throw InvalidArgument("wealth grid needs x_min > 0");
    const HjbProblem problem = merton_problem(m, u, set, attitude, horizon, options);
    if (grid.n_t == 0) {
        grid.n_t = min_time_steps(problem, grid);
    }
    return solve(problem, grid);
}

// ---------------------------------------------------------------------------
// Monte Carlo

SdeSpec wealth_sde(const MarketModel& m, const PolicyField& policy, double x0) {
    SdeSpec spec;
    spec.dim_state = 1;
    spec.dim_noise = m.dim;
    spec.initial_state = {x0};
    spec.drift = [m, policy](double t, std::span<const double> x, std::span<const double>,
                             std::span<double> out) {
        const Eigen::VectorXd pi = policy.portfolio(t, x[0]);
        const Eigen::VectorXd excess = m.gamma(t) * market_price_of_risk(m, t);
        out[0] = x[0] * (pi.dot(excess) + m.r(t)) - policy.consumption(t, x[0]);
    };
    spec.diffusion = [m, policy](double t, std::span<const double> x, std::span<const double>,
                                 std::span<double> out) {
        const Eigen::RowVectorXd row = x[0] * policy.portfolio(t, x[0]).transpose() * m.gamma(t);
        for (Eigen::Index j = 0; j < row.size(); ++j) out[static_cast<std::size_t>(j)] = row(j);
    };
    spec.in_domain = [](std::span<const double> x) { return x[0] > 0.0; };
    return spec;
}

ExpectationEstimate evaluate_closed_form_policy_mc(const ClosedForm& cf, const MarketModel& m,
                                                   const CrraUtility& u, const AmbiguitySet& set,
                                                   const PathConfig& cfg, double x0,
                                                   const ScheduleSearch& search) {
    if (!(x0 > 0.0)) throw DomainError("initial wealth must be positive");
    cfg.validate();
    const PolicyField policy = optimal_policy(cf, m, u, set);

    // The closed-form policy depends on t only through A(t) and the market,
    // so drift rate, loading and consumption rate are tabulated on the path
    // grid once instead of being rebuilt at every Euler step.
    const std::size_t n = cfg.n_steps;
    const std::size_t d = m.dim;
    std::vector<double> growth(n + 1);
    std::vector<double> loading((n + 1) * d);
    std::vector<double> consume(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = cfg.time(k);
        const Eigen::VectorXd pi = policy.portfolio(t, 1.0);
        const Eigen::MatrixXd g = m.gamma(t);
        growth[k] = pi.dot(g * market_price_of_risk(m, t)) + m.r(t);
        const Eigen::RowVectorXd row = pi.transpose() * g;
        for (std::size_t j = 0; j < d; ++j) loading[k * d + j] = row(static_cast<Eigen::Index>(j));
        consume[k] = 1.0 / cf.a(t);
    }
    const double dt = cfg.dt();
    const auto level = [dt, n](double t) {
        return std::min(n, static_cast<std::size_t>(std::lround(t / dt)));
    };

    SdeSpec spec;
    spec.dim_state = 1;
    spec.dim_noise = d;
    spec.initial_state = {x0};
    spec.drift = [growth, consume, level](double t, std::span<const double> x, std::span<const double>,
                                          std::span<double> out) {
        const std::size_t k = level(t);
        out[0] = x[0] * (growth[k] - consume[k]);
    };
    spec.diffusion = [loading, level, d](double t, std::span<const double> x, std::span<const double>,
                                         std::span<double> out) {
        const std::size_t k = level(t);
        for (std::size_t j = 0; j < d; ++j) out[j] = x[0] * loading[k * d + j];
    };
    spec.in_domain = [](std::span<const double> x) { return x[0] > 0.0; };

    const double beta = u.beta;
    const PathFunctional reward = [consume, u, beta](const PathView& path) {
        const std::size_t n_steps = path.n_times() - 1;
        double acc = 0.0;
        for (std::size_t k = 0; k < n_steps; ++k) {
            const double t = path.times[k];
            const double h = path.times[k + 1] - t;
            acc += std::exp(-beta * t) * u.utility(consume[k] * path.state(k)) * h;
        }
        return acc + std::exp(-beta * path.times[n_steps]) * u.utility(path.terminal());
    };
    return upper_expectation_mc(spec, set, reward, cfg, search, generator_direction(cf.attitude));
}

void write_a_csv(std::ostream& out, const ClosedForm& cf) {
    out << "t,A\n";
    for (std::size_t k = 0; k < cf.times.size(); ++k) {
        out << fmt::format("{:.17g},{:.17g}\n", cf.times[k], cf.a_values[k]);
    }
}

}  // namespace gctrl
