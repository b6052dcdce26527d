#include "gctrl/sublinear.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gctrl/errors.hpp"

namespace gctrl {

namespace {

constexpr double kAsymmetryTolerance = 1e-10;

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> decompose(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) {
        throw NumericError("symmetric eigensolver failed to converge");
    }
    return solver;
}

}  // namespace

const char* to_string(Direction d) noexcept {
    return d == Direction::kUpper ? "upper" : "lower";
}

SymMatrix::SymMatrix(const Eigen::MatrixXd& a) {
    if (a.rows() == 0 || a.rows() != a.cols()) {
        throw InvalidArgument("SymMatrix requires a non-empty square matrix");
    }
    if (!a.allFinite()) {
        throw InvalidArgument("SymMatrix entries must be finite");
    }
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (asym > kAsymmetryTolerance * scale) {
        throw InvalidArgument("matrix is not symmetric (max |a_ij - a_ji| = " +
                              std::to_string(asym) + ")");
    }
    m_ = 0.5 * (a + a.transpose());
}

SymMatrix SymMatrix::identity(std::size_t dim, double scale) {
    const auto n = static_cast<Eigen::Index>(dim);
    return SymMatrix(scale * Eigen::MatrixXd::Identity(n, n));
}

SymMatrix SymMatrix::diagonal(const Eigen::VectorXd& diag) {
    return SymMatrix(Eigen::MatrixXd(diag.asDiagonal()));
}

Eigen::VectorXd SymMatrix::eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m_, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw NumericError("symmetric eigensolver failed to converge");
    }
    return solver.eigenvalues();
}

SymMatrix SymMatrix::sqrt() const {
    const auto solver = decompose(m_);
    const Eigen::VectorXd ev = solver.eigenvalues();
    if (ev.minCoeff() < -kMembershipTolerance) {
        throw NumericError("square root of a matrix with a negative eigenvalue");
    }
    const Eigen::VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd& q = solver.eigenvectors();
    return SymMatrix(q * root.asDiagonal() * q.transpose());
}

SymMatrix SymMatrix::inverse() const {
    const auto solver = decompose(m_);
    const Eigen::VectorXd ev = solver.eigenvalues();
    if (ev.cwiseAbs().minCoeff() <= 1e-14 * std::max(1.0, ev.cwiseAbs().maxCoeff())) {
        throw NumericError("inverse of a singular symmetric matrix");
    }
    const Eigen::MatrixXd& q = solver.eigenvectors();
    return SymMatrix(q * ev.cwiseInverse().asDiagonal() * q.transpose());
}

SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) {
    if (a.dim() != b.dim()) throw InvalidArgument("SymMatrix dimension mismatch in +");
    return SymMatrix(a.m_ + b.m_);
}

SymMatrix operator*(double s, const SymMatrix& a) { return SymMatrix(s * a.m_); }

double inner(const SymMatrix& a, const SymMatrix& b) {
    if (a.dim() != b.dim()) throw InvalidArgument("SymMatrix dimension mismatch in inner");
    return (a.matrix().transpose() * b.matrix()).trace();
}

AmbiguitySet::AmbiguitySet(std::size_t dim, double sigma_lo_sq, double sigma_hi_sq)
    : dim_(dim), lo_(sigma_lo_sq), hi_(sigma_hi_sq) {
    if (dim == 0) throw InvalidArgument("ambiguity set dimension must be positive");
    if (!(std::isfinite(lo_) && std::isfinite(hi_))) {
        throw InvalidArgument("volatility bounds must be finite");
    }
    if (!(lo_ > 0.0)) throw InvalidArgument("sigma_lo_sq must be > 0");
    if (!(lo_ <= hi_)) throw InvalidArgument("sigma_lo_sq must not exceed sigma_hi_sq");
}

double g_scalar(double alpha, const AmbiguitySet& set, Direction direction) {
    if (set.dim() != 1) {
        throw InvalidArgument("g_scalar needs a one-dimensional ambiguity set, got dim " +
                              std::to_string(set.dim()));
    }
    const double pos = std::max(alpha, 0.0);
    const double neg = std::max(-alpha, 0.0);
    if (direction == Direction::kUpper) {
        return 0.5 * (set.sigma_hi_sq() * pos - set.sigma_lo_sq() * neg);
    }
    return 0.5 * (set.sigma_lo_sq() * pos - set.sigma_hi_sq() * neg);
}

GValue g_matrix(const SymMatrix& a, const AmbiguitySet& set, Direction direction) {
    if (a.dim() != set.dim()) {
        throw InvalidArgument("g_matrix: matrix dim " + std::to_string(a.dim()) +
                              " != ambiguity dim " + std::to_string(set.dim()));
    }
    const auto solver = decompose(a.matrix());
    const Eigen::VectorXd& ev = solver.eigenvalues();
    const double lo = set.sigma_lo_sq();
    const double hi = set.sigma_hi_sq();

    Eigen::VectorXd chosen(ev.size());
    double value = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        const double l = ev(i);
        // zero eigenvalues: hi for kUpper, lo for kLower
        const double v = direction == Direction::kUpper ? (l < 0.0 ? lo : hi)
                                                        : (l < 0.0 ? hi : lo);
        chosen(i) = v;
        value += v * l;
    }
    const Eigen::MatrixXd& q = solver.eigenvectors();
    return GValue{0.5 * value, SymMatrix(q * chosen.asDiagonal() * q.transpose())};
}

bool contains(const AmbiguitySet& set, const SymMatrix& lambda) noexcept {
    if (lambda.dim() != set.dim()) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lambda.matrix(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) return false;
    const Eigen::VectorXd& ev = solver.eigenvalues();
    return ev.minCoeff() >= set.sigma_lo_sq() - kMembershipTolerance &&
           ev.maxCoeff() <= set.sigma_hi_sq() + kMembershipTolerance;
}

}  // namespace gctrl
