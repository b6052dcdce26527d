#pragma once

// Volatility ambiguity set and the sublinear / superlinear generators
//
//   G(A)  = 1/2 sup_{L in Sigma} tr(A L),
//   G~(A) = 1/2 inf_{L in Sigma} tr(A L),
//
// over the box Sigma = { L symmetric : lo^2 I <= L <= hi^2 I }.  For the box
// the optimisation decouples along the eigenvectors of A, so both operators
// reduce to a symmetric eigendecomposition.

#include <cstddef>

#include <Eigen/Dense>

namespace gctrl {

// Which side of the prior set is taken: kUpper is the sup (G, the sublinear
// expectation), kLower is the inf (G~, the superlinear mirror).
enum class Direction { kUpper, kLower };

[[nodiscard]] const char* to_string(Direction d) noexcept;

// Symmetric d x d matrix.  Construction symmetrises (A + A^T) / 2 and
// rejects inputs whose asymmetry exceeds 1e-10 relative to max |a_ij|.
class SymMatrix {
public:
    explicit SymMatrix(const Eigen::MatrixXd& a);

    [[nodiscard]] static SymMatrix identity(std::size_t dim, double scale = 1.0);
    [[nodiscard]] static SymMatrix diagonal(const Eigen::VectorXd& diag);
    [[nodiscard]] static SymMatrix scalar(double value) { return identity(1, value); }

    [[nodiscard]] std::size_t dim() const noexcept {
        return static_cast<std::size_t>(m_.rows());
    }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const {
        return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    [[nodiscard]] const Eigen::MatrixXd& matrix() const noexcept { return m_; }

    // Ascending eigenvalues; throws NumericError if the solver fails.
    [[nodiscard]] Eigen::VectorXd eigenvalues() const;
    // Symmetric (spectral) square root; requires a PSD matrix.
    [[nodiscard]] SymMatrix sqrt() const;
    [[nodiscard]] SymMatrix inverse() const;

    friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b);
    friend SymMatrix operator*(double s, const SymMatrix& a);

private:
    Eigen::MatrixXd m_;
};

// Frobenius inner product tr(A^T B) for symmetric arguments.
[[nodiscard]] double inner(const SymMatrix& a, const SymMatrix& b);

class AmbiguitySet {
public:
    // Requires dim >= 1 and 0 < sigma_lo_sq <= sigma_hi_sq < inf.
    AmbiguitySet(std::size_t dim, double sigma_lo_sq, double sigma_hi_sq);

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] double sigma_lo_sq() const noexcept { return lo_; }
    [[nodiscard]] double sigma_hi_sq() const noexcept { return hi_; }
    [[nodiscard]] bool degenerate() const noexcept { return lo_ == hi_; }

private:
    std::size_t dim_;
    double lo_;
    double hi_;
};

struct GValue {
    double value;
    SymMatrix maximizer;  // the L in Sigma attaining the sup (or inf)
};

// Absolute eigenvalue slack used by contains().
inline constexpr double kMembershipTolerance = 1e-9;

// 1/2 (hi^2 a^+ - lo^2 a^-) for kUpper, 1/2 (lo^2 a^+ - hi^2 a^-) for kLower.
// Throws InvalidArgument unless set.dim() == 1.
[[nodiscard]] double g_scalar(double alpha, const AmbiguitySet& set, Direction direction);

// Matrix generator with its optimiser.  Zero eigenvalues of `a` are assigned
// hi^2 for kUpper and lo^2 for kLower.
[[nodiscard]] GValue g_matrix(const SymMatrix& a, const AmbiguitySet& set, Direction direction);

// True iff dims match and every eigenvalue lies in [lo^2 - tol, hi^2 + tol].
[[nodiscard]] bool contains(const AmbiguitySet& set, const SymMatrix& lambda) noexcept;

}  // namespace gctrl
