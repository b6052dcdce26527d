#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gctrl/errors.hpp"
#include "gctrl/sublinear.hpp"

using namespace gctrl;

namespace {

// Brute-force sup / inf of v * alpha / 2 over a fine grid of v in [lo, hi].
double grid_scalar(double alpha, double lo, double hi, bool upper) {
    double best = upper ? -INFINITY : INFINITY;
    for (int i = 0; i <= 10000; ++i) {
        const double v = lo + (hi - lo) * i / 10000.0;
        const double g = 0.5 * alpha * v;
        best = upper ? std::max(best, g) : std::min(best, g);
    }
    return best;
}

// sup / inf of tr(A L) / 2 over L = R diag(v1, v2) R^T, v on a grid, R a rotation.
double grid_matrix_2d(const Eigen::Matrix2d& a, double lo, double hi, bool upper) {
    double best = upper ? -INFINITY : INFINITY;
    for (int k = 0; k < 360; ++k) {
        const double phi = M_PI * k / 360.0;
        Eigen::Matrix2d r;
        r << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
        for (int i = 0; i <= 30; ++i) {
            for (int j = 0; j <= 30; ++j) {
                const Eigen::Vector2d v(lo + (hi - lo) * i / 30.0, lo + (hi - lo) * j / 30.0);
                const double g = 0.5 * (a * r * v.asDiagonal() * r.transpose()).trace();
                best = upper ? std::max(best, g) : std::min(best, g);
            }
        }
    }
    return best;
}

const AmbiguitySet kDesk(1, 0.25, 1.0);

}  // namespace

TEST(SymMatrix, SymmetrisesWithinTolerance) {
    Eigen::Matrix2d a;
    a << 1.0, 2.0, 2.0 + 1e-12, 3.0;
    const SymMatrix s(a);
    EXPECT_EQ(s(0, 1), s(1, 0));
    EXPECT_NEAR(s(0, 1), 2.0, 1e-12);
}

TEST(SymMatrix, RejectsAsymmetricAndNonFinite) {
    Eigen::Matrix2d a;
    a << 1.0, 2.0, 2.1, 3.0;
    EXPECT_THROW(SymMatrix{a}, InvalidArgument);
    a << 1.0, NAN, NAN, 3.0;
    EXPECT_THROW(SymMatrix{a}, InvalidArgument);
    EXPECT_THROW(SymMatrix{Eigen::MatrixXd(2, 3)}, InvalidArgument);
}

TEST(SymMatrix, SqrtSquaresBack) {
    Eigen::Matrix2d a;
    a << 0.8, 0.1, 0.1, 0.4;
    const SymMatrix r = SymMatrix(a).sqrt();
    EXPECT_LT((r.matrix() * r.matrix() - a).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(r(0, 1), r(1, 0));
}

TEST(AmbiguitySet, ValidatesBounds) {
    EXPECT_THROW(AmbiguitySet(1, 0.0, 1.0), InvalidArgument);
    EXPECT_THROW(AmbiguitySet(1, 2.0, 1.0), InvalidArgument);
    EXPECT_THROW(AmbiguitySet(0, 0.5, 1.0), InvalidArgument);
    EXPECT_THROW(AmbiguitySet(1, 0.5, INFINITY), InvalidArgument);
    EXPECT_TRUE(AmbiguitySet(2, 0.5, 0.5).degenerate());
}

TEST(GScalar, DeskValuesMatchGridOracle) {
    EXPECT_EQ(g_scalar(0.0, kDesk, Direction::kUpper), 0.0);
    EXPECT_EQ(g_scalar(0.0, kDesk, Direction::kLower), 0.0);
    EXPECT_DOUBLE_EQ(g_scalar(2.0, kDesk, Direction::kUpper), 1.0);
    EXPECT_DOUBLE_EQ(g_scalar(-2.0, kDesk, Direction::kUpper), -0.25);
    for (double alpha : {2.0, -2.0, 0.7, -3.1}) {
        for (bool up : {true, false}) {
            const double g = g_scalar(alpha, kDesk, up ? Direction::kUpper : Direction::kLower);
            EXPECT_NEAR(g, grid_scalar(alpha, 0.25, 1.0, up), 1e-12) << alpha;
        }
    }
}

TEST(GScalar, RejectsMatrixSets) {
    EXPECT_THROW((void)g_scalar(1.0, AmbiguitySet(2, 0.25, 1.0), Direction::kUpper), InvalidArgument);
}

TEST(GMatrix, ZeroMatrixUsesTieBreak) {
    const AmbiguitySet set(2, 0.25, 1.0);
    const GValue up = g_matrix(SymMatrix::identity(2, 0.0), set, Direction::kUpper);
    EXPECT_EQ(up.value, 0.0);
    EXPECT_NEAR(up.maximizer.eigenvalues()(0), 1.0, 1e-15);
    EXPECT_NEAR(up.maximizer.eigenvalues()(1), 1.0, 1e-15);
    const GValue down = g_matrix(SymMatrix::identity(2, 0.0), set, Direction::kLower);
    EXPECT_NEAR(down.maximizer.eigenvalues()(1), 0.25, 1e-15);
}

TEST(GMatrix, DiagonalExampleMatchesBruteForce) {
    const AmbiguitySet set(2, 0.25, 1.0);
    Eigen::Matrix2d a;
    a << 1.0, 0.0, 0.0, -1.0;
    const GValue g = g_matrix(SymMatrix(a), set, Direction::kUpper);
    EXPECT_NEAR(g.value, 0.375, 1e-15);
    EXPECT_NEAR(grid_matrix_2d(a, 0.25, 1.0, true), 0.375, 1e-12);
}

TEST(GMatrix, RotatedMatricesMatchBruteForce) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::Matrix2d a;
        a << u(rng), u(rng), 0.0, u(rng);
        a(1, 0) = a(0, 1);
        for (bool up : {true, false}) {
            const double g = g_matrix(SymMatrix(a), kDesk.dim() == 1 ? AmbiguitySet(2, 0.25, 1.0) : kDesk,
                                      up ? Direction::kUpper : Direction::kLower)
                                 .value;
            const double brute = grid_matrix_2d(a, 0.25, 1.0, up);
            // The grid is a subset of Sigma: it never beats the closed form.
            if (up) {
                EXPECT_LE(brute, g + 1e-12);
            } else {
                EXPECT_GE(brute, g - 1e-12);
            }
            EXPECT_NEAR(g, brute, 1e-4);
        }
    }
}

TEST(GMatrix, ScalarReductionIsExact) {
    for (double alpha : {-3.0, -0.5, 0.0, 0.2, 4.0}) {
        for (Direction d : {Direction::kUpper, Direction::kLower}) {
            EXPECT_EQ(g_matrix(SymMatrix::scalar(alpha), kDesk, d).value, g_scalar(alpha, kDesk, d));
        }
    }
}

TEST(GMatrix, DimensionMismatchThrows) {
    EXPECT_THROW((void)g_matrix(SymMatrix::identity(3), AmbiguitySet(2, 0.25, 1.0), Direction::kUpper),
                 InvalidArgument);
}

TEST(Contains, BoxMembership) {
    const AmbiguitySet set(2, 0.25, 1.0);
    EXPECT_TRUE(contains(set, SymMatrix::identity(2, 1.0)));
    EXPECT_TRUE(contains(set, SymMatrix::diagonal(Eigen::Vector2d(0.25, 1.0))));
    EXPECT_FALSE(contains(set, SymMatrix::diagonal(Eigen::Vector2d(2.0, 0.25))));
    EXPECT_FALSE(contains(set, SymMatrix::identity(3, 0.5)));
    EXPECT_TRUE(contains(set, SymMatrix::identity(2, 1.0 + 1e-10)));
}

TEST(GMatrix, AchievabilityAndOrderingOnRandomMatrices) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto d = static_cast<Eigen::Index>(1 + trial % 4);
        Eigen::MatrixXd m(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) m(i, j) = n(rng);
        }
        const SymMatrix a(0.5 * (m + m.transpose()));
        const AmbiguitySet set(static_cast<std::size_t>(d), 0.3, 1.7);
        const GValue up = g_matrix(a, set, Direction::kUpper);
        const GValue down = g_matrix(a, set, Direction::kLower);
        EXPECT_NEAR(0.5 * inner(a, up.maximizer), up.value, 1e-12);
        EXPECT_NEAR(0.5 * inner(a, down.maximizer), down.value, 1e-12);
        EXPECT_TRUE(contains(set, up.maximizer));
        EXPECT_TRUE(contains(set, down.maximizer));
        EXPECT_GT(up.value, down.value);
    }
}
