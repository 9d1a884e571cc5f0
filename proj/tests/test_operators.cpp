#include <gtest/gtest.h>

#include <cmath>

#include "illposed/operators.hpp"
#include "illposed/problems.hpp"
#include "illposed/rng.hpp"

using namespace illposed;

namespace {

RowMatrix eye(Eigen::Index n) { return RowMatrix::Identity(n, n); }

ForwardOp random_op(Rng& rng, std::size_t n, Nonlinearity f) {
    return ForwardOp(rng.normal_matrix(n, n), f);
}

// Central difference of F_i along direction u.
double fd_directional(const ForwardOp& op, std::size_t i, const Vector& x, const Vector& u, double h) {
    return (row_value(op, i, x + h * u) - row_value(op, i, x - h * u)) / (2 * h);
}

double spectral_norm(const Matrix& M) {
    return Eigen::JacobiSVD<Matrix>(M).singularValues()[0];
}

}  // namespace

TEST(Apply, IdentityAndSquare) {
    const Vector x = (Vector(2) << 3, -1).finished();
    EXPECT_EQ(apply(ForwardOp(eye(2), Nonlinearity::Identity), x), x);
    EXPECT_EQ(apply(ForwardOp(eye(2), Nonlinearity::Square), x), (Vector(2) << 9, 1).finished());
}

TEST(Apply, DimensionMismatch) {
    EXPECT_THROW(apply(ForwardOp(eye(2), Nonlinearity::Identity), Vector::Zero(3)), InvalidArgument);
}

TEST(Apply, ShawReproducesStoredData) {
    const Problem p = make_shaw(1000);
    const Vector y = apply(p.op, p.x_dag);
    EXPECT_TRUE((y.array() == p.y_dag.array()).all());
}

TEST(RowValue, Examples) {
    RowMatrix A(2, 2);
    A << 1, 2, 0, 1;
    const Vector x = Vector::Ones(2);
    EXPECT_EQ(row_value(ForwardOp(A, Nonlinearity::Identity), 0, x), 3.0);
    EXPECT_EQ(row_value(ForwardOp(A, Nonlinearity::Square), 0, x), 9.0);
    EXPECT_THROW(row_value(ForwardOp(A, Nonlinearity::Square), 2, x), InvalidArgument);
}

TEST(RowValue, MatchesApplyOnGravity) {
    const Problem p = make_gravity(200);
    EXPECT_DOUBLE_EQ(row_value(p.op, 6, p.x_dag), apply(p.op, p.x_dag)[6]);
    EXPECT_NEAR(row_value(p.op, 6, p.x_dag), p.y_dag[6], 1e-14);
}

TEST(RowGradient, Examples) {
    RowMatrix A = eye(2);
    const Vector x = (Vector(2) << 3, 5).finished();
    EXPECT_EQ(row_gradient_step(ForwardOp(A, Nonlinearity::Identity), 0, x, 2.0),
              (Vector(2) << 2, 0).finished());
    EXPECT_EQ(row_gradient_step(ForwardOp(A, Nonlinearity::Square), 0, x, 1.0),
              (Vector(2) << 6, 0).finished());
    EXPECT_THROW(row_gradient_step(ForwardOp(A, Nonlinearity::Square), 5, x, 1.0), InvalidArgument);
}

TEST(RowGradient, SquareMatchesFiniteDifferences) {
    Rng rng(11);
    const ForwardOp op = random_op(rng, 5, Nonlinearity::Square);
    const Vector x = rng.normal_vector(5);
    for (std::size_t i = 0; i < 5; ++i) {
        const Vector g = row_gradient_step(op, i, x, 1.0);
        Vector fd(5);
        for (Eigen::Index j = 0; j < 5; ++j)
            fd[j] = fd_directional(op, i, x, Vector::Unit(5, j), 1e-5);
        EXPECT_LT((fd - g).norm() / g.norm(), 1e-6);
    }
}

TEST(RowGradient, AdjointConsistency) {
    Rng rng(12);
    for (auto f : {Nonlinearity::Identity, Nonlinearity::Square}) {
        const ForwardOp op = random_op(rng, 6, f);
        const Vector x = rng.normal_vector(6), u = rng.normal_vector(6);
        for (std::size_t i = 0; i < 6; ++i) {
            const double lhs = row_gradient_step(op, i, x, 1.0).dot(u);
            const double rhs = fd_directional(op, i, x, u, 1e-5);
            EXPECT_NEAR(lhs, rhs, 1e-8 * std::max(1.0, std::abs(rhs)));
        }
    }
}

TEST(FullGradient, Examples) {
    const ForwardOp op(eye(2), Nonlinearity::Identity);
    EXPECT_EQ(full_gradient(op, Vector::Ones(2), Vector::Zero(2)), Vector::Constant(2, 0.5));
    const Vector x = (Vector(2) << 0.3, -2).finished();
    EXPECT_EQ(full_gradient(op, x, apply(op, x)), Vector::Zero(2));
    EXPECT_THROW(full_gradient(op, x, Vector::Zero(3)), InvalidArgument);
}

TEST(FullGradient, MeanOfRowSteps) {
    Rng rng(13);
    for (auto f : {Nonlinearity::Identity, Nonlinearity::Square}) {
        const ForwardOp op = random_op(rng, 10, f);
        const Vector x = rng.normal_vector(10), y = rng.normal_vector(10);
        Vector sum = Vector::Zero(10);
        for (std::size_t i = 0; i < 10; ++i)
            sum += row_gradient_step(op, i, x, row_value(op, i, x) - y[static_cast<Eigen::Index>(i)]);
        const Vector g = full_gradient(op, x, y);
        EXPECT_LT((g - sum / 10.0).lpNorm<Eigen::Infinity>(), 1e-14 * std::max(1.0, g.norm()));
    }
}

TEST(FullGradient, LinearSpecialization) {
    Rng rng(14);
    const ForwardOp op = random_op(rng, 8, Nonlinearity::Identity);
    const Vector x = rng.normal_vector(8), y = rng.normal_vector(8);
    const Matrix A = op.matrix();
    const Vector expected = A.transpose() * (A * x - y) / 8.0;
    EXPECT_LT((full_gradient(op, x, y) - expected).norm(), 1e-12);
}

TEST(TruncateSvd, DiagonalExample) {
    const Matrix A = Vector((Vector(3) << 3, 2, 1).finished()).asDiagonal();
    const DataDrivenOp G = truncate_svd(A, 2);
    EXPECT_NEAR(G.sigma()[0], 3.0, 1e-14);
    EXPECT_NEAR(G.sigma()[1], 2.0, 1e-14);
    Matrix expected = Matrix::Zero(3, 3);
    expected(0, 0) = 3;
    expected(1, 1) = 2;
    EXPECT_LT((Matrix(G.matrix()) - expected).norm(), 1e-13);
}

TEST(TruncateSvd, FullRankReproducesMatrix) {
    Rng rng(15);
    const Matrix A = rng.normal_matrix(7, 7);
    EXPECT_LT((Matrix(truncate_svd(A, 7).matrix()) - A).norm(), 1e-10);
}

TEST(TruncateSvd, Errors) {
    const Matrix A = Matrix::Identity(3, 3);
    EXPECT_THROW(truncate_svd(A, 0), InvalidArgument);
    EXPECT_THROW(truncate_svd(A, 4), InvalidArgument);
    Matrix B = A;
    B(1, 1) = std::nan("");
    EXPECT_THROW(truncate_svd(B, 2), NumericalError);
}

TEST(TruncateSvd, BestApproximationAndOrdering) {
    Rng rng(16);
    const std::size_t n = 8, N = 3;
    const Matrix A = rng.normal_matrix(n, n);
    const DataDrivenOp G = truncate_svd(A, N);
    const Vector s = Eigen::JacobiSVD<Matrix>(A).singularValues();
    const double err = spectral_norm(A - Matrix(G.matrix()));
    EXPECT_NEAR(err, s[N], 1e-8 * s[N]);
    for (int t = 0; t < 20; ++t) {
        const Matrix M = rng.normal_matrix(n, N) * rng.normal_matrix(N, n);
        EXPECT_LE(err, spectral_norm(A - M) + 1e-8);
    }
    for (Eigen::Index j = 1; j < G.sigma().size(); ++j) EXPECT_GE(G.sigma()[j - 1], G.sigma()[j]);
    EXPECT_GT(G.sigma()[N - 1], 0.0);
    const Matrix I = Matrix::Identity(N, N);
    EXPECT_LT((G.right_vectors().transpose() * G.right_vectors() - I).norm(), 1e-10);
    EXPECT_LT((G.left_vectors().transpose() * G.left_vectors() - I).norm(), 1e-10);
}

TEST(TruncateSvd, ShawSixModesCarryNinetyNinePercent) {
    // Midpoint shaw keeps 0.99995 here, more than the quoted 99%.
    const Problem p = make_shaw(1000);
    const Vector s = Eigen::BDCSVD<Matrix>(Matrix(p.op.matrix())).singularValues();
    EXPECT_GE(s.head(6).squaredNorm() / s.squaredNorm(), 0.99 - 0.005);
}

TEST(AssumptionV, TruncatedSvdSharesBasis) {
    Rng rng(17);
    const ForwardOp F = random_op(rng, 6, Nonlinearity::Identity);
    for (std::size_t N : {2u, 6u}) {
        const SharedBasisReport r = verify_assumption_v(F, truncate_svd(F, N));
        EXPECT_TRUE(r.pass());
        EXPECT_LT(r.max_angle, 1e-8);
        EXPECT_NEAR(r.c_R, 1.0, 1e-12);
    }
}

TEST(AssumptionV, RotatedBasisFails) {
    Rng rng(18);
    const ForwardOp F = random_op(rng, 5, Nonlinearity::Identity);
    const DataDrivenOp G = truncate_svd(F, 2);
    // Rotate the two right vectors by 0.1 rad within their plane and reorder
    // so the rotation does not map one onto the other.
    Matrix V = G.right_vectors();
    const double c = std::cos(0.1), s = std::sin(0.1);
    const Vector v0 = c * V.col(0) + s * V.col(1);
    const Vector v1 = -s * V.col(0) + c * V.col(1);
    V.col(0) = v0;
    V.col(1) = v1;
    const DataDrivenOp R(G.sigma(), G.left_vectors(), V, Nonlinearity::Identity);
    const SharedBasisReport r = verify_assumption_v(F, R);
    EXPECT_NEAR(r.max_angle, 0.1, 1e-10);
    EXPECT_FALSE(r.pass());
}

TEST(ConeConstant, IdentityIsZero) {
    Rng rng(19);
    const ForwardOp F = random_op(rng, 4, Nonlinearity::Identity);
    EXPECT_EQ(estimate_cone_constant(F, Vector::Zero(4), 1.0, 5, 1), 0.0);
}

TEST(ConeConstant, ScalarClosedForm) {
    const ForwardOp F(RowMatrix::Ones(1, 1), Nonlinearity::Square);
    const double h = 0.1;
    const auto r = cone_ratio(F, Vector::Constant(1, 1 + h), Vector::Constant(1, 1.0));
    ASSERT_TRUE(r);
    // |(1+h)^2 - 1 - 2h| / |(1+h)^2 - 1|
    const double expected = (h * h) / std::abs((1 + h) * (1 + h) - 1.0);
    EXPECT_NEAR(*r, expected, 1e-14);
    EXPECT_NEAR(*r, 0.047619047619, 1e-10);
}

TEST(ConeConstant, ShrinksWithRadius) {
    Rng rng(20);
    RowMatrix A = rng.normal_matrix(4, 4).cwiseAbs();
    const ForwardOp F(A, Nonlinearity::Square);
    const Vector center = Vector::Ones(4);
    const double big = estimate_cone_constant(F, center, 0.1, 10, 7);
    const double small = estimate_cone_constant(F, center, 0.01, 10, 7);
    EXPECT_LT(small, big);
    EXPECT_LT(big, 1.0);
}

TEST(ConeConstant, Preconditions) {
    const ForwardOp F(RowMatrix::Ones(1, 1), Nonlinearity::Square);
    EXPECT_THROW(estimate_cone_constant(F, Vector::Ones(1), 0.0, 5, 1), InvalidArgument);
    EXPECT_THROW(estimate_cone_constant(F, Vector::Ones(1), 1.0, 1, 1), InvalidArgument);
    const ForwardOp Z(RowMatrix::Zero(1, 1), Nonlinearity::Square);
    EXPECT_THROW(estimate_cone_constant(Z, Vector::Ones(1), 1.0, 3, 1), NumericalError);
}

TEST(RangeInvariance, Examples) {
    const ForwardOp F(eye(2), Nonlinearity::Square);
    const Vector ref = Vector::Ones(2);
    EXPECT_EQ(range_invariance_gap(F, ref, ref), 0.0);
    EXPECT_NEAR(range_invariance_gap(F, (Vector(2) << 1.1, 1).finished(), ref), 0.1, 1e-14);
    EXPECT_THROW(range_invariance_gap(F, ref, (Vector(2) << 0, 1).finished()), NumericalError);
}

TEST(RangeInvariance, LinearInDisplacement) {
    Rng rng(21);
    const ForwardOp F(rng.normal_matrix(5, 5), Nonlinearity::Square);
    const Vector ref = rng.normal_vector(5), dir = rng.normal_vector(5);
    const double g1 = range_invariance_gap(F, ref + 1e-3 * dir, ref);
    const double g2 = range_invariance_gap(F, ref + 2e-3 * dir, ref);
    EXPECT_NEAR(g2 / g1, 2.0, 1e-8);
}

TEST(Constants, LinearProblemsReportExactValues) {
    const Problem p = make_phillips(60);
    const DataDrivenOp G = truncate_svd(p.op, 10);
    const AssumptionConstants c = measure_constants(p.op, G, p.x_dag, p.y_dag, 0.5, 3);
    EXPECT_EQ(c.eta_F, 0.0);
    EXPECT_EQ(c.c_F, 0.0);
    EXPECT_EQ(c.c_G, 0.0);
    EXPECT_LE(c.c_R, 1.0 + 1e-12);
    EXPECT_NEAR(c.L_F, Matrix(p.op.matrix()).rowwise().norm().maxCoeff(), 1e-14);
    EXPECT_LE(c.L_G, c.L_F + 1e-12);
    EXPECT_LE(c.C_min, c.C_max);
    EXPECT_FALSE(c.theta.has_value());
}

TEST(Constants, SquaredProblemReportsNonzeroNonlinearity) {
    const Problem p = squared_variant(make_gravity(40));
    const DataDrivenOp G = truncate_svd(p.op, 8);
    const AssumptionConstants c = measure_constants(p.op, G, p.x_dag, p.y_dag, 0.05, 3);
    EXPECT_GT(c.eta_F, 0.0);
    EXPECT_LT(c.eta_F, 1.0);
    EXPECT_GT(c.c_F, 0.0);
}
