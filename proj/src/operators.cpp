#include "illposed/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "illposed/rng.hpp"

namespace illposed {

const char* to_string(Nonlinearity f) {
    return f == Nonlinearity::Identity ? "identity" : "square";
}

ForwardOp::ForwardOp(RowMatrix A, Nonlinearity f) : A_(std::move(A)), f_(f) {
    require(A_.rows() == A_.cols() && A_.rows() > 0, "forward operator must be square and nonempty");
    require(A_.allFinite(), "forward operator has non-finite entries");
}

DataDrivenOp::DataDrivenOp(Vector sigma, Matrix left, Matrix right, Nonlinearity f)
    : sigma_(std::move(sigma)), left_(std::move(left)), right_(std::move(right)), f_(f) {
    const auto N = sigma_.size();
    require(N > 0, "surrogate rank must be positive");
    require(left_.cols() == N && right_.cols() == N && left_.rows() == right_.rows(),
            "surrogate factor shapes disagree");
    require(N <= left_.rows(), "surrogate rank exceeds dimension");
    for (Eigen::Index j = 0; j < N; ++j) {
        require(sigma_[j] > 0.0, "surrogate singular values must be positive");
        if (j > 0) require(sigma_[j] <= sigma_[j - 1], "surrogate singular values must be nonincreasing");
    }
    dense_ = left_ * sigma_.asDiagonal() * right_.transpose();
}

namespace {

void check_row(const RowMatrix& A, std::size_t i) {
    if (i >= static_cast<std::size_t>(A.rows())) throw InvalidArgument("row index out of range");
}

void check_length(const RowMatrix& A, const Vector& v) {
    require(v.size() == A.cols(), "dimension mismatch");
}

}  // namespace

Vector apply(const RowMatrix& A, Nonlinearity f, const Vector& x) {
    check_length(A, x);
    Vector u = A * x;
    if (f == Nonlinearity::Square) u = u.array().square();
    return u;
}

double row_value(const RowMatrix& A, Nonlinearity f, std::size_t i, const Vector& x) {
    check_row(A, i);
    check_length(A, x);
    const double u = A.row(static_cast<Eigen::Index>(i)).dot(x);
    return f == Nonlinearity::Square ? u * u : u;
}

Vector row_gradient_step(const RowMatrix& A, Nonlinearity f, std::size_t i, const Vector& x,
                         double r) {
    check_row(A, i);
    check_length(A, x);
    const auto row = A.row(static_cast<Eigen::Index>(i));
    const double scale = f == Nonlinearity::Square ? 2.0 * row.dot(x) * r : r;
    return scale * row.transpose();
}

Vector full_gradient(const RowMatrix& A, Nonlinearity f, const Vector& x, const Vector& y) {
    check_length(A, x);
    check_length(A, y);
    const Vector u = A * x;
    Vector w;
    if (f == Nonlinearity::Square)
        w = 2.0 * u.array() * (u.array().square() - y.array());
    else
        w = u - y;
    return A.transpose() * w / static_cast<double>(A.rows());
}

Matrix jacobian(const RowMatrix& A, Nonlinearity f, const Vector& x) {
    if (f == Nonlinearity::Identity) return A;
    const Vector u = A * x;
    return (2.0 * u).asDiagonal() * A;
}

DataDrivenOp truncate_svd(const Matrix& A, std::size_t N, Nonlinearity f) {
    require(A.rows() == A.cols() && A.rows() > 0, "truncate_svd expects a square matrix");
    require(N >= 1 && N <= static_cast<std::size_t>(A.rows()), "truncation rank out of range");
    if (!A.allFinite()) throw NumericalError("truncate_svd: non-finite input");
    Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw NumericalError("truncate_svd: SVD did not converge");
    const auto k = static_cast<Eigen::Index>(N);
    return DataDrivenOp(svd.singularValues().head(k), svd.matrixU().leftCols(k),
                        svd.matrixV().leftCols(k), f);
}

SharedBasisReport verify_assumption_v(const ForwardOp& F, const DataDrivenOp& G,
                                      const Vector* x_ref) {
    require(F.n() == G.n(), "operator dimensions disagree");
    SharedBasisReport rep;
    Matrix KF = F.matrix();
    Vector sigma_G = G.sigma();
    Matrix right_G = G.right_vectors();
    if (F.nonlinearity() == Nonlinearity::Square) {
        require(x_ref != nullptr, "Square operators are checked at a reference point");
        rep.exact = false;
        KF = jacobian(F.matrix(), F.nonlinearity(), *x_ref);
        const Matrix KG = jacobian(G.matrix(), G.nonlinearity(), *x_ref);
        Eigen::BDCSVD<Matrix> svdG(KG, Eigen::ComputeThinV);
        sigma_G = svdG.singularValues().head(G.rank());
        right_G = svdG.matrixV().leftCols(G.rank());
    }
    Eigen::BDCSVD<Matrix> svd(KF, Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const Matrix& V = svd.matrixV();

    // Group numerically equal singular values so a degenerate spectrum is
    // compared subspace by subspace.
    const double tol = 1e-8 * std::max(s[0], std::numeric_limits<double>::min());
    std::vector<std::pair<Eigen::Index, Eigen::Index>> clusters;
    for (Eigen::Index j = 0; j < s.size();) {
        Eigen::Index e = j + 1;
        while (e < s.size() && s[j] - s[e] <= tol) ++e;
        clusters.emplace_back(j, e - j);
        j = e;
    }

    for (Eigen::Index j = 0; j < right_G.cols(); ++j) {
        const Vector v = right_G.col(j);
        double best_angle = std::numeric_limits<double>::infinity();
        double matched = 0.0;
        for (const auto& [start, len] : clusters) {
            const Vector proj = V.middleCols(start, len).transpose() * v;
            const double along = proj.norm();
            const double across = (v - V.middleCols(start, len) * proj).norm();
            const double angle = std::atan2(across, along);
            if (angle < best_angle) {
                best_angle = angle;
                matched = s.segment(start, len).mean();
            }
        }
        rep.max_angle = std::max(rep.max_angle, best_angle);
        const double ratio = matched > 0.0 ? sigma_G[j] / matched
                                           : std::numeric_limits<double>::infinity();
        rep.c_R = std::max(rep.c_R, ratio);
    }
    rep.angles_ok = rep.max_angle < 1e-8;
    rep.bound_ok = rep.c_R <= 1.0 + 1e-10;
    return rep;
}

std::optional<double> cone_ratio(const ForwardOp& op, const Vector& x, const Vector& xt) {
    const RowMatrix& A = op.matrix();
    const Vector u = A * x;
    const Vector ut = A * xt;
    std::optional<double> best;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        double num, den;
        if (op.nonlinearity() == Nonlinearity::Identity) {
            num = 0.0;
            den = std::abs(u[i] - ut[i]);
        } else {
            // u^2 - ut^2 - 2 ut (u - ut) = (u - ut)^2
            const double d = u[i] - ut[i];
            num = d * d;
            den = std::abs(u[i] * u[i] - ut[i] * ut[i]);
        }
        if (den == 0.0) continue;
        const double r = num / den;
        if (!best || r > *best) best = r;
    }
    return best;
}

namespace {

Vector sample_ball(Rng& rng, const Vector& center, double radius) {
    Vector dir = rng.normal_vector(static_cast<std::size_t>(center.size()));
    const double norm = dir.norm();
    if (norm > 0.0) dir /= norm;
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(center.size()));
    return center + r * dir;
}

}  // namespace

double estimate_cone_constant(const ForwardOp& op, const Vector& center, double radius,
                              std::size_t samples, std::uint64_t seed) {
    require(radius > 0.0, "radius must be positive");
    require(samples >= 2, "need at least two samples");
    require(center.size() == static_cast<Eigen::Index>(op.n()), "dimension mismatch");
    if (op.nonlinearity() == Nonlinearity::Identity) return 0.0;
    Rng rng(seed);
    std::vector<Vector> pts;
    pts.reserve(samples);
    for (std::size_t k = 0; k < samples; ++k) pts.push_back(sample_ball(rng, center, radius));
    std::optional<double> best;
    for (std::size_t a = 0; a < samples; ++a)
        for (std::size_t b = 0; b < samples; ++b) {
            if (a == b) continue;
            const auto r = cone_ratio(op, pts[a], pts[b]);
            if (r && (!best || *r > *best)) best = r;
        }
    if (!best) throw NumericalError("cone constant undefined: every denominator vanished");
    return *best;
}

namespace {

double ratio_gap(const Vector& u, const Vector& u_ref, bool skip_zero) {
    double gap = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        if (u_ref[i] == 0.0) {
            if (skip_zero) continue;
            throw NumericalError("singular reference: (A x_ref)_i = 0");
        }
        gap = std::max(gap, std::abs(u[i] / u_ref[i] - 1.0));
    }
    return gap;
}

}  // namespace

double range_invariance_gap(const ForwardOp& op, const Vector& x, const Vector& x_ref) {
    require(op.nonlinearity() == Nonlinearity::Square, "range invariance gap is for Square operators");
    return ratio_gap(op.matrix() * x, op.matrix() * x_ref, false);
}

namespace {

double max_row_gradient_norm(const RowMatrix& A, Nonlinearity f, const Vector& x) {
    const Vector rows = A.rowwise().norm();
    if (f == Nonlinearity::Identity) return rows.maxCoeff();
    const Vector u = A * x;
    return (2.0 * u.array().abs() * rows.array()).maxCoeff();
}

}  // namespace

AssumptionConstants measure_constants(const ForwardOp& F, const DataDrivenOp& G,
                                      const Vector& x_dag, const Vector& y_dag, double radius,
                                      std::uint64_t seed) {
    require(F.n() == G.n(), "operator dimensions disagree");
    AssumptionConstants c;
    c.L_F = max_row_gradient_norm(F.matrix(), F.nonlinearity(), x_dag);
    c.L_G = max_row_gradient_norm(G.matrix(), G.nonlinearity(), x_dag);
    const double learn = rms_norm(apply(G, x_dag) - y_dag);
    c.C_min = learn;
    c.C_max = learn;
    c.c_R = verify_assumption_v(F, G, &x_dag).c_R;
    if (F.nonlinearity() == Nonlinearity::Square && radius > 0.0) {
        c.eta_F = estimate_cone_constant(F, x_dag, radius, 16, seed);
        // Rows where the reference image vanishes carry no range information.
        const Vector uF = F.matrix() * x_dag, uG = G.matrix() * x_dag;
        Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
        for (int k = 0; k < 16; ++k) {
            const Vector x = sample_ball(rng, x_dag, radius);
            const double dist = (x - x_dag).norm();
            if (dist == 0.0) continue;
            c.c_F = std::max(c.c_F, ratio_gap(F.matrix() * x, uF, true) / dist);
            c.c_G = std::max(c.c_G, ratio_gap(G.matrix() * x, uG, true) / dist);
        }
    }
    return c;
}

}  // namespace illposed
