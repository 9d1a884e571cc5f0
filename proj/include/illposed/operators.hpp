#pragma once

#include <cstdint>
#include <optional>

#include "illposed/types.hpp"

namespace illposed {

enum class Nonlinearity { Identity, Square };

const char* to_string(Nonlinearity f);

// F_i(x) = f(<a_i, x>) with f the identity or the square.
class ForwardOp {
public:
    ForwardOp() = default;
    ForwardOp(RowMatrix A, Nonlinearity f);

    const RowMatrix& matrix() const { return A_; }
    Nonlinearity nonlinearity() const { return f_; }
    std::size_t n() const { return static_cast<std::size_t>(A_.rows()); }

private:
    RowMatrix A_;
    Nonlinearity f_ = Nonlinearity::Identity;
};

// Rank-N surrogate sum_j sigma_j psi_j phi_j^T. The dense product is cached so
// the stochastic solvers can take rows from it.
class DataDrivenOp {
public:
    DataDrivenOp() = default;
    DataDrivenOp(Vector sigma, Matrix left, Matrix right, Nonlinearity f);

    std::size_t rank() const { return static_cast<std::size_t>(sigma_.size()); }
    std::size_t n() const { return static_cast<std::size_t>(dense_.rows()); }
    const Vector& sigma() const { return sigma_; }
    const Matrix& left_vectors() const { return left_; }
    const Matrix& right_vectors() const { return right_; }
    const RowMatrix& matrix() const { return dense_; }
    Nonlinearity nonlinearity() const { return f_; }

private:
    Vector sigma_;
    Matrix left_, right_;
    RowMatrix dense_;
    Nonlinearity f_ = Nonlinearity::Identity;
};

// Shared implementation for both operator kinds; i is 0-based throughout.
Vector apply(const RowMatrix& A, Nonlinearity f, const Vector& x);
double row_value(const RowMatrix& A, Nonlinearity f, std::size_t i, const Vector& x);
Vector row_gradient_step(const RowMatrix& A, Nonlinearity f, std::size_t i, const Vector& x,
                         double r);
Vector full_gradient(const RowMatrix& A, Nonlinearity f, const Vector& x, const Vector& y);

template <class Op>
Vector apply(const Op& op, const Vector& x) {
    return apply(op.matrix(), op.nonlinearity(), x);
}
template <class Op>
double row_value(const Op& op, std::size_t i, const Vector& x) {
    return row_value(op.matrix(), op.nonlinearity(), i, x);
}
template <class Op>
Vector row_gradient_step(const Op& op, std::size_t i, const Vector& x, double r) {
    return row_gradient_step(op.matrix(), op.nonlinearity(), i, x, r);
}
template <class Op>
Vector full_gradient(const Op& op, const Vector& x, const Vector& y) {
    return full_gradient(op.matrix(), op.nonlinearity(), x, y);
}

// Jacobian F'(x): A itself for Identity, 2 diag(Ax) A for Square.
Matrix jacobian(const RowMatrix& A, Nonlinearity f, const Vector& x);

DataDrivenOp truncate_svd(const Matrix& A, std::size_t N, Nonlinearity f = Nonlinearity::Identity);
inline DataDrivenOp truncate_svd(const ForwardOp& op, std::size_t N) {
    return truncate_svd(Matrix(op.matrix()), N, op.nonlinearity());
}

struct SharedBasisReport {
    double c_R = 0.0;
    double max_angle = 0.0;  // radians
    bool angles_ok = false;
    bool bound_ok = false;
    bool exact = true;  // false for Square, where the check is only indicative
    bool pass() const { return angles_ok && bound_ok; }
};

// Checks that every right vector of G lies in a right singular subspace of F
// (at x_ref for Square operators) and reports max sigma~_j / sigma_j.
SharedBasisReport verify_assumption_v(const ForwardOp& F, const DataDrivenOp& G,
                                      const Vector* x_ref = nullptr);

// Max over rows of |F_i(x) - F_i(xt) - F_i'(xt)(x - xt)| / |F_i(x) - F_i(xt)|.
// Returns nullopt if every denominator vanishes.
std::optional<double> cone_ratio(const ForwardOp& op, const Vector& x, const Vector& xt);

double estimate_cone_constant(const ForwardOp& op, const Vector& center, double radius,
                              std::size_t samples, std::uint64_t seed);

double range_invariance_gap(const ForwardOp& op, const Vector& x, const Vector& x_ref);

struct AssumptionConstants {
    double L_F = 0.0;
    double L_G = 0.0;
    double eta_F = 0.0;
    double c_F = 0.0;
    double c_G = 0.0;
    double c_R = 0.0;
    double C_min = 0.0;
    double C_max = 0.0;
    std::optional<double> theta;  // stochastic range invariance exponent, user supplied
};

// Row-gradient bounds are taken at x_dag for Square operators; the cone constant
// is sampled on the ball of radius `radius` about x_dag when radius > 0.
AssumptionConstants measure_constants(const ForwardOp& F, const DataDrivenOp& G,
                                      const Vector& x_dag, const Vector& y_dag,
                                      double radius = 0.0, std::uint64_t seed = 0);

}  // namespace illposed
