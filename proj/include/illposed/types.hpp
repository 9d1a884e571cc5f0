#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace illposed {

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
// Row-major storage: the stochastic solvers touch one row per iteration.
template <class Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using RowMatrix = RowMatrixX<double>;

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when an iterate blows up. `iteration` is 1-based; `trial` is set by
// the ensemble runner (-1 for a single trajectory).
struct DivergenceError : std::runtime_error {
    DivergenceError(std::size_t iteration, long trial = -1)
        : std::runtime_error(message(iteration, trial)), iteration(iteration), trial(trial) {}
    std::size_t iteration;
    long trial;

private:
    static std::string message(std::size_t it, long trial) {
        std::string s = "iterate diverged at iteration " + std::to_string(it);
        if (trial >= 0) s += " (trial " + std::to_string(trial) + ")";
        return s;
    }
};

// RMS norm used on data space: (n^-1 sum v_i^2)^(1/2).
template <class Derived>
double rms_norm(const Eigen::MatrixBase<Derived>& v) {
    if (v.size() == 0) return 0.0;
    return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidArgument(what);
}

}  // namespace illposed
