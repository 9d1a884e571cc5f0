#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "illposed/operators.hpp"

namespace illposed {

struct Problem {
    std::string name;
    ForwardOp op;
    Vector x_dag;
    Vector y_dag;  // unscaled, y_i = F_i(x_dag)
    Vector grid;   // quadrature abscissae; empty for problems read back from disk

    std::size_t n() const { return op.n(); }
};

struct NoisyData {
    Vector y_delta;
    double delta0 = 0.0;
    double delta = 0.0;  // RMS norm of y_delta - y_dag
    std::uint64_t seed = 0;
};

struct SourceFixture {
    double nu = 0.0;
    Vector w;
    Vector x1;
    Vector x_dag;
    double w_norm = 0.0;
};

Problem make_shaw(std::size_t n);
Problem make_gravity(std::size_t n, double depth = 0.25);
Problem make_phillips(std::size_t n);
// "shaw", "squared-phillips", ...; the depth only affects gravity.
Problem make_problem(const std::string& name, std::size_t n, double gravity_depth = 0.25);

Problem squared_variant(const Problem& p);

NoisyData add_noise(const Problem& p, double delta0, std::uint64_t seed);

// x_dag = x1 + B^nu w with B = A^T A / n, evaluated in A's singular basis.
SourceFixture make_source_fixture(const ForwardOp& op, double nu, const Vector& w, const Vector& x1);

// Same operator, reference solution replaced by the fixture's.
Problem with_source(const Problem& p, const SourceFixture& s);

// Binary container: version byte, name, n, nonlinearity tag, then A (row-major),
// x_dag and y_dag as little-endian doubles.
void save_problem(const Problem& p, std::ostream& out);
Problem load_problem(std::istream& in);

}  // namespace illposed
