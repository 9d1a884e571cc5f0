#include "illposed/problems.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>

#include <Eigen/SVD>

#include "illposed/rng.hpp"

namespace illposed {

namespace {

using std::numbers::pi;

Problem finish(std::string name, RowMatrix A, Vector grid, Vector x) {
    x /= x.lpNorm<Eigen::Infinity>();
    Problem p{std::move(name), ForwardOp(std::move(A), Nonlinearity::Identity), std::move(x),
              Vector(), std::move(grid)};
    p.y_dag = apply(p.op, p.x_dag);
    return p;
}

Vector midpoints(std::size_t n, double lo, double hi) {
    Vector t(static_cast<Eigen::Index>(n));
    const double h = (hi - lo) / static_cast<double>(n);
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = lo + (static_cast<double>(i) + 0.5) * h;
    return t;
}

double phillips_bump(double x) { return std::abs(x) < 3.0 ? 1.0 + std::cos(pi * x / 3.0) : 0.0; }

}  // namespace

Problem make_shaw(std::size_t n) {
    require(n >= 2, "shaw needs n >= 2");
    const Vector t = midpoints(n, -pi / 2, pi / 2);
    const auto m = t.size();
    RowMatrix A(m, m);
    const double h = pi / static_cast<double>(n);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            const double c = std::cos(t[i]) + std::cos(t[j]);
            const double u = pi * (std::sin(t[i]) + std::sin(t[j]));
            const double sinc = std::abs(u) < 1e-8 ? 1.0 : std::sin(u) / u;
            A(i, j) = h * c * c * sinc * sinc;
        }
    Vector x(m);
    for (Eigen::Index j = 0; j < m; ++j)
        x[j] = 2.0 * std::exp(-6.0 * (t[j] - 0.8) * (t[j] - 0.8)) +
               std::exp(-2.0 * (t[j] + 0.5) * (t[j] + 0.5));
    return finish("shaw", std::move(A), t, std::move(x));
}

Problem make_gravity(std::size_t n, double depth) {
    require(n >= 2, "gravity needs n >= 2");
    require(depth > 0.0, "gravity depth must be positive");
    const Vector t = midpoints(n, 0.0, 1.0);
    const auto m = t.size();
    RowMatrix A(m, m);
    const double h = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            const double d = t[i] - t[j];
            A(i, j) = h * depth * std::pow(depth * depth + d * d, -1.5);
        }
    Vector x(m);
    for (Eigen::Index j = 0; j < m; ++j) x[j] = std::sin(pi * t[j]) + 0.5 * std::sin(2 * pi * t[j]);
    return finish("gravity", std::move(A), t, std::move(x));
}

Problem make_phillips(std::size_t n) {
    require(n >= 2, "phillips needs n >= 2");
    const Vector t = midpoints(n, -6.0, 6.0);
    const auto m = t.size();
    RowMatrix A(m, m);
    const double h = 12.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) A(i, j) = h * phillips_bump(t[i] - t[j]);
    Vector x(m);
    for (Eigen::Index j = 0; j < m; ++j) x[j] = phillips_bump(t[j]);
    return finish("phillips", std::move(A), t, std::move(x));
}

Problem make_problem(const std::string& name, std::size_t n, double gravity_depth) {
    const std::string prefix = "squared-";
    if (name.rfind(prefix, 0) == 0)
        return squared_variant(make_problem(name.substr(prefix.size()), n, gravity_depth));
    if (name == "shaw") return make_shaw(n);
    if (name == "gravity") return make_gravity(n, gravity_depth);
    if (name == "phillips") return make_phillips(n);
    throw InvalidArgument("unknown problem: " + name);
}

Problem squared_variant(const Problem& p) {
    require(p.op.nonlinearity() == Nonlinearity::Identity, "problem is already squared");
    Problem q{"squared-" + p.name, ForwardOp(p.op.matrix(), Nonlinearity::Square), p.x_dag,
              Vector(), p.grid};
    q.y_dag = apply(q.op, q.x_dag);
    return q;
}

NoisyData add_noise(const Problem& p, double delta0, std::uint64_t seed) {
    require(delta0 >= 0.0, "noise level must be nonnegative");
    NoisyData d;
    d.delta0 = delta0;
    d.seed = seed;
    if (delta0 == 0.0) {
        d.y_delta = p.y_dag;
        return d;
    }
    Rng rng(seed);
    const Vector xi = rng.normal_vector(p.n());
    const double scale = delta0 * p.y_dag.lpNorm<Eigen::Infinity>();
    d.y_delta = p.y_dag + scale * xi;
    d.delta = rms_norm(d.y_delta - p.y_dag);
    return d;
}

SourceFixture make_source_fixture(const ForwardOp& op, double nu, const Vector& w, const Vector& x1) {
    require(op.nonlinearity() == Nonlinearity::Identity, "source fixtures need a linear operator");
    require(nu > 0.0 && nu < 0.5, "smoothness index must lie in (0, 1/2)");
    require(w.size() == static_cast<Eigen::Index>(op.n()) && x1.size() == w.size(), "dimension mismatch");
    Eigen::BDCSVD<Matrix> svd(Matrix(op.matrix()), Eigen::ComputeThinV);
    const Matrix& V = svd.matrixV();
    const double n = static_cast<double>(op.n());
    const Vector eig = svd.singularValues().array().square() / n;
    Vector coeff = V.transpose() * w;
    for (Eigen::Index j = 0; j < coeff.size(); ++j)
        coeff[j] *= eig[j] > 0.0 ? std::pow(eig[j], nu) : 0.0;
    SourceFixture s;
    s.nu = nu;
    s.w = w;
    s.x1 = x1;
    s.x_dag = x1 + V * coeff;
    s.w_norm = w.norm();
    return s;
}

Problem with_source(const Problem& p, const SourceFixture& s) {
    require(s.x_dag.size() == static_cast<Eigen::Index>(p.n()), "dimension mismatch");
    Problem q = p;
    q.x_dag = s.x_dag;
    q.y_dag = apply(q.op, q.x_dag);
    return q;
}

namespace {


template <class T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <class T>
void put(std::ostream& out, T v) {
    v = byteswap_if_big(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw InvalidArgument("truncated problem file");
    return byteswap_if_big(v);
}

constexpr std::uint8_t kFormatVersion = 1;

}  // namespace

void save_problem(const Problem& p, std::ostream& out) {
    put<std::uint8_t>(out, kFormatVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint64_t>(out, p.n());
    put<std::uint8_t>(out, p.op.nonlinearity() == Nonlinearity::Square ? 1 : 0);
    const RowMatrix& A = p.op.matrix();
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) put<double>(out, A(i, j));
    for (Eigen::Index i = 0; i < p.x_dag.size(); ++i) put<double>(out, p.x_dag[i]);
    for (Eigen::Index i = 0; i < p.y_dag.size(); ++i) put<double>(out, p.y_dag[i]);
    if (!out) throw NumericalError("failed to write problem");
}

Problem load_problem(std::istream& in) {
    if (get<std::uint8_t>(in) != kFormatVersion) throw InvalidArgument("unsupported problem format version");
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto n = static_cast<Eigen::Index>(get<std::uint64_t>(in));
    const auto tag = get<std::uint8_t>(in);
    require(tag <= 1, "unknown nonlinearity tag");
    require(n > 0, "empty problem");
    RowMatrix A(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) A(i, j) = get<double>(in);
    Vector x(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = get<double>(in);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = get<double>(in);
    return Problem{std::move(name),
                   ForwardOp(std::move(A), tag == 1 ? Nonlinearity::Square : Nonlinearity::Identity),
                   std::move(x), std::move(y), Vector()};
}

}  // namespace illposed
