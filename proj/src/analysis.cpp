#include "illposed/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include <Eigen/SVD>

#include "illposed/rng.hpp"

namespace illposed {

BiasVariance bias_variance(const Ensemble& e, double epoch, const Vector& x_dag) {
    const auto it = std::find(e.epochs.begin(), e.epochs.end(), epoch);
    if (it == e.epochs.end()) throw InvalidArgument("epoch not recorded");
    const auto s = static_cast<std::size_t>(it - e.epochs.begin());
    if (s >= e.mean_iterate.size()) throw InvalidArgument("mean iterates were not recorded");
    BiasVariance bv;
    bv.bias_sq = (e.mean_iterate[s] - x_dag).squaredNorm();
    bv.variance = e.spread[s];
    bv.total = e.mean_sq_error[s];
    return bv;
}

DecayFit fit_decay(const std::vector<double>& k, const std::vector<double>& value,
                   std::optional<FitWindow> window) {
    require(k.size() == value.size(), "series lengths differ");
    require(!k.empty(), "empty series");
    if (!window) {
        const double hi = *std::max_element(k.begin(), k.end());
        window = FitWindow{hi / 2.0, hi};
    }
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < k.size(); ++i) {
        if (k[i] < window->k_min || k[i] > window->k_max || k[i] <= 0.0) continue;
        if (!(value[i] > 0.0)) throw InvalidArgument("decay fit needs positive values");
        lx.push_back(std::log(k[i]));
        ly.push_back(std::log(value[i]));
    }
    if (lx.size() < 5) throw InvalidArgument("decay fit needs at least 5 points in the window");
    const double m = static_cast<double>(lx.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= m;
    my /= m;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    DecayFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.k_min = window->k_min;
    fit.k_max = window->k_max;
    fit.points = lx.size();
    double sse = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
        sse += r * r;
    }
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
    return fit;
}

namespace {

struct SpectralPair {
    Matrix V;   // right singular vectors of A
    Vector bF;  // eigenvalues of A^T A / n
    Vector bG;  // eigenvalues of G^T G / n in the same basis
};

SpectralPair shared_spectrum(const Matrix& A, const DataDrivenOp* G) {
    const double n = static_cast<double>(A.rows());
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullV);
    SpectralPair sp{svd.matrixV(), svd.singularValues().array().square() / n,
                    Vector::Zero(A.cols())};
    if (G) {
        const Matrix BG = sp.V.transpose() * (Matrix(G->matrix()).transpose() * G->matrix() / n) * sp.V;
        const double scale = std::max(1.0, BG.cwiseAbs().maxCoeff());
        const Matrix off = BG - Matrix(BG.diagonal().asDiagonal());
        if (off.cwiseAbs().maxCoeff() > 1e-10 * scale)
            throw InvalidArgument("surrogate does not share the singular basis of A");
        sp.bG = BG.diagonal();
    }
    return sp;
}

void require_linear(const Problem& p) {
    require(p.op.nonlinearity() == Nonlinearity::Identity, "this check needs a linear problem");
}

}  // namespace

Vector mean_error_closed_form(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                              const Schedule& s, std::size_t k, const Vector& x1) {
    require_linear(p);
    const Matrix A = p.op.matrix();
    const double n = static_cast<double>(p.n());
    const SpectralPair sp = shared_spectrum(A, G);
    const Vector xi = data.y_delta - p.y_dag;
    const Vector termF = sp.V.transpose() * (A.transpose() * (-xi) / n);
    Vector termG = Vector::Zero(A.cols());
    if (G) {
        const Vector vG = G->matrix() * p.x_dag - p.y_dag - xi;
        termG = sp.V.transpose() * (Matrix(G->matrix()).transpose() * vG / n);
    }
    // factor[i-1] = diag of I - eta_i (B_F + lambda_i B_G)
    std::vector<Vector> factor(k);
    for (std::size_t i = 1; i <= k; ++i) {
        const double lam = G ? lambda_at(s, i) : 0.0;
        factor[i - 1] = (1.0 - eta_at(s, i) * (sp.bF + lam * sp.bG).array()).matrix();
    }
    // Pi_{j+1}^k for j = k, k-1, ..., 0 by suffix products.
    Vector suffix = Vector::Ones(A.cols());
    Vector sum = Vector::Zero(A.cols());
    for (std::size_t j = k; j >= 1; --j) {
        const double lam = G ? lambda_at(s, j) : 0.0;
        sum += eta_at(s, j) * suffix.cwiseProduct(termF + lam * termG);
        suffix = suffix.cwiseProduct(factor[j - 1]);
    }
    const Vector z = sp.V.transpose() * (x1 - p.x_dag);
    return sp.V * (suffix.cwiseProduct(z) - sum);
}

MeanRecursionReport enumerate_mean_error(const Problem& p, const NoisyData& data,
                                         const DataDrivenOp* G, const Schedule& s, std::size_t k,
                                         const RunOptions& opts) {
    require_linear(p);
    const std::size_t n = p.n();
    double paths = 1.0;
    for (std::size_t i = 0; i < k; ++i) paths *= static_cast<double>(n);
    require(paths <= 2e6, "enumeration budget exceeded (n^k > 2e6)");
    const Vector x1 = opts.x1 ? *opts.x1 : Vector::Zero(static_cast<Eigen::Index>(n));

    // Mean over all continuations, averaged level by level.
    std::function<Vector(std::size_t, const Vector&)> descend = [&](std::size_t step, const Vector& x) {
        if (step > k) return Vector(x - p.x_dag);
        const double eta = eta_at(s, step);
        const double lam = G ? lambda_at(s, step) : 0.0;
        Vector acc = Vector::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const double yi = data.y_delta[static_cast<Eigen::Index>(i)];
            Vector dir = row_gradient_step(p.op, i, x, row_value(p.op, i, x) - yi);
            if (G && lam != 0.0) dir += lam * row_gradient_step(*G, i, x, row_value(*G, i, x) - yi);
            acc += descend(step + 1, x - eta * dir);
        }
        return Vector(acc / static_cast<double>(n));
    };

    MeanRecursionReport rep;
    rep.k_checked = k;
    rep.enumerated_mean = descend(1, x1);
    rep.closed_form_mean = mean_error_closed_form(p, data, G, s, k, x1);
    rep.max_abs_gap = (rep.enumerated_mean - rep.closed_form_mean).lpNorm<Eigen::Infinity>();
    return rep;
}

PhiBound phi_bound_check(const Matrix& A, const DataDrivenOp* G, const Schedule& s, std::size_t j,
                         std::size_t k, double exponent) {
    require(j < k, "need j < k");
    require(exponent >= 0.0, "exponent must be nonnegative");
    const SpectralPair sp = shared_spectrum(A, G);
    double eta_sum = 0.0;
    Vector prod = Vector::Ones(A.cols());
    for (std::size_t i = j + 1; i <= k; ++i) {
        const double eta = eta_at(s, i);
        const double lam = G ? lambda_at(s, i) : 0.0;
        const Vector f = (1.0 - eta * (sp.bF + lam * sp.bG).array()).matrix();
        if (f.minCoeff() < 0.0 || f.maxCoeff() > 1.0)
            throw InvalidArgument("step normalization violated: eta_i (sigma^2 + lambda sigma~^2) > 1");
        prod = prod.cwiseProduct(f);
        eta_sum += eta;
    }
    PhiBound pb;
    for (Eigen::Index t = 0; t < prod.size(); ++t)
        pb.lhs = std::max(pb.lhs, std::pow(sp.bF[t], exponent) * prod[t]);
    pb.rhs = exponent == 0.0 ? 1.0 : std::pow(exponent / (std::numbers::e * eta_sum), exponent);
    pb.pass = pb.lhs <= pb.rhs + 1e-12;
    return pb;
}

double recursion_c(const AssumptionConstants& c, double eta, double lambda) {
    const double el = eta * lambda;
    return 2.0 * el * std::max(1.0, c.L_G * c.L_G) * (1.5 + 2.0 * el * c.L_G * c.L_G);
}

double recursion_d(const AssumptionConstants& c, double eta) {
    const double margin = 1.0 - c.L_F * c.L_F * eta - c.eta_F;
    if (!(margin > 0.0)) throw InvalidArgument("infeasible constants: L_F^2 eta + eta_F >= 1");
    return (1.0 + c.eta_F) * (1.0 + c.eta_F) * eta / (2.0 * margin);
}

double rho_radius(const AssumptionConstants& c, const Schedule& s, std::size_t n,
                  std::size_t k_delta, double e1_norm, double delta) {
    double sum_c = 0.0, sum_d = 0.0;
    for (std::size_t j = 1; j <= k_delta; ++j) {
        const double eta = eta_at(s, j);
        sum_c += recursion_c(c, eta, lambda_at(s, j));
        sum_d += recursion_d(c, eta);
    }
    const double nn = static_cast<double>(n);
    const double cd = (c.C_max + delta) * (c.C_max + delta);
    const double rho2 =
        std::exp(nn * sum_c) * (e1_norm * e1_norm + cd + nn * delta * delta * sum_d) - cd;
    return std::sqrt(std::max(0.0, rho2));
}

std::vector<StabilityEntry> stability_sweep(const Problem& p, const DataDrivenOp* G,
                                            const Schedule& s, std::uint64_t path_seed,
                                            std::uint64_t noise_seed, double epochs,
                                            const std::vector<double>& delta0_list) {
    for (std::size_t i = 1; i < delta0_list.size(); ++i)
        require(delta0_list[i] <= delta0_list[i - 1], "noise levels must be sorted decreasing");
    const StoppingRule stop = StoppingRule::max_epochs(epochs);
    const Vector reference =
        dsgd_run(p, add_noise(p, 0.0, noise_seed), G, s, stop, path_seed).iterate_final;
    std::vector<StabilityEntry> out;
    for (double d0 : delta0_list) {
        StabilityEntry e{d0, std::nullopt};
        try {
            const Vector x = dsgd_run(p, add_noise(p, d0, noise_seed), G, s, stop, path_seed).iterate_final;
            e.distance = (x - reference).norm();
        } catch (const DivergenceError&) {
        }
        out.push_back(e);
    }
    return out;
}

NoiseMoments stochastic_noise_moments(const Problem& p, const NoisyData& data,
                                      const DataDrivenOp* G, const Schedule& s, std::size_t k,
                                      const Vector& x, std::size_t samples, std::uint64_t seed) {
    require_linear(p);
    require(samples >= 2, "need at least two samples");
    const Eigen::Index n = static_cast<Eigen::Index>(p.n());
    const double nn = static_cast<double>(n);
    const double rn = std::sqrt(nn);
    const RowMatrix& A = p.op.matrix();
    const double lam = G ? lambda_at(s, k) : 0.0;

    // R maps K_F to K_G: sum_j (sigma~_j / sigma_j) psi_j psi_j^T.
    Matrix R = Matrix::Zero(n, n);
    double c_R = 0.0;
    RowMatrix At = RowMatrix::Zero(n, n);
    if (G) {
        At = G->matrix();
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(G->rank()); ++j) {
            const Vector psi = G->left_vectors().col(j);
            const double sigma = (A.transpose() * psi).norm();
            require(sigma > 0.0, "surrogate direction outside the range of A");
            const double ratio = G->sigma()[j] / sigma;
            c_R = std::max(c_R, ratio);
            R += ratio * psi * psi.transpose();
        }
    }
    const Vector e = x - p.x_dag;
    const Vector xi = data.y_delta - p.y_dag;
    const Vector Ae = A * e;
    const Vector Ge = At * e;
    const Vector rG = G ? Vector(At * p.x_dag - p.y_dag) : Vector::Zero(n);
    const Vector base1 = (Ae + lam * (R * Ge)) / rn;
    const Vector base2 = (-xi + lam * (R * (rG - xi))) / rn;

    Rng rng(seed);
    double s1 = 0, q1 = 0, s2 = 0, q2 = 0;
    for (std::size_t m = 0; m < samples; ++m) {
        const Eigen::Index i = static_cast<Eigen::Index>(rng.index(p.n()));
        Vector n1 = base1 - lam * rn * Ge[i] * R.col(i);
        n1[i] -= rn * Ae[i];
        Vector n2 = base2 - lam * rn * (rG[i] - xi[i]) * R.col(i);
        n2[i] += rn * xi[i];
        const double a = n1.squaredNorm(), b = n2.squaredNorm();
        s1 += a;
        q1 += a * a;
        s2 += b;
        q2 += b * b;
    }
    const double M = static_cast<double>(samples);
    NoiseMoments nm;
    nm.mean_sq_N1 = s1 / M;
    nm.mean_sq_N2 = s2 / M;
    nm.se_N1 = std::sqrt(std::max(0.0, q1 / M - nm.mean_sq_N1 * nm.mean_sq_N1) / (M - 1.0));
    nm.se_N2 = std::sqrt(std::max(0.0, q2 / M - nm.mean_sq_N2 * nm.mean_sq_N2) / (M - 1.0));
    const double bF_half = Ae.norm() / rn;  // |B_F^{1/2} e|
    nm.bound_N1 = std::pow(rn * (1.0 + c_R * c_R * lam) * bF_half, 2);
    const double C_max = rms_norm(rG);
    nm.bound_N2 = std::pow(rn * (c_R * lam * C_max + (c_R * lam + 1.0) * data.delta), 2);
    return nm;
}

PathwiseReport pathwise_bound_check(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                                    const Schedule& s, double epochs, std::uint64_t seed,
                                    const AssumptionConstants& c) {
    PathwiseReport rep;
    const double nn = static_cast<double>(p.n());
    const double delta = data.delta;
    RunOptions opts;
    opts.observer = [&](const StepInfo& st) {
        const double ck = recursion_c(c, st.eta, st.lambda);
        const double dk = recursion_d(c, st.eta);
        const double rhs = (1.0 + nn * ck) * st.sq_error_before +
                           nn * ck * (c.C_max + delta) * (c.C_max + delta) + nn * dk * delta * delta;
        ++rep.steps_checked;
        if (rhs > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, st.sq_error_after / rhs);
        if (st.sq_error_after > rhs * (1.0 + 1e-12)) ++rep.violations;
    };
    dsgd_run(p, data, G, s, StoppingRule::max_epochs(epochs), seed, opts);
    return rep;
}

}  // namespace illposed
