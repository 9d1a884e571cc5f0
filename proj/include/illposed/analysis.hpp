#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "illposed/solvers.hpp"

namespace illposed {

struct BiasVariance {
    double bias_sq = 0.0;
    double variance = 0.0;
    double total = 0.0;
};

// Empirical decomposition at a recorded epoch; needs mean iterates.
BiasVariance bias_variance(const Ensemble& e, double epoch, const Vector& x_dag);

struct DecayFit {
    double slope = 0.0;
    double intercept = 0.0;
    double k_min = 0.0;
    double k_max = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

struct FitWindow {
    double k_min;
    double k_max;
};

// OLS of log(value) on log(k). The default window is the upper half of the
// k range.
DecayFit fit_decay(const std::vector<double>& k, const std::vector<double>& value,
                   std::optional<FitWindow> window = std::nullopt);

struct MeanRecursionReport {
    std::size_t k_checked = 0;
    Vector closed_form_mean;
    Vector enumerated_mean;
    double max_abs_gap = 0.0;
};

// Compares the average of e_{k+1} over all n^k index paths with the closed
// form of the mean recursion. Linear problems only, n^k <= 2e6.
MeanRecursionReport enumerate_mean_error(const Problem& p, const NoisyData& data,
                                         const DataDrivenOp* G, const Schedule& s, std::size_t k,
                                         const RunOptions& opts = {});

// Closed form alone, evaluated in the right singular basis of A.
Vector mean_error_closed_form(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                              const Schedule& s, std::size_t k, const Vector& x1);

struct PhiBound {
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

// max_t sigma_t^{2s} prod_{i=j+1}^k (1 - eta_i (sigma_t^2 + lambda_i sigma~_t^2)) against
// (s / (e sum_{i=j+1}^k eta_i))^s, with sigma the RMS-scaled singular values.
PhiBound phi_bound_check(const Matrix& A, const DataDrivenOp* G, const Schedule& s, std::size_t j,
                         std::size_t k, double exponent);

// Step-wise constants of the pathwise recursion.
double recursion_c(const AssumptionConstants& c, double eta, double lambda);
double recursion_d(const AssumptionConstants& c, double eta);

double rho_radius(const AssumptionConstants& c, const Schedule& s, std::size_t n,
                  std::size_t k_delta, double e1_norm, double delta);

struct StabilityEntry {
    double delta0 = 0.0;
    std::optional<double> distance;  // empty when the run diverged
};

// Terminal distance between noisy and exact-data runs sharing the index path
// and the noise direction.
std::vector<StabilityEntry> stability_sweep(const Problem& p, const DataDrivenOp* G,
                                            const Schedule& s, std::uint64_t path_seed,
                                            std::uint64_t noise_seed, double epochs,
                                            const std::vector<double>& delta0_list);

struct NoiseMoments {
    double mean_sq_N1 = 0.0;
    double se_N1 = 0.0;  // standard error of the mean
    double mean_sq_N2 = 0.0;
    double se_N2 = 0.0;
    double bound_N1 = 0.0;  // squared right-hand sides of the moment bounds
    double bound_N2 = 0.0;
};

// Monte Carlo moments of the two iteration-noise terms at a fixed iterate x,
// using lambda_k. Linear problems with a truncated-SVD surrogate (or none).
NoiseMoments stochastic_noise_moments(const Problem& p, const NoisyData& data,
                                      const DataDrivenOp* G, const Schedule& s, std::size_t k,
                                      const Vector& x, std::size_t samples, std::uint64_t seed);

struct PathwiseReport {
    std::size_t steps_checked = 0;
    std::size_t violations = 0;
    double worst_ratio = 0.0;  // max of lhs / rhs
};

// Runs one stochastic trajectory and checks the one-step error recursion at
// every iteration.
PathwiseReport pathwise_bound_check(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                                    const Schedule& s, double epochs, std::uint64_t seed,
                                    const AssumptionConstants& c);

}  // namespace illposed
