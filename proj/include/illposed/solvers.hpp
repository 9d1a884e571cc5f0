#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "illposed/problems.hpp"

namespace illposed {

struct Schedule {
    double eta0 = 1.0;
    double alpha = 0.0;
    double lambda0 = 0.0;
    double alpha_prime = 0.0;
};

double eta_at(const Schedule& s, std::size_t k);     // k >= 1
double lambda_at(const Schedule& s, std::size_t k);  // k >= 1

// c0 / (2 max_i |F_i'(x_dag)|^2).
double default_eta0(const Problem& p, double c0);

// Landweber step n / |F'(x_dag)|_F^2 on the (1/n)-scaled gradient, i.e.
// 1/|F'(x_dag)|_F^2 on the stacked one, times `factor`.
double paper_lm_eta0(const Problem& p, double factor = 1.0);

struct StoppingRule {
    enum class Kind { MaxEpochs, APriori, OracleBest };
    Kind kind = Kind::MaxEpochs;
    double epochs = 1.0;      // limit for MaxEpochs and OracleBest
    std::size_t k_star = 1;   // iteration count for APriori

    static StoppingRule max_epochs(double limit);
    static StoppingRule a_priori(std::size_t k_star);
    // Runs to `limit` epochs and returns the best iterate seen.
    static StoppingRule oracle_best(double limit);
};

struct Recording {
    enum class Granularity { PerIteration, PerEpoch, EveryKEpochs };
    Granularity granularity = Granularity::PerEpoch;
    std::size_t every = 1;        // epochs between snapshots for EveryKEpochs
    bool keep_iterates = false;   // store x_k at every snapshot
    std::size_t fine_stride = 0;  // record |e_k|^2 every this many iterations; 0 disables
};

struct Snapshot {
    std::size_t iteration = 0;
    double epoch = 0.0;
    double sq_error = 0.0;
    double sq_residual_F = 0.0;
    double sq_residual_G = 0.0;  // NaN when no surrogate is attached
};

struct BestRecord {
    double sq_error = 0.0;
    double epoch = 0.0;
    std::size_t iteration = 0;
};

struct Trajectory {
    std::uint64_t seed = 0;
    Vector iterate_final;
    std::vector<Snapshot> snapshots;
    std::vector<Vector> snapshot_iterates;
    BestRecord best;
    std::size_t iterations_run = 0;
    std::size_t fine_stride = 0;
    std::vector<double> fine_sq_error;  // at iterations 0, s, 2s, ...
};

struct StepInfo {
    std::size_t k = 0;  // 1-based; the step maps x_k to x_{k+1}
    std::size_t row = 0;
    double eta = 0.0;
    double lambda = 0.0;
    double sq_error_before = 0.0;
    double sq_error_after = 0.0;
};

struct RunOptions {
    std::optional<Vector> x1;  // defaults to zero
    Recording record;
    std::function<void(const StepInfo&)> observer;
};

// Stochastic iteration; G may be null (plain SGD).
Trajectory dsgd_run(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                    const Schedule& s, const StoppingRule& stop, std::uint64_t seed,
                    const RunOptions& opts = {});

// Full-gradient iteration; one iteration is one epoch.
Trajectory landweber_run(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                         const Schedule& s, const StoppingRule& stop, const RunOptions& opts = {});

struct KStar {
    std::size_t k = 1;
    bool clamped = false;
};
KStar apriori_k_star(double delta, double w_norm, double nu, double alpha, double epsilon);

enum class Method { LM, DLM, SGD, DSGD };
const char* to_string(Method m);
Method parse_method(const std::string& s);
inline bool is_stochastic(Method m) { return m == Method::SGD || m == Method::DSGD; }
inline bool uses_surrogate(Method m) { return m == Method::DLM || m == Method::DSGD; }

struct MethodConfig {
    Method method = Method::SGD;
    Schedule schedule;
    StoppingRule stop;
    RunOptions options;
};

struct EnsembleOptions {
    std::size_t trials = 10;
    std::uint64_t base_seed = 0;
    bool redraw_noise = false;
    std::size_t threads = 0;        // 0: ILLPOSED_THREADS or hardware concurrency
    bool keep_trial_detail = false; // keep per-trial fine series and iterates
};

struct Ensemble {
    std::size_t n = 0;
    std::vector<Trajectory> trials;
    std::vector<double> epochs;
    std::vector<double> mean_sq_error;
    std::vector<double> mean_sq_residual_F;
    std::vector<double> mean_sq_residual_G;
    std::vector<Vector> mean_iterate;  // filled when iterates are recorded
    std::vector<double> spread;        // (1/M) sum_m |x_m - mean|^2 per snapshot
    std::size_t fine_stride = 0;
    std::vector<double> fine_mean_sq_error;
    BestRecord best;  // minimum of the mean error curve
};

std::size_t default_thread_count();

// Trial m draws indices with seed base_seed + m. Noise is shared unless
// redraw_noise is set, in which case trial m uses seed base_seed + 1e6 + m.
Ensemble run_ensemble(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                      const MethodConfig& cfg, const EnsembleOptions& opts);
Ensemble run_ensemble(const Problem& p, double delta0, const DataDrivenOp* G,
                      const MethodConfig& cfg, const EnsembleOptions& opts);

}  // namespace illposed
