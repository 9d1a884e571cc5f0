#include "illposed/solvers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "illposed/rng.hpp"

namespace illposed {

double eta_at(const Schedule& s, std::size_t k) {
    require(k >= 1, "schedule index starts at 1");
    return s.alpha == 0.0 ? s.eta0 : s.eta0 * std::pow(static_cast<double>(k), -s.alpha);
}

double lambda_at(const Schedule& s, std::size_t k) {
    require(k >= 1, "schedule index starts at 1");
    return s.alpha_prime == 0.0 ? s.lambda0
                                : s.lambda0 * std::pow(static_cast<double>(k), -s.alpha_prime);
}

namespace {

// Row norms of F'(x_dag).
Vector jacobian_row_norms(const Problem& p) {
    const RowMatrix& A = p.op.matrix();
    Vector norms = A.rowwise().norm();
    if (p.op.nonlinearity() == Nonlinearity::Square)
        norms = (2.0 * (A * p.x_dag).array().abs() * norms.array()).matrix();
    return norms;
}

}  // namespace

double default_eta0(const Problem& p, double c0) {
    require(c0 > 0.0, "c0 must be positive");
    const double m = jacobian_row_norms(p).maxCoeff();
    if (!(m > 0.0)) throw InvalidArgument("every row gradient vanishes");
    return c0 / (2.0 * m * m);
}

double paper_lm_eta0(const Problem& p, double factor) {
    require(factor > 0.0, "step factor must be positive");
    const double fro2 = jacobian_row_norms(p).squaredNorm();
    if (!(fro2 > 0.0)) throw InvalidArgument("operator is zero");
    return factor * static_cast<double>(p.n()) / fro2;
}

StoppingRule StoppingRule::max_epochs(double limit) {
    require(limit > 0.0, "epoch limit must be positive");
    return {Kind::MaxEpochs, limit, 1};
}

StoppingRule StoppingRule::a_priori(std::size_t k_star) {
    require(k_star >= 1, "k* must be at least 1");
    return {Kind::APriori, 0.0, k_star};
}

StoppingRule StoppingRule::oracle_best(double limit) {
    require(limit > 0.0, "epoch limit must be positive");
    return {Kind::OracleBest, limit, 1};
}

namespace {

constexpr double kDivergenceNorm = 1e12;

std::size_t total_iterations(const StoppingRule& stop, std::size_t per_epoch) {
    if (stop.kind == StoppingRule::Kind::APriori) return stop.k_star;
    const double it = std::ceil(stop.epochs * static_cast<double>(per_epoch) - 1e-9);
    return std::max<std::size_t>(1, static_cast<std::size_t>(it));
}

double sq_rms_residual(const RowMatrix& A, Nonlinearity f, const Vector& x, const Vector& y) {
    const Vector r = apply(A, f, x) - y;
    return r.squaredNorm() / static_cast<double>(r.size());
}

// Bookkeeping shared by both kernels: snapshots, fine error series, best
// error and the divergence guard.
class Recorder {
public:
    Recorder(const Problem& p, const NoisyData& data, const DataDrivenOp* G, const Recording& rec,
             std::size_t per_epoch, std::size_t total, bool keep_best, Trajectory& out)
        : p_(p), data_(data), G_(G), rec_(rec), per_epoch_(per_epoch), total_(total),
          keep_best_(keep_best), out_(out), xdag_norm_(p.x_dag.norm()) {
        switch (rec.granularity) {
            case Recording::Granularity::PerIteration: period_ = 1; break;
            case Recording::Granularity::PerEpoch: period_ = per_epoch; break;
            case Recording::Granularity::EveryKEpochs:
                require(rec.every >= 1, "snapshot interval must be positive");
                period_ = rec.every * per_epoch;
                break;
        }
        out_.fine_stride = rec.fine_stride;
        if (rec.fine_stride > 0) out_.fine_sq_error.reserve(total / rec.fine_stride + 1);
        out_.best.sq_error = std::numeric_limits<double>::infinity();
    }

    bool snapshot_due(std::size_t it) const { return it % period_ == 0 || it == total_; }

    // Called once for x_1 (it = 0) and after every step.
    void observe(std::size_t it, const Vector& x, double e2) {
        guard(it, x, e2);
        if (e2 < out_.best.sq_error) {
            out_.best = {e2, epoch(it), it};
            if (keep_best_) best_iterate_ = x;
        }
        if (rec_.fine_stride > 0 && it % rec_.fine_stride == 0) out_.fine_sq_error.push_back(e2);
    }

    void snapshot(std::size_t it, const Vector& x, double e2, double resF, double resG) {
        out_.snapshots.push_back({it, epoch(it), e2, resF, resG});
        if (rec_.keep_iterates) out_.snapshot_iterates.push_back(x);
    }

    void snapshot(std::size_t it, const Vector& x, double e2) {
        const double resF = sq_rms_residual(p_.op.matrix(), p_.op.nonlinearity(), x, data_.y_delta);
        const double resG = G_ ? sq_rms_residual(G_->matrix(), G_->nonlinearity(), x, data_.y_delta)
                               : std::numeric_limits<double>::quiet_NaN();
        snapshot(it, x, e2, resF, resG);
    }

    void finish(Vector x) {
        out_.iterations_run = total_;
        out_.iterate_final = keep_best_ ? std::move(best_iterate_) : std::move(x);
    }

private:
    double epoch(std::size_t it) const {
        return static_cast<double>(it) / static_cast<double>(per_epoch_);
    }

    void guard(std::size_t it, const Vector& x, double e2) const {
        // |x| >= |x - x_dag| - |x_dag|, so the exact norm is only needed near the threshold.
        if (!std::isfinite(e2)) throw DivergenceError(it);
        if (std::sqrt(e2) > kDivergenceNorm - xdag_norm_) {
            if (!x.allFinite() || x.norm() > kDivergenceNorm) throw DivergenceError(it);
        }
    }

    const Problem& p_;
    const NoisyData& data_;
    const DataDrivenOp* G_;
    const Recording& rec_;
    std::size_t per_epoch_, total_, period_ = 1;
    bool keep_best_;
    Trajectory& out_;
    double xdag_norm_;
    Vector best_iterate_;
};

void check_inputs(const Problem& p, const NoisyData& data, const DataDrivenOp* G, const Schedule& s,
                  const RunOptions& opts) {
    require(data.y_delta.size() == static_cast<Eigen::Index>(p.n()), "data length mismatch");
    require(s.eta0 > 0.0 && std::isfinite(s.eta0), "step size must be positive");
    require(s.alpha >= 0.0 && s.alpha < 1.0, "step decay exponent must lie in [0, 1)");
    require(s.lambda0 >= 0.0 && s.alpha_prime >= 0.0, "regularization schedule must be nonnegative");
    if (G) {
        require(G->n() == p.n(), "surrogate dimension mismatch");
        require(G->nonlinearity() == p.op.nonlinearity(), "surrogate nonlinearity mismatch");
    }
    if (opts.x1) require(opts.x1->size() == static_cast<Eigen::Index>(p.n()), "initial guess length mismatch");
}

Vector initial_guess(const Problem& p, const RunOptions& opts) {
    return opts.x1 ? *opts.x1 : Vector::Zero(static_cast<Eigen::Index>(p.n()));
}

}  // namespace

Trajectory dsgd_run(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                    const Schedule& s, const StoppingRule& stop, std::uint64_t seed,
                    const RunOptions& opts) {
    check_inputs(p, data, G, s, opts);
    const std::size_t n = p.n();
    const std::size_t total = total_iterations(stop, n);
    Trajectory traj;
    traj.seed = seed;
    Recorder rec(p, data, G, opts.record, n, total, stop.kind == StoppingRule::Kind::OracleBest, traj);

    const RowMatrix& A = p.op.matrix();
    const bool square = p.op.nonlinearity() == Nonlinearity::Square;
    const Vector& y = data.y_delta;
    const Vector& xd = p.x_dag;
    Rng rng(seed);

    Vector x = initial_guess(p, opts);
    double e2 = (x - xd).squaredNorm();
    rec.observe(0, x, e2);
    rec.snapshot(0, x, e2);

    for (std::size_t k = 1; k <= total; ++k) {
        const std::size_t i = rng.index(n);
        const double eta = eta_at(s, k);
        const double lam = G ? lambda_at(s, k) : 0.0;
        const auto a = A.row(static_cast<Eigen::Index>(i));
        const double u = a.dot(x);
        const double rF = (square ? u * u : u) - y[static_cast<Eigen::Index>(i)];
        const double cF = square ? 2.0 * u * rF : rF;
        if (lam != 0.0) {
            const auto g = G->matrix().row(static_cast<Eigen::Index>(i));
            const double v = g.dot(x);
            const double rG = (square ? v * v : v) - y[static_cast<Eigen::Index>(i)];
            const double cG = square ? 2.0 * v * rG : rG;
            x.noalias() -= (eta * cF) * a.transpose() + (eta * lam * cG) * g.transpose();
        } else {
            x.noalias() -= (eta * cF) * a.transpose();
        }
        const double e2_next = (x - xd).squaredNorm();
        if (opts.observer) opts.observer({k, i, eta, lam, e2, e2_next});
        e2 = e2_next;
        rec.observe(k, x, e2);
        if (rec.snapshot_due(k)) rec.snapshot(k, x, e2);
    }
    rec.finish(std::move(x));
    return traj;
}

Trajectory landweber_run(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                         const Schedule& s, const StoppingRule& stop, const RunOptions& opts) {
    check_inputs(p, data, G, s, opts);
    const std::size_t total = total_iterations(stop, 1);
    Trajectory traj;
    Recorder rec(p, data, G, opts.record, 1, total, stop.kind == StoppingRule::Kind::OracleBest, traj);

    const RowMatrix& A = p.op.matrix();
    const Nonlinearity f = p.op.nonlinearity();
    const Vector& y = data.y_delta;
    const double inv_n = 1.0 / static_cast<double>(p.n());
    const double nan = std::numeric_limits<double>::quiet_NaN();

    // Returns F'(x)^T (F(x) - y) / n and stores the RMS^2 residual.
    auto gradient = [&](const RowMatrix& M, const Vector& x, double& sq_res) -> Vector {
        const Vector u = M * x;
        Vector w;
        if (f == Nonlinearity::Square) {
            const Vector r = u.array().square().matrix() - y;
            sq_res = r.squaredNorm() * inv_n;
            w = 2.0 * u.cwiseProduct(r);
        } else {
            w = u - y;
            sq_res = w.squaredNorm() * inv_n;
        }
        return (M.transpose() * w) * inv_n;
    };

    Vector x = initial_guess(p, opts);
    double e2 = (x - p.x_dag).squaredNorm();
    rec.observe(0, x, e2);
    for (std::size_t k = 1; k <= total; ++k) {
        const double eta = eta_at(s, k);
        const double lam = G ? lambda_at(s, k) : 0.0;
        double resF = 0.0, resG = nan;
        Vector step = gradient(A, x, resF);
        if (G) {
            const Vector gG = gradient(G->matrix(), x, resG);
            if (lam != 0.0) step += lam * gG;
        }
        if (rec.snapshot_due(k - 1)) rec.snapshot(k - 1, x, e2, resF, resG);
        x.noalias() -= eta * step;
        const double e2_next = (x - p.x_dag).squaredNorm();
        if (opts.observer) opts.observer({k, 0, eta, lam, e2, e2_next});
        e2 = e2_next;
        rec.observe(k, x, e2);
    }
    if (rec.snapshot_due(total)) rec.snapshot(total, x, e2);
    rec.finish(std::move(x));
    return traj;
}

KStar apriori_k_star(double delta, double w_norm, double nu, double alpha, double epsilon) {
    require(delta > 0.0 && w_norm > 0.0, "delta and |w| must be positive");
    require(nu > 0.0 && nu < 0.5, "nu must lie in (0, 1/2)");
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    require(epsilon > 0.0 || epsilon == 0.0, "epsilon must be nonnegative");
    const double rate = std::min((1.0 + 2.0 * nu) * (1.0 - alpha), 1.0) + epsilon;
    const double value = std::floor(std::pow(delta / w_norm, -2.0 / rate) * (1.0 + 1e-12));
    if (!(value >= 1.0)) return {1, true};
    if (value >= static_cast<double>(std::numeric_limits<std::size_t>::max()))
        return {std::numeric_limits<std::size_t>::max(), false};
    return {static_cast<std::size_t>(value), false};
}

const char* to_string(Method m) {
    switch (m) {
        case Method::LM: return "lm";
        case Method::DLM: return "dlm";
        case Method::SGD: return "sgd";
        case Method::DSGD: return "dsgd";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "lm") return Method::LM;
    if (s == "dlm") return Method::DLM;
    if (s == "sgd") return Method::SGD;
    if (s == "dsgd") return Method::DSGD;
    throw InvalidArgument("unknown method: " + s);
}

std::size_t default_thread_count() {
    if (const char* env = std::getenv("ILLPOSED_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

Trajectory run_one(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                   const MethodConfig& cfg, std::uint64_t seed) {
    const DataDrivenOp* g = uses_surrogate(cfg.method) ? G : nullptr;
    if (is_stochastic(cfg.method)) return dsgd_run(p, data, g, cfg.schedule, cfg.stop, seed, cfg.options);
    Trajectory t = landweber_run(p, data, g, cfg.schedule, cfg.stop, cfg.options);
    t.seed = seed;
    return t;
}

// Folds trajectories into the ensemble strictly in trial order.
class Reducer {
public:
    Reducer(Ensemble& e, std::size_t M, bool keep_detail) : e_(e), M_(M), keep_detail_(keep_detail) {}

    void add(Trajectory t) {
        const std::size_t m = e_.trials.size();
        if (m == 0) init(t);
        require(t.snapshots.size() == e_.epochs.size(), "trials recorded different snapshot grids");
        for (std::size_t s = 0; s < t.snapshots.size(); ++s) {
            sum_err_[s] += t.snapshots[s].sq_error;
            sum_resF_[s] += t.snapshots[s].sq_residual_F;
            sum_resG_[s] += t.snapshots[s].sq_residual_G;
        }
        for (std::size_t s = 0; s < t.fine_sq_error.size() && s < sum_fine_.size(); ++s)
            sum_fine_[s] += t.fine_sq_error[s];
        if (!t.snapshot_iterates.empty()) {
            // Welford update of the mean iterate and the spread about it.
            const double count = static_cast<double>(m + 1);
            for (std::size_t s = 0; s < t.snapshot_iterates.size(); ++s) {
                const Vector delta = t.snapshot_iterates[s] - e_.mean_iterate[s];
                e_.mean_iterate[s] += delta / count;
                m2_[s] += delta.dot(t.snapshot_iterates[s] - e_.mean_iterate[s]);
            }
        }
        if (!keep_detail_) {
            t.fine_sq_error = {};
            t.snapshot_iterates = {};
        }
        e_.trials.push_back(std::move(t));
    }

    void finish() {
        const double M = static_cast<double>(M_);
        const std::size_t S = e_.epochs.size();
        e_.mean_sq_error.resize(S);
        e_.mean_sq_residual_F.resize(S);
        e_.mean_sq_residual_G.resize(S);
        for (std::size_t s = 0; s < S; ++s) {
            e_.mean_sq_error[s] = sum_err_[s] / M;
            e_.mean_sq_residual_F[s] = sum_resF_[s] / M;
            e_.mean_sq_residual_G[s] = sum_resG_[s] / M;
        }
        e_.spread.resize(m2_.size());
        for (std::size_t s = 0; s < m2_.size(); ++s) e_.spread[s] = m2_[s] / M;
        e_.fine_mean_sq_error.resize(sum_fine_.size());
        for (std::size_t s = 0; s < sum_fine_.size(); ++s) e_.fine_mean_sq_error[s] = sum_fine_[s] / M;

        const double per_epoch = static_cast<double>(is_per_epoch_n_ ? e_.n : 1);
        e_.best.sq_error = std::numeric_limits<double>::infinity();
        if (!e_.fine_mean_sq_error.empty()) {
            for (std::size_t s = 0; s < e_.fine_mean_sq_error.size(); ++s)
                if (e_.fine_mean_sq_error[s] < e_.best.sq_error) {
                    const std::size_t it = s * e_.fine_stride;
                    e_.best = {e_.fine_mean_sq_error[s], static_cast<double>(it) / per_epoch, it};
                }
        }
        // Snapshots can fall between fine samples (the final iterate, say).
        for (std::size_t s = 0; s < S; ++s)
            if (e_.mean_sq_error[s] < e_.best.sq_error)
                e_.best = {e_.mean_sq_error[s], e_.epochs[s], e_.trials[0].snapshots[s].iteration};
    }

    bool is_per_epoch_n_ = true;

private:
    void init(const Trajectory& t) {
        const std::size_t S = t.snapshots.size();
        for (const auto& s : t.snapshots) e_.epochs.push_back(s.epoch);
        sum_err_.assign(S, 0.0);
        sum_resF_.assign(S, 0.0);
        sum_resG_.assign(S, 0.0);
        e_.fine_stride = t.fine_stride;
        sum_fine_.assign(t.fine_sq_error.size(), 0.0);
        if (!t.snapshot_iterates.empty()) {
            e_.mean_iterate.assign(t.snapshot_iterates.size(),
                                   Vector::Zero(t.snapshot_iterates.front().size()));
            m2_.assign(t.snapshot_iterates.size(), 0.0);
        }
    }

    Ensemble& e_;
    std::size_t M_;
    bool keep_detail_;
    std::vector<double> sum_err_, sum_resF_, sum_resG_, sum_fine_, m2_;
};

}  // namespace

namespace {

Ensemble run_ensemble_impl(const Problem& p, const NoisyData* shared, double delta0,
                           const DataDrivenOp* G, const MethodConfig& cfg, const EnsembleOptions& opts) {
    require(opts.trials >= 1, "need at least one trial");
    if (uses_surrogate(cfg.method)) require(G != nullptr, "method needs a surrogate operator");
    const std::size_t M = opts.trials;
    Ensemble e;
    e.n = p.n();
    Reducer reducer(e, M, opts.keep_trial_detail);
    reducer.is_per_epoch_n_ = is_stochastic(cfg.method);

    auto trial_data = [&](std::size_t m) {
        return shared ? *shared : add_noise(p, delta0, opts.base_seed + 1000000 + m);
    };
    auto seed_of = [&](std::size_t m) { return opts.base_seed + m; };

    // Deterministic methods on shared data give identical trials.
    if (!is_stochastic(cfg.method) && shared) {
        const Trajectory t = run_one(p, *shared, G, cfg, seed_of(0));
        for (std::size_t m = 0; m < M; ++m) {
            Trajectory c = t;
            c.seed = seed_of(m);
            reducer.add(std::move(c));
        }
        reducer.finish();
        return e;
    }

    const std::size_t threads = std::min(M, opts.threads ? opts.threads : default_thread_count());
    std::vector<std::optional<Trajectory>> pending(M);
    std::vector<std::exception_ptr> errors(M);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> first_failed{M};
    std::mutex mu;
    std::size_t next_to_reduce = 0;

    auto note_failure = [&](std::size_t m) {
        std::size_t cur = first_failed.load();
        while (m < cur && !first_failed.compare_exchange_weak(cur, m)) {
        }
    };

    auto worker = [&] {
        for (;;) {
            const std::size_t m = next.fetch_add(1);
            // Trials after a failure are skipped; earlier ones still run so the
            // reported failure is the lowest failing trial index.
            if (m >= M || m > first_failed.load()) return;
            try {
                Trajectory t = run_one(p, trial_data(m), G, cfg, seed_of(m));
                std::lock_guard lock(mu);
                pending[m] = std::move(t);
                while (next_to_reduce < M && pending[next_to_reduce]) {
                    reducer.add(std::move(*pending[next_to_reduce]));
                    pending[next_to_reduce].reset();
                    ++next_to_reduce;
                }
            } catch (const DivergenceError& d) {
                errors[m] = std::make_exception_ptr(DivergenceError(d.iteration, static_cast<long>(m)));
                note_failure(m);
            } catch (...) {
                errors[m] = std::current_exception();
                note_failure(m);
            }
        }
    };

    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
    reducer.finish();
    return e;
}

}  // namespace

Ensemble run_ensemble(const Problem& p, const NoisyData& data, const DataDrivenOp* G,
                      const MethodConfig& cfg, const EnsembleOptions& opts) {
    require(!opts.redraw_noise, "redrawn noise needs a noise level, not fixed data");
    return run_ensemble_impl(p, &data, data.delta0, G, cfg, opts);
}

Ensemble run_ensemble(const Problem& p, double delta0, const DataDrivenOp* G,
                      const MethodConfig& cfg, const EnsembleOptions& opts) {
    if (opts.redraw_noise) return run_ensemble_impl(p, nullptr, delta0, G, cfg, opts);
    const NoisyData shared = add_noise(p, delta0, opts.base_seed + 1000000);
    return run_ensemble_impl(p, &shared, delta0, G, cfg, opts);
}

}  // namespace illposed
