// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,3] [--expect-fail 5,6]
//
// Exit status is 0 when the set of failing criteria equals the --expect-fail
// set (empty by default), 1 otherwise.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "illposed/experiment.hpp"
#include "illposed/rng.hpp"

using namespace illposed;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

Problem random_linear(Rng& rng, std::size_t n) {
    Problem p{"random", ForwardOp(rng.normal_matrix(n, n), Nonlinearity::Identity),
              rng.normal_vector(n), Vector(), Vector()};
    p.y_dag = apply(p.op, p.x_dag);
    return p;
}

Outcome oracle_equivalence() {
    Rng rng(101);
    double gap = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Problem p = random_linear(rng, 3);
        const NoisyData d = add_noise(p, 0.05, 500 + t);
        const DataDrivenOp G = truncate_svd(p.op, 2);
        const Schedule s{default_eta0(p, 1.0), 0.3 * rng.uniform(), rng.uniform(), rng.uniform()};
        gap = std::max(gap, enumerate_mean_error(p, d, nullptr, s, 4).max_abs_gap);
        gap = std::max(gap, enumerate_mean_error(p, d, &G, s, 4).max_abs_gap);
    }
    return {gap < 1e-12, fmt("max_abs_gap=%.3e tol=1e-12", gap)};
}

Outcome bias_variance_identity() {
    const Problem p = make_phillips(200);
    const DataDrivenOp G = truncate_svd(p.op, 10);
    MethodConfig mc;
    mc.method = Method::DSGD;
    mc.schedule = Schedule{default_eta0(p, 1.0), 0.0, 1.0, 0.0};
    mc.stop = StoppingRule::max_epochs(50);
    mc.options.record.keep_iterates = true;
    EnsembleOptions eo;
    eo.trials = 10;
    eo.base_seed = 2;
    const Ensemble e = run_ensemble(p, 1e-2, &G, mc, eo);
    double worst = 0.0;
    for (double ep : e.epochs) {
        const BiasVariance bv = bias_variance(e, ep, p.x_dag);
        worst = std::max(worst, std::abs(bv.bias_sq + bv.variance - bv.total) / bv.total);
    }
    return {worst < 1e-10, fmt("max_rel_gap=%.3e tol=1e-10 epochs=%.0f", worst, double(e.epochs.size()))};
}

Outcome pathwise() {
    const Problem p = make_phillips(200);
    const DataDrivenOp G = truncate_svd(p.op, 10);
    const NoisyData d = add_noise(p, 1e-2, 3 + 1000000);
    AssumptionConstants c = measure_constants(p.op, G, p.x_dag, p.y_dag);
    c.eta_F = 0.0;
    const Schedule s{default_eta0(p, 1.0), 0.0, 1.0, 0.0};
    std::size_t steps = 0, violations = 0;
    double worst = 0.0;
    for (std::uint64_t m = 0; m < 10; ++m) {
        const PathwiseReport r = pathwise_bound_check(p, d, &G, s, 20, 3 + m, c);
        steps += r.steps_checked;
        violations += r.violations;
        worst = std::max(worst, r.worst_ratio);
    }
    return {violations == 0, fmt("violations=%.0f steps=%.0f worst_ratio=%.3e", double(violations),
                                 double(steps), worst)};
}

Outcome phi_bound() {
    Rng rng(404);
    double worst = INFINITY;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + rng.index(8);
        Vector spec(static_cast<Eigen::Index>(n));
        for (auto& v : spec) v = std::exp(-6.0 * rng.uniform());
        // Random orthogonal bases around a prescribed spectrum.
        const Eigen::HouseholderQR<Matrix> q1(rng.normal_matrix(n, n)), q2(rng.normal_matrix(n, n));
        const Matrix U = q1.householderQ(), V = q2.householderQ();
        const Matrix A = std::sqrt(double(n)) * U * spec.asDiagonal() * V.transpose();
        const DataDrivenOp G = truncate_svd(A, 1 + rng.index(n));
        const double lam = 2.0 * rng.uniform();
        const double bmax = spec.maxCoeff() * spec.maxCoeff();
        const Schedule s{rng.uniform() / (bmax * (1.0 + lam)), 0.9 * rng.uniform(), lam, rng.uniform()};
        const std::size_t j = rng.index(10), k = j + 1 + rng.index(50);
        const PhiBound pb = phi_bound_check(A, &G, s, j, k, 2.0 * rng.uniform());
        worst = std::min(worst, pb.rhs - pb.lhs);
    }
    return {worst >= -1e-12, fmt("min_slack=%.3e tol=-1e-12", worst)};
}

Outcome exact_data_rate() {
    const Problem base = make_gravity(200);
    const double nu = 0.25, alpha = 0.1;
    Rng rng(5);
    const SourceFixture sf =
        make_source_fixture(base.op, nu, rng.normal_vector(base.n()), Vector::Zero(base.n()));
    const Problem p = with_source(base, sf);
    MethodConfig mc;
    mc.method = Method::SGD;
    mc.schedule = Schedule{default_eta0(p, 1.0), alpha, 0.0, 0.0};
    mc.stop = StoppingRule::max_epochs(500);
    EnsembleOptions eo;
    eo.trials = 10;
    eo.base_seed = 5;
    const Ensemble e = run_ensemble(p, 0.0, nullptr, mc, eo);
    std::vector<double> k, v;
    for (std::size_t s = 1; s < e.epochs.size(); ++s) {
        k.push_back(e.epochs[s]);
        v.push_back(e.mean_sq_error[s]);
    }
    const double target = -std::min(2 * nu * (1 - alpha), alpha);
    const DecayFit fit = fit_decay(k, v);
    const double rel = std::abs(fit.slope - target) / std::abs(target);
    return {rel <= 0.3, fmt("slope=%.4f target=%.4f rel_dev=%.3f tol=0.30", fit.slope, target, rel)};
}

Outcome stability() {
    const Problem p = make_phillips(200);
    const DataDrivenOp G = truncate_svd(p.op, 10);
    const Schedule s{default_eta0(p, 1.0), 0.0, 1.0, 0.0};
    std::vector<double> levels;
    for (int i = 0; i <= 12; ++i) levels.push_back(1e-2 * std::pow(0.5, i));
    const auto sweep = stability_sweep(p, &G, s, 6, 6 + 1000000, 5, levels);
    bool monotone = true;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        if (!sweep[i].distance) monotone = false;
        else if (i > 0 && sweep[i - 1].distance && *sweep[i].distance > *sweep[i - 1].distance)
            monotone = false;
    }
    const double last = sweep.back().distance.value_or(NAN);
    return {monotone && last < 1e-6,
            fmt("monotone=%.0f first=%.3e final=%.3e tol=1e-6", monotone ? 1.0 : 0.0,
                sweep.front().distance.value_or(NAN), last)};
}

ExperimentConfig desk_config(const std::string& problem, Method m, double delta0, double alpha) {
    ExperimentConfig c;
    c.problem = problem;
    c.n = 1000;
    c.method = m;
    c.delta0 = delta0;
    c.alpha = alpha;
    c.trials = 10;
    c.seed = 17;
    return c;
}

Outcome table_reproduction() {
    ExperimentConfig sgd = desk_config("phillips", Method::SGD, 1e-2, 0.0);
    sgd.max_epochs = 50;
    const ResultRow a = cmd_run(sgd).row;
    ExperimentConfig lm = desk_config("phillips", Method::LM, 1e-2, 0.0);
    lm.max_epochs = 2000;
    const ResultRow b = cmd_run(lm).row;
    const bool sgd_ok = a.best_error >= 2.40e-1 / 3 && a.best_error <= 2.40e-1 * 3 && a.best_epoch < 20;
    const bool lm_ok = b.best_error >= 1.28e-1 / 3 && b.best_error <= 1.28e-1 * 3;
    return {sgd_ok && lm_ok && !a.diverged && !b.diverged,
            fmt("sgd_best=%.4e@%.2f lm_best=%.4e@%.0f factor=3", a.best_error, a.best_epoch,
                b.best_error, b.best_epoch)};
}

Outcome ordering() {
    auto best = [](const std::string& problem, Method m, double delta0, std::size_t rank, double c0) {
        ExperimentConfig c = desk_config(problem, m, delta0, 0.1);
        c.rank = rank;
        c.c0 = c0;
        c.max_epochs = 300;
        return cmd_run(c).row.best_error;
    };
    const double pd = best("phillips", Method::DSGD, 1e-3, 10, 1.0);
    const double ps = best("phillips", Method::SGD, 1e-3, 0, 1.0);
    const double sd = best("shaw", Method::DSGD, 1e-2, 6, 2.0);
    const double ss = best("shaw", Method::SGD, 1e-2, 0, 2.0);
    return {pd < ps && sd < ss,
            fmt("phillips dsgd=%.4e sgd=%.4e; shaw dsgd=%.4e sgd=%.4e", pd, ps, sd, ss)};
}

std::string render(const ExperimentConfig& cfg) {
    const RunOutput r = cmd_run(cfg);
    std::ostringstream out;
    write_trajectory_csv(out, r.ensemble, r.x_dag);
    write_summary_csv(out, {r.row}, false);
    return out.str();
}

Outcome determinism() {
    ExperimentConfig c;
    c.problem = "gravity";
    c.n = 100;
    c.method = Method::DSGD;
    c.rank = 8;
    c.alpha = 0.1;
    c.trials = 8;
    c.max_epochs = 40;
    c.seed = 9;
    c.record = "iteration";
    c.threads = 0;
    std::vector<std::string> outputs;
    for (const char* threads : {"1", "1", "3", "8"}) {
        setenv("ILLPOSED_THREADS", threads, 1);
        outputs.push_back(render(c));
    }
    unsetenv("ILLPOSED_THREADS");
    bool same = true;
    for (const auto& o : outputs) same = same && o == outputs.front();
    return {same, fmt("runs=%.0f bytes=%.0f identical=%.0f", double(outputs.size()),
                      double(outputs.front().size()), same ? 1.0 : 0.0)};
}

Outcome nonlinear_gradient() {
    const Problem p = make_problem("squared-phillips", 50);
    Rng rng(10);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const Vector x = rng.normal_vector(50);
        const std::size_t i = rng.index(50);
        const Vector g = row_gradient_step(p.op, i, x, 1.0);
        Vector fd(50);
        for (Eigen::Index j = 0; j < 50; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
            Vector xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            fd[j] = (row_value(p.op, i, xp) - row_value(p.op, i, xm)) / (2 * h);
        }
        worst = std::max(worst, (g - fd).norm() / g.norm());
    }
    return {worst < 1e-6, fmt("max_rel_err=%.3e tol=1e-6", worst)};
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

std::set<int> parse_ids(const std::string& s) {
    std::set<int> out;
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');)
        if (!tok.empty()) out.insert(std::stoi(tok));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only, expected;
    for (int a = 1; a + 1 < argc; a += 2) {
        const std::string flag = argv[a];
        if (flag == "--only") only = parse_ids(argv[a + 1]);
        else if (flag == "--expect-fail") expected = parse_ids(argv[a + 1]);
        else {
            std::fprintf(stderr, "unknown option %s\n", flag.c_str());
            return 1;
        }
    }

    const std::vector<Criterion> criteria = {
        {1, "oracle equivalence", 5, oracle_equivalence},
        {2, "bias-variance identity", 10, bias_variance_identity},
        {3, "pathwise recursion", 10, pathwise},
        {4, "phi bound", 2, phi_bound},
        {5, "exact-data rate", 30, exact_data_rate},
        {6, "delta->0 stability", 5, stability},
        {7, "table reproduction", 60, table_reproduction},
        {8, "ordering reproduction", 120, ordering},
        {9, "determinism", 10, determinism},
        {10, "nonlinear gradient", 2, nonlinear_gradient},
    };

    std::set<int> failed;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.budget_s;
        const bool pass = o.pass && in_time;
        if (!pass) failed.insert(c.id);
        std::printf("criterion %2d %-24s %s  %s  time=%.2fs budget=%.0fs%s\n", c.id, c.name,
                    pass ? "PASS" : "FAIL", o.detail.c_str(), secs, c.budget_s,
                    in_time ? "" : " (over budget)");
        std::fflush(stdout);
    }
    std::set<int> unexpected;
    for (int id : failed)
        if (!expected.count(id)) unexpected.insert(id);
    for (int id : expected)
        if (!failed.count(id) && (only.empty() || only.count(id))) unexpected.insert(id);
    std::printf("%zu failed", failed.size());
    if (!expected.empty()) std::printf(", %zu known failures", expected.size());
    std::printf("\n");
    return unexpected.empty() ? 0 : 1;
}
