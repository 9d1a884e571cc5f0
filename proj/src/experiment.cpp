#include "illposed/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "illposed/rng.hpp"

namespace illposed {

double ExperimentConfig::effective_lambda0() const {
    if (lambda0) return *lambda0;
    return uses_surrogate(method) ? 1.0 : 0.0;
}

double ExperimentConfig::effective_max_epochs() const {
    if (max_epochs) return *max_epochs;
    if (paper_scale) return is_stochastic(method) ? 1e5 : 1e6;
    return 2000.0;
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end) throw UsageError(key, "not a number: '" + v + "'");
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end) throw UsageError(key, "not a nonnegative integer: '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw UsageError(key, "not a boolean: '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::vector<std::string> kProblems = {"phillips", "gravity", "shaw", "squared-phillips",
                                            "squared-shaw"};

}  // namespace

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "problem") {
        if (std::find(kProblems.begin(), kProblems.end(), value) == kProblems.end())
            throw UsageError(key, "unknown problem '" + value + "'");
        cfg.problem = value;
    } else if (key == "problem-file") cfg.problem_file = value;
    else if (key == "n") cfg.n = parse_uint(key, value);
    else if (key == "gravity-depth") cfg.gravity_depth = parse_double(key, value);
    else if (key == "delta0") cfg.delta0 = parse_double(key, value);
    else if (key == "method") {
        try {
            cfg.method = parse_method(value);
        } catch (const InvalidArgument&) {
            throw UsageError(key, "unknown method '" + value + "'");
        }
    } else if (key == "c0") cfg.c0 = parse_double(key, value);
    else if (key == "eta0") cfg.eta0 = parse_double(key, value);
    else if (key == "alpha") cfg.alpha = parse_double(key, value);
    else if (key == "alpha-prime") cfg.alpha_prime = parse_double(key, value);
    else if (key == "lambda0") cfg.lambda0 = parse_double(key, value);
    else if (key == "rank") cfg.rank = parse_uint(key, value);
    else if (key == "trials") cfg.trials = parse_uint(key, value);
    else if (key == "max-epochs") cfg.max_epochs = parse_double(key, value);
    else if (key == "seed") cfg.seed = parse_uint(key, value);
    else if (key == "record") cfg.record = value;
    else if (key == "redraw-noise") cfg.redraw_noise = parse_bool(key, value);
    else if (key == "paper-scale") {
        cfg.paper_scale = parse_bool(key, value);
        if (cfg.paper_scale) cfg.n = 1000;
    } else if (key == "threads") cfg.threads = parse_uint(key, value);
    else if (key == "output") cfg.output = value;
    else if (key == "summary") cfg.summary = value;
    else throw UsageError(key, "unknown setting");
}

std::vector<std::pair<std::string, std::string>> read_config_file(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config", "line " + std::to_string(lineno) + " is not key=value");
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

namespace {

Recording parse_record(const std::string& spec, double epochs, std::size_t n) {
    Recording r;
    if (spec == "iteration") {
        r.granularity = Recording::Granularity::PerIteration;
    } else if (spec == "epoch") {
        r.granularity = Recording::Granularity::PerEpoch;
    } else if (spec.rfind("every:", 0) == 0) {
        r.granularity = Recording::Granularity::EveryKEpochs;
        r.every = parse_uint("record", spec.substr(6));
        if (r.every == 0) throw UsageError("record", "interval must be positive");
    } else if (spec == "auto") {
        // Per epoch, thinned so long runs stay near 10^4 rows.
        const auto every = static_cast<std::size_t>(std::ceil(epochs / 1e4));
        if (every > 1) {
            r.granularity = Recording::Granularity::EveryKEpochs;
            r.every = every;
        }
    } else {
        throw UsageError("record", "expected auto, iteration, epoch or every:K");
    }
    (void)n;
    return r;
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
    if (cfg.problem_file.empty() && cfg.n < 2) throw UsageError("n", "must be at least 2");
    if (!(cfg.gravity_depth > 0.0)) throw UsageError("gravity-depth", "must be positive");
    if (!(cfg.delta0 >= 0.0)) throw UsageError("delta0", "must be nonnegative");
    if (!(cfg.c0 > 0.0)) throw UsageError("c0", "must be positive");
    if (cfg.eta0 && !(*cfg.eta0 > 0.0)) throw UsageError("eta0", "must be positive");
    if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) throw UsageError("alpha", "must lie in [0, 1)");
    if (!(cfg.alpha_prime >= 0.0)) throw UsageError("alpha-prime", "must be nonnegative");
    if (cfg.trials < 1) throw UsageError("trials", "must be at least 1");
    if (!(cfg.effective_max_epochs() > 0.0)) throw UsageError("max-epochs", "must be positive");
    if (uses_surrogate(cfg.method)) {
        if (cfg.rank < 1) throw UsageError("rank", "dlm and dsgd need a surrogate rank >= 1");
        if (!(cfg.effective_lambda0() >= 0.0)) throw UsageError("lambda0", "must be nonnegative");
    } else if (cfg.lambda0 && *cfg.lambda0 != 0.0) {
        throw UsageError("lambda0", "lm and sgd use no regularization term; lambda0 must be 0");
    }
    if (cfg.problem_file.empty() && cfg.rank > cfg.n) throw UsageError("rank", "exceeds n");
    parse_record(cfg.record, 1.0, cfg.n);
}

namespace {

Problem load_config_problem(const ExperimentConfig& cfg) {
    if (!cfg.problem_file.empty()) {
        std::ifstream in(cfg.problem_file, std::ios::binary);
        if (!in) throw UsageError("problem-file", "cannot open " + cfg.problem_file);
        return load_problem(in);
    }
    return make_problem(cfg.problem, cfg.n, cfg.gravity_depth);
}

// Default Landweber step: 1/|F'(x_dag)|_F^2 on the stacked gradient, 2/3 of that
// for squared-shaw, halved for the data-driven variant.
double landweber_eta0(const Problem& p, Method m) {
    double factor = p.name == "squared-shaw" ? 2.0 / 3.0 : 1.0;
    if (m == Method::DLM) factor *= 0.5;
    return paper_lm_eta0(p, factor);
}

}  // namespace

RunOutput cmd_run(const ExperimentConfig& cfg) {
    validate(cfg);
    const auto start = std::chrono::steady_clock::now();
    const Problem p = load_config_problem(cfg);
    if (cfg.rank > p.n()) throw UsageError("rank", "exceeds n");
    const double epochs = cfg.effective_max_epochs();

    MethodConfig mc;
    mc.method = cfg.method;
    mc.schedule.eta0 = cfg.eta0 ? *cfg.eta0
                       : is_stochastic(cfg.method) ? default_eta0(p, cfg.c0)
                                                   : landweber_eta0(p, cfg.method);
    mc.schedule.alpha = cfg.alpha;
    mc.schedule.lambda0 = cfg.effective_lambda0();
    mc.schedule.alpha_prime = cfg.alpha_prime;
    mc.stop = StoppingRule::max_epochs(epochs);
    mc.options.record = parse_record(cfg.record, epochs, p.n());
    const double per_epoch = is_stochastic(cfg.method) ? static_cast<double>(p.n()) : 1.0;
    const double total_iters = std::ceil(epochs * per_epoch);
    mc.options.record.fine_stride = static_cast<std::size_t>(std::max(1.0, std::ceil(total_iters / 2e6)));
    const double period_epochs =
        mc.options.record.granularity == Recording::Granularity::EveryKEpochs
            ? static_cast<double>(mc.options.record.every)
            : 1.0;
    const double stored = (epochs / period_epochs + 2.0) * static_cast<double>(p.n());
    mc.options.record.keep_iterates = stored <= 2e7;

    EnsembleOptions eo;
    eo.trials = cfg.trials;
    eo.base_seed = cfg.seed;
    eo.redraw_noise = cfg.redraw_noise;
    eo.threads = cfg.threads;

    std::optional<DataDrivenOp> G;
    if (cfg.rank > 0) G = truncate_svd(p.op, cfg.rank);

    RunOutput out;
    out.x_dag = p.x_dag;
    out.row.config = cfg;
    out.row.config.n = p.n();
    try {
        out.ensemble = run_ensemble(p, cfg.delta0, G ? &*G : nullptr, mc, eo);
        out.row.best_error = out.ensemble.best.sq_error;
        out.row.best_epoch = out.ensemble.best.epoch;
        out.row.final_error = out.ensemble.mean_sq_error.back();
        out.row.epochs_run = out.ensemble.epochs.back();
    } catch (const DivergenceError&) {
        out.row.diverged = true;
        out.row.best_error = out.row.best_epoch = out.row.final_error =
            std::numeric_limits<double>::quiet_NaN();
    }
    out.row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string optional_number(double v) { return std::isnan(v) ? std::string() : format_number(v); }

}  // namespace

void write_trajectory_csv(std::ostream& out, const Ensemble& e, const Vector& x_dag) {
    out << "epoch,mean_sq_error,mean_sq_residual_F,mean_sq_residual_G,bias_sq,variance\n";
    const bool moments = e.mean_iterate.size() == e.epochs.size();
    for (std::size_t s = 0; s < e.epochs.size(); ++s) {
        out << format_number(e.epochs[s]) << ',' << format_number(e.mean_sq_error[s]) << ','
            << format_number(e.mean_sq_residual_F[s]) << ',' << optional_number(e.mean_sq_residual_G[s])
            << ',';
        if (moments)
            out << format_number((e.mean_iterate[s] - x_dag).squaredNorm()) << ','
                << format_number(e.spread[s]);
        else
            out << ',';
        out << '\n';
    }
}

void write_summary_csv(std::ostream& out, const std::vector<ResultRow>& rows, bool with_timing) {
    out << "problem,n,method,delta0,c0,alpha,alpha_prime,lambda0,rank,trials,seed,max_epochs,"
           "best_error,best_epoch,final_error,epochs_run,diverged,excluded";
    if (with_timing) out << ",wall_time";
    out << '\n';
    for (const auto& r : rows) {
        const auto& c = r.config;
        out << (c.problem_file.empty() ? c.problem : c.problem_file) << ',' << c.n << ','
            << to_string(c.method) << ',' << format_number(c.delta0) << ',' << format_number(c.c0)
            << ',' << format_number(c.alpha) << ',' << format_number(c.alpha_prime) << ','
            << format_number(c.effective_lambda0()) << ',' << c.rank << ',' << c.trials << ','
            << c.seed << ',' << format_number(c.effective_max_epochs()) << ','
            << format_number(r.best_error) << ',' << format_number(r.best_epoch) << ','
            << format_number(r.final_error) << ',' << format_number(r.epochs_run) << ','
            << (r.diverged ? "true" : "false") << ',' << (r.excluded ? "true" : "false");
        if (with_timing) out << ',' << format_number(r.wall_time);
        out << '\n';
    }
}

TableSpec table_spec(int id) {
    const std::string problems[3] = {"phillips", "gravity", "shaw"};
    if (id < 1 || id > 9) throw UsageError("table", "unknown table id " + std::to_string(id));
    const int family = (id - 1) / 3;
    const std::string problem = problems[(id - 1) % 3];
    const bool shaw = problem == "shaw";
    const double c0 = shaw ? 2.0 : 1.0;
    const std::size_t N = shaw ? 6 : 10;
    TableSpec t{id, problem, {}};
    if (family == 0) {
        t.columns = {{"dsgd", Method::DSGD, c0, 0.0, N},
                     {"sgd", Method::SGD, c0, 0.0, 0},
                     {"lm", Method::LM, c0, 0.0, 0}};
    } else if (family == 1) {
        for (double ap : {0.0, 0.1, 0.3, 0.5})
            t.columns.push_back({"dsgd_ap" + format_number(ap), Method::DSGD, c0, ap, N});
        t.columns.push_back({"sgd", Method::SGD, c0, 0.0, 0});
    } else {
        const std::vector<std::size_t> ranks =
            shaw ? std::vector<std::size_t>{3, 4, 6, 1000} : std::vector<std::size_t>{3, 5, 10, 1000};
        for (std::size_t r : ranks)
            t.columns.push_back({"dsgd_N" + std::to_string(r), Method::DSGD, c0, 0.0, r});
        t.columns.push_back({"sgd", Method::SGD, c0, 0.0, 0});
    }
    return t;
}

TableResult cmd_table(int id, const TableOptions& opts) {
    TableResult out{table_spec(id), {}};
    const std::size_t n = opts.paper_scale ? 1000 : opts.n;
    for (double delta0 : {1e-3, 5e-3, 1e-2, 5e-2})
        for (double alpha : {0.0, 0.1, 0.3})
            for (const auto& col : out.spec.columns) {
                TableCell cell{delta0, alpha, col.label, std::nullopt};
                // The Landweber column only has entries for constant steps.
                if (col.method == Method::LM && alpha != 0.0) {
                    out.cells.push_back(cell);
                    continue;
                }
                ExperimentConfig cfg;
                cfg.problem = out.spec.problem;
                cfg.n = n;
                cfg.delta0 = delta0;
                cfg.method = col.method;
                cfg.c0 = col.c0;
                cfg.alpha = alpha;
                cfg.alpha_prime = col.alpha_prime;
                cfg.rank = std::min(col.rank, n);
                cfg.trials = opts.trials;
                cfg.seed = opts.seed;
                cfg.max_epochs = opts.max_epochs;
                cfg.paper_scale = opts.paper_scale;
                cfg.threads = opts.threads;
                cfg.record = "auto";
                ResultRow row = cmd_run(cfg).row;
                row.excluded = out.spec.problem == "shaw" && delta0 == 1e-3 && alpha == 0.3;
                cell.row = row;
                out.cells.push_back(std::move(cell));
            }
    return out;
}

void write_table_csv(std::ostream& out, const TableResult& t) {
    out << "delta0,alpha";
    for (const auto& c : t.spec.columns) out << ",e_" << c.label << ",k_" << c.label;
    out << '\n';
    const std::size_t width = t.spec.columns.size();
    for (std::size_t r = 0; r < t.cells.size(); r += width) {
        out << format_number(t.cells[r].delta0) << ',' << format_number(t.cells[r].alpha);
        for (std::size_t c = 0; c < width; ++c) {
            const auto& cell = t.cells[r + c];
            if (cell.row)
                out << ',' << format_number(cell.row->best_error) << ','
                    << format_number(cell.row->best_epoch);
            else
                out << ",,";
        }
        out << '\n';
    }
}

void write_table_cells_csv(std::ostream& out, const TableResult& t) {
    out << "table,delta0,alpha,column,best_error,best_epoch,final_error,diverged,excluded\n";
    for (const auto& cell : t.cells) {
        if (!cell.row) continue;
        out << t.spec.id << ',' << format_number(cell.delta0) << ',' << format_number(cell.alpha)
            << ',' << cell.label << ',' << format_number(cell.row->best_error) << ','
            << format_number(cell.row->best_epoch) << ',' << format_number(cell.row->final_error)
            << ',' << (cell.row->diverged ? "true" : "false") << ','
            << (cell.row->excluded ? "true" : "false") << '\n';
    }
}

namespace {

Problem random_linear_problem(Rng& rng, std::size_t n) {
    RowMatrix A = rng.normal_matrix(n, n);
    Vector x = rng.normal_vector(n);
    Problem p{"random", ForwardOp(A, Nonlinearity::Identity), x, Vector(), Vector()};
    p.y_dag = apply(p.op, p.x_dag);
    return p;
}

void verify_oracles(std::vector<CheckResult>& out, std::uint64_t seed) {
    Rng rng(seed);
    for (bool with_G : {false, true}) {
        double gap = 0.0;
        for (int t = 0; t < 5; ++t) {
            const Problem p = random_linear_problem(rng, 3);
            const NoisyData d = add_noise(p, 0.1, rng.engine()());
            const DataDrivenOp G = truncate_svd(p.op, 2);
            Schedule s{default_eta0(p, 1.0), 0.1, with_G ? 0.5 : 0.0, 0.2};
            gap = std::max(gap, enumerate_mean_error(p, d, with_G ? &G : nullptr, s, 4).max_abs_gap);
        }
        out.push_back({"oracles", with_G ? "mean_error_enumeration_with_G" : "mean_error_enumeration",
                       gap, 1e-12, gap < 1e-12});
    }
    {
        double worst = std::numeric_limits<double>::infinity();
        for (int t = 0; t < 50; ++t) {
            const std::size_t n = 3 + rng.index(5);
            Vector spec(static_cast<Eigen::Index>(n));
            for (auto& v : spec) v = std::exp(-4.0 * rng.uniform());
            const Matrix A = std::sqrt(static_cast<double>(n)) * Matrix(spec.asDiagonal());
            const DataDrivenOp G = truncate_svd(A, 1 + rng.index(n));
            const double lam = rng.uniform();
            Schedule s{1.0 / (1.0 + lam), 0.5 * rng.uniform(), lam, rng.uniform()};
            const std::size_t j = rng.index(10);
            const std::size_t k = j + 1 + rng.index(40);
            const PhiBound pb = phi_bound_check(A, &G, s, j, k, rng.uniform() * 2.0);
            worst = std::min(worst, pb.rhs - pb.lhs);
        }
        out.push_back({"oracles", "phi_bound_min_slack", worst, -1e-12, worst >= -1e-12});
    }
    {
        std::vector<double> k, v;
        for (int i = 1; i <= 40; ++i) {
            k.push_back(i);
            v.push_back(7.0 * std::pow(i, -0.3));
        }
        const double err = std::abs(fit_decay(k, v).slope + 0.3);
        out.push_back({"oracles", "decay_fit_power_law", err, 1e-10, err < 1e-10});
    }
    {
        const Problem p = make_phillips(50);
        const DataDrivenOp G = truncate_svd(p.op, 5);
        MethodConfig mc{Method::DSGD, Schedule{default_eta0(p, 1.0), 0.1, 1.0, 0.0},
                        StoppingRule::max_epochs(20), {}};
        mc.options.record.keep_iterates = true;
        const Ensemble e = run_ensemble(p, 1e-2, &G, mc, {5, seed, false, 1, false});
        double worst = 0.0;
        for (double ep : e.epochs) {
            const BiasVariance bv = bias_variance(e, ep, p.x_dag);
            worst = std::max(worst, std::abs(bv.bias_sq + bv.variance - bv.total) / bv.total);
        }
        out.push_back({"oracles", "bias_variance_identity", worst, 1e-10, worst < 1e-10});
    }
    {
        const Problem p = random_linear_problem(rng, 4);
        const NoisyData d = add_noise(p, 0.05, rng.engine()());
        const DataDrivenOp G = truncate_svd(p.op, 2);
        const Schedule s{0.1, 0.0, 0.5, 0.0};
        const Vector x = p.x_dag + 0.3 * rng.normal_vector(4);
        const NoiseMoments nm = stochastic_noise_moments(p, d, &G, s, 1, x, 4000, rng.engine()());
        const double excess1 = nm.mean_sq_N1 - nm.bound_N1 - 3 * nm.se_N1;
        const double excess2 = nm.mean_sq_N2 - nm.bound_N2 - 3 * nm.se_N2;
        out.push_back({"oracles", "noise_moment_N1_excess", excess1, 0.0, excess1 <= 0.0});
        out.push_back({"oracles", "noise_moment_N2_excess", excess2, 0.0, excess2 <= 0.0});
    }
}

void verify_invariants(std::vector<CheckResult>& out, std::uint64_t seed) {
    const Problem p = make_phillips(200);
    const DataDrivenOp G = truncate_svd(p.op, 10);
    const NoisyData d = add_noise(p, 1e-2, seed + 1000000);
    AssumptionConstants c = measure_constants(p.op, G, p.x_dag, p.y_dag);
    {
        const Schedule s{default_eta0(p, 1.0), 0.0, 1.0, 0.0};
        std::size_t violations = 0;
        for (std::uint64_t t = 0; t < 3; ++t)
            violations += pathwise_bound_check(p, d, &G, s, 20, seed + t, c).violations;
        out.push_back({"invariants", "pathwise_recursion_violations", static_cast<double>(violations),
                       0.0, violations == 0});
    }
    {
        // SGD stays inside the radius built from the measured constants.
        const Schedule s{default_eta0(p, 1.0), 0.0, 0.0, 0.0};
        const std::size_t k = 20 * p.n();
        const double rho = rho_radius(c, s, p.n(), k, p.x_dag.norm(), d.delta);
        RunOptions opts;
        double worst = 0.0;
        opts.observer = [&](const StepInfo& st) { worst = std::max(worst, std::sqrt(st.sq_error_after)); };
        dsgd_run(p, d, nullptr, s, StoppingRule::a_priori(k), seed, opts);
        out.push_back({"invariants", "ball_containment_ratio", worst / rho, 1.0, worst <= rho});
    }
    {
        const Schedule s{default_eta0(p, 1.0), 0.0, 1.0, 0.0};
        std::vector<double> levels;
        for (int i = 0; i <= 12; ++i) levels.push_back(1e-2 * std::pow(0.5, i));
        const auto sweep = stability_sweep(p, &G, s, seed, seed + 1, 5, levels);
        std::size_t increases = 0;
        double ratio_err = 0.0;
        for (std::size_t i = 1; i < sweep.size(); ++i) {
            if (!sweep[i].distance || !sweep[i - 1].distance) {
                ++increases;
                continue;
            }
            if (*sweep[i].distance > *sweep[i - 1].distance) ++increases;
            ratio_err = std::max(ratio_err, std::abs(*sweep[i].distance / *sweep[i - 1].distance - 0.5));
        }
        out.push_back({"invariants", "stability_increases", static_cast<double>(increases), 0.0,
                       increases == 0});
        out.push_back({"invariants", "stability_linear_scaling", ratio_err, 1e-6, ratio_err < 1e-6});
    }
    {
        const Schedule s0{default_eta0(p, 1.0), 0.1, 0.0, 0.0};
        const auto a = dsgd_run(p, d, nullptr, s0, StoppingRule::max_epochs(3), seed);
        const auto b = dsgd_run(p, d, &G, s0, StoppingRule::max_epochs(3), seed);
        const bool same = a.iterate_final == b.iterate_final;
        out.push_back({"invariants", "sgd_equals_dsgd_at_zero_lambda", same ? 0.0 : 1.0, 0.0, same});
    }
    {
        const Schedule s{paper_lm_eta0(p), 0.0, 0.0, 0.0};
        RunOptions opts;
        opts.record.granularity = Recording::Granularity::PerIteration;
        const auto t = landweber_run(p, d, nullptr, s, StoppingRule::max_epochs(200), opts);
        std::size_t rises = 0;
        for (std::size_t i = 1; i < t.snapshots.size(); ++i)
            if (t.snapshots[i].sq_residual_F > t.snapshots[i - 1].sq_residual_F * (1 + 1e-14)) ++rises;
        out.push_back({"invariants", "landweber_residual_rises", static_cast<double>(rises), 0.0, rises == 0});
    }
}

void verify_rates(std::vector<CheckResult>& out, std::uint64_t seed) {
    const Problem base = make_gravity(200);
    const double nu = 0.25, alpha = 0.1;
    Rng rng(seed);
    const SourceFixture sf =
        make_source_fixture(base.op, nu, rng.normal_vector(base.n()), Vector::Zero(base.n()));
    const Problem p = with_source(base, sf);
    MethodConfig mc{Method::SGD, Schedule{default_eta0(p, 1.0), alpha, 0.0, 0.0},
                    StoppingRule::max_epochs(500), {}};
    const Ensemble e = run_ensemble(p, 0.0, nullptr, mc, {10, seed, false, 0, false});
    std::vector<double> k, v;
    for (std::size_t s = 1; s < e.epochs.size(); ++s) {
        k.push_back(e.epochs[s]);
        v.push_back(e.mean_sq_error[s]);
    }
    const double target = -std::min(2 * nu * (1 - alpha), alpha);
    const DecayFit fit = fit_decay(k, v);
    const double rel = std::abs(fit.slope - target) / std::abs(target);
    out.push_back({"rates", "exact_data_slope", fit.slope, target, rel <= 0.3});
}

}  // namespace

std::vector<CheckResult> cmd_verify(const std::string& suite, std::uint64_t seed) {
    std::vector<CheckResult> out;
    const bool all = suite == "all";
    if (!all && suite != "oracles" && suite != "invariants" && suite != "rates")
        throw UsageError("suite", "expected oracles, invariants, rates or all");
    if (all || suite == "oracles") verify_oracles(out, seed);
    if (all || suite == "invariants") verify_invariants(out, seed);
    if (all || suite == "rates") verify_rates(out, seed);
    return out;
}

void write_checks_csv(std::ostream& out, const std::vector<CheckResult>& checks) {
    out << "suite,check,value,threshold,pass\n";
    for (const auto& c : checks)
        out << c.suite << ',' << c.name << ',' << format_number(c.value) << ','
            << format_number(c.threshold) << ',' << (c.pass ? "true" : "false") << '\n';
}

}  // namespace illposed
