// Command-line front end: run, table, verify, problems.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include <Eigen/SVD>

#include "illposed/experiment.hpp"

using namespace illposed;

namespace {

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("output", "cannot write " + path);
    return out;
}

struct RunFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
    bool timing = false;
};

void add_run_options(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config_file, "key=value file; flags given here override it");
    for (const char* key :
         {"problem", "problem-file", "n", "gravity-depth", "delta0", "method", "c0", "eta0", "alpha", "alpha-prime",
          "lambda0", "rank", "trials", "max-epochs", "seed", "record", "threads", "output", "summary"}) {
        cmd->add_option_function<std::string>(
            std::string("--") + key, [&f, key](const std::string& v) { f.values[key] = v; });
    }
    cmd->add_flag_function("--paper-scale", [&f](std::int64_t) { f.values["paper-scale"] = "true"; },
                           "n = 1000 with the long epoch limits");
    cmd->add_flag_function("--redraw-noise", [&f](std::int64_t) { f.values["redraw-noise"] = "true"; },
                           "fresh noise per trial");
    cmd->add_flag("--timing", f.timing, "add wall time to the summary");
}

int do_run(const RunFlags& f) {
    ExperimentConfig cfg;
    if (!f.config_file.empty()) {
        std::ifstream in(f.config_file);
        if (!in) throw UsageError("config", "cannot open " + f.config_file);
        for (const auto& [k, v] : read_config_file(in)) apply_setting(cfg, k, v);
    }
    // paper-scale resets n, so apply it before an explicit --n.
    if (auto it = f.values.find("paper-scale"); it != f.values.end()) apply_setting(cfg, it->first, it->second);
    for (const auto& [k, v] : f.values)
        if (k != "paper-scale") apply_setting(cfg, k, v);

    const RunOutput res = cmd_run(cfg);
    if (!cfg.output.empty() && !res.row.diverged) {
        auto out = open_output(cfg.output);
        write_trajectory_csv(out, res.ensemble, res.x_dag);
    }
    if (!cfg.summary.empty()) {
        auto out = open_output(cfg.summary);
        write_summary_csv(out, {res.row}, f.timing);
    }
    write_summary_csv(std::cout, {res.row}, f.timing);
    if (res.row.diverged) {
        std::cerr << "diverged\n";
        return exit_code::divergence;
    }
    return exit_code::ok;
}

int do_problems(std::size_t n, const std::string& spectrum, const std::string& save, const std::string& out_path) {
    if (!save.empty()) {
        if (out_path.empty()) throw UsageError("out", "--save needs --out");
        const Problem p = make_problem(save, n);
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw UsageError("out", "cannot write " + out_path);
        save_problem(p, out);
        return exit_code::ok;
    }
    if (!spectrum.empty()) {
        const Problem p = make_problem(spectrum, n);
        Eigen::BDCSVD<Matrix> svd(Matrix(p.op.matrix()));
        std::cout << "index,singular_value\n";
        for (Eigen::Index j = 0; j < svd.singularValues().size(); ++j)
            std::cout << j + 1 << ',' << format_number(svd.singularValues()[j]) << '\n';
        return exit_code::ok;
    }
    std::cout << "problem,n,nonlinearity,sigma_max,sigma_min,condition\n";
    for (const char* name : {"phillips", "gravity", "shaw", "squared-phillips", "squared-shaw"}) {
        const Problem p = make_problem(name, n);
        const Eigen::BDCSVD<Matrix> svd(Matrix(p.op.matrix()));
        const Vector& s = svd.singularValues();
        std::cout << name << ',' << n << ',' << to_string(p.op.nonlinearity()) << ','
                  << format_number(s[0]) << ',' << format_number(s[s.size() - 1]) << ','
                  << format_number(s[0] / s[s.size() - 1]) << '\n';
    }
    return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic and data-driven iterative regularization for ill-posed problems"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "run one ensemble and write its trajectory");
    add_run_options(run, run_flags);

    int table_id = 1;
    TableOptions topts;
    std::string table_out, cells_out;
    double table_epochs = 0.0;
    auto* table = app.add_subcommand("table", "reproduce the layout of a results table");
    table->add_option("id", table_id, "table number (1-9)")->required();
    table->add_option("--n", topts.n);
    table->add_option("--trials", topts.trials);
    table->add_option("--seed", topts.seed);
    table->add_option("--max-epochs", table_epochs);
    table->add_option("--threads", topts.threads);
    table->add_flag("--paper-scale", topts.paper_scale);
    table->add_option("--output", table_out, "wide CSV (default stdout)");
    table->add_option("--cells", cells_out, "long CSV with one line per cell");

    std::string suite = "all";
    std::uint64_t verify_seed = 1;
    auto* verify = app.add_subcommand("verify", "run verification suites");
    verify->add_option("suite", suite, "oracles, invariants, rates or all");
    verify->add_option("--seed", verify_seed);

    std::size_t problems_n = 200;
    std::string spectrum, save, save_out;
    auto* problems = app.add_subcommand("problems", "list generators and their spectra");
    problems->add_option("--n", problems_n);
    problems->add_option("--spectrum", spectrum, "print the singular values of one problem");
    problems->add_option("--save", save, "write one problem in the binary format");
    problems->add_option("--out", save_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_code::ok : exit_code::usage;
    }

    try {
        if (run->parsed()) return do_run(run_flags);
        if (table->parsed()) {
            if (table_epochs > 0.0) topts.max_epochs = table_epochs;
            const TableResult t = cmd_table(table_id, topts);
            if (table_out.empty()) {
                write_table_csv(std::cout, t);
            } else {
                auto out = open_output(table_out);
                write_table_csv(out, t);
            }
            if (!cells_out.empty()) {
                auto out = open_output(cells_out);
                write_table_cells_csv(out, t);
            }
            for (const auto& c : t.cells)
                if (c.row && c.row->diverged) return exit_code::divergence;
            return exit_code::ok;
        }
        if (verify->parsed()) {
            const auto checks = cmd_verify(suite, verify_seed);
            write_checks_csv(std::cout, checks);
            for (const auto& c : checks)
                if (!c.pass) return exit_code::verification;
            return exit_code::ok;
        }
        if (problems->parsed()) return do_problems(problems_n, spectrum, save, save_out);
    } catch (const DivergenceError& e) {
        std::cerr << e.what() << '\n';
        return exit_code::divergence;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::usage;
    }
    return exit_code::usage;
}
