#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "illposed/analysis.hpp"

namespace illposed {

// Raised for invalid configurations; `field` names the offending key.
struct UsageError : InvalidArgument {
    UsageError(std::string field, const std::string& what)
        : InvalidArgument(field + ": " + what), field(std::move(field)) {}
    std::string field;
};

namespace exit_code {
constexpr int ok = 0;
constexpr int usage = 1;
constexpr int divergence = 2;
constexpr int verification = 3;
}  // namespace exit_code

struct ExperimentConfig {
    std::string problem = "phillips";
    std::string problem_file;  // overrides problem/n when set
    std::size_t n = 200;
    double gravity_depth = 0.25;
    double delta0 = 1e-2;
    Method method = Method::SGD;
    double c0 = 1.0;
    std::optional<double> eta0;  // explicit step size, bypasses c0 and the LM preset
    double alpha = 0.0;
    double alpha_prime = 0.0;
    std::optional<double> lambda0;  // 0 for lm/sgd, 1 for dlm/dsgd when unset
    std::size_t rank = 0;
    std::size_t trials = 10;
    std::optional<double> max_epochs;  // 2000, or the paper-scale limits
    std::uint64_t seed = 0;
    std::string record = "auto";  // auto, iteration, epoch, every:K
    bool redraw_noise = false;
    bool paper_scale = false;
    std::size_t threads = 0;
    std::string output;   // trajectory CSV
    std::string summary;  // summary CSV

    double effective_lambda0() const;
    double effective_max_epochs() const;
};

// key=value assignment using the long flag names ("delta0", "method", ...).
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// One pair per line, '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config_file(std::istream& in);

void validate(const ExperimentConfig& cfg);

struct ResultRow {
    ExperimentConfig config;
    double best_error = 0.0;
    double best_epoch = 0.0;
    double final_error = 0.0;
    double epochs_run = 0.0;
    bool diverged = false;
    bool excluded = false;
    double wall_time = 0.0;  // seconds
};

struct RunOutput {
    ResultRow row;
    Ensemble ensemble;
    Vector x_dag;
};

// Executes the ensemble. Divergence is reported through row.diverged.
RunOutput cmd_run(const ExperimentConfig& cfg);

// Shortest round-trip decimal form.
std::string format_number(double v);

void write_trajectory_csv(std::ostream& out, const Ensemble& e, const Vector& x_dag);
void write_summary_csv(std::ostream& out, const std::vector<ResultRow>& rows, bool with_timing);

struct TableColumn {
    std::string label;  // e.g. "dsgd", "dsgd_ap0.3", "dsgd_N5", "sgd", "lm"
    Method method;
    double c0;
    double alpha_prime;
    std::size_t rank;
};

struct TableSpec {
    int id;
    std::string problem;
    std::vector<TableColumn> columns;
};

TableSpec table_spec(int id);

struct TableCell {
    double delta0;
    double alpha;
    std::string label;
    std::optional<ResultRow> row;  // empty where the table has no entry
};

struct TableResult {
    TableSpec spec;
    std::vector<TableCell> cells;  // row-major in the table's order
};

struct TableOptions {
    std::size_t n = 200;
    std::size_t trials = 10;
    std::uint64_t seed = 0;
    std::optional<double> max_epochs;
    bool paper_scale = false;
    std::size_t threads = 0;
};

TableResult cmd_table(int id, const TableOptions& opts);

// Wide layout: delta0, alpha, then (e, k) per column.
void write_table_csv(std::ostream& out, const TableResult& t);
// Long layout: one line per cell including the exclusion flag.
void write_table_cells_csv(std::ostream& out, const TableResult& t);

struct CheckResult {
    std::string suite;
    std::string name;
    double value;
    double threshold;
    bool pass;
};

// suite: oracles, invariants, rates or all.
std::vector<CheckResult> cmd_verify(const std::string& suite, std::uint64_t seed);
void write_checks_csv(std::ostream& out, const std::vector<CheckResult>& checks);

}  // namespace illposed
