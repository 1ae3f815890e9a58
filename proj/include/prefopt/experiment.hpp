#pragma once

#include "prefopt/benchmarks.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace prefopt {

struct ExperimentPlan {
  std::vector<FunctionId> functions;
  std::vector<Algorithm> algorithms{Algorithm::bpe4prost, Algorithm::eubo_linecospar, Algorithm::random_pairs};
  int n_runs = 11;
  int budget = 50;
  std::uint64_t base_seed = 7;
  std::string output_path;            // empty: no CSV
  std::optional<std::string> logs_dir;  // one JSON-lines log per cell
  bool record_timing = false;         // wall_ms stays 0 otherwise, keeping output byte-stable
  int grid_points = 51;               // per dimension, EUBO-LineCoSpar only

  void check() const;
};

struct RegretRecord {
  int run_id = 0;
  FunctionId function = FunctionId::branin2;
  Algorithm algorithm = Algorithm::bpe4prost;
  int iteration = 0;
  double regret = 0.0;
  Configuration recommendation;
  std::int64_t wall_ms = 0;
};

struct CellResult {
  FunctionId function = FunctionId::branin2;
  Algorithm algorithm = Algorithm::bpe4prost;
  int run_id = 0;
  std::vector<RegretRecord> records;
  LoopState state;
  std::vector<ComparisonRecord> init_records;  // dataset right after initialization
  int comparisons = 0;                         // oracle calls
  int oracle_ties = 0;
  std::string log_path;
  std::optional<std::string> error;
};

struct ExperimentResult {
  std::vector<RegretRecord> records;  // sorted
  std::vector<CellResult> cells;      // plan order
  int failed_cells = 0;
};

/// One (function, algorithm, run) cell with seed base_seed + run.
CellResult run_cell(const ExperimentPlan& plan, FunctionId f, Algorithm a, int run);

/// Runs every cell, concurrently when OpenMP is available. Output rows are
/// sorted by (function, algorithm, run, iteration). Failed cells go to
/// `<output_path>.errors.csv`.
ExperimentResult run_experiment(const ExperimentPlan& plan);

void write_regret_csv(std::ostream& out, const std::vector<RegretRecord>& records);
void write_regret_csv(const std::string& path, const std::vector<RegretRecord>& records);

struct SummaryRow {
  std::string function;
  std::string algorithm;
  int iteration = 0;
  int n_runs = 0;
  double mean_log10_regret = 0.0;
  double std_error = 0.0;
};

inline constexpr double kRegretFloor = 1e-12;

/// Per (function, algorithm, iteration) mean and standard error of
/// log10(max(regret, 1e-12)). Rows sorted by key.
std::vector<SummaryRow> summarize(std::istream& csv);
std::vector<SummaryRow> summarize(const std::string& csv_path);
void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);

/// Mean final regret per (function, algorithm) at `iteration`.
double mean_regret_at(const std::vector<RegretRecord>& records, FunctionId f, Algorithm a, int iteration);

}  // namespace prefopt
