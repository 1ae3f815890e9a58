#include "prefopt/errors.hpp"
#include "prefopt/events.hpp"
#include "prefopt/experiment.hpp"
#include "prefopt/http_server.hpp"
#include "prefopt/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <sstream>

using namespace prefopt;

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int simulate(const std::string& functions, const std::string& algorithms, int runs, int iterations,
             std::uint64_t seed, const std::string& out, const std::string& logs_dir, bool timing) {
  ExperimentPlan plan;
  for (const auto& f : split(functions)) plan.functions.push_back(function_from_string(f));
  plan.algorithms.clear();
  for (const auto& a : split(algorithms)) plan.algorithms.push_back(algorithm_from_string(a));
  plan.n_runs = runs;
  plan.budget = iterations;
  plan.base_seed = seed;
  plan.output_path = out;
  if (!logs_dir.empty()) plan.logs_dir = logs_dir;
  plan.record_timing = timing;
  const ExperimentResult result = run_experiment(plan);
  std::cout << "wrote " << result.records.size() << " records to " << out << '\n';
  for (FunctionId f : plan.functions) {
    for (Algorithm a : plan.algorithms) {
      try {
        std::cout << "  " << to_string(f) << ' ' << to_string(a) << ": mean final regret "
                  << mean_regret_at(result.records, f, a, plan.budget) << '\n';
      } catch (const NotFoundError&) {
        std::cout << "  " << to_string(f) << ' ' << to_string(a) << ": no completed runs\n";
      }
    }
  }
  if (result.failed_cells > 0) {
    std::cerr << result.failed_cells << " cell(s) failed; see " << out << ".errors.csv\n";
    return 3;
  }
  return 0;
}

int replay(const std::string& path) {
  const ReplayReport r = replay_log(path);
  std::cout << "queries checked " << r.queries_checked << ", responses replayed " << r.responses_replayed
            << ", recommendations checked " << r.recommendations_checked << ", max deviation " << r.max_deviation
            << '\n';
  if (!r.matched) {
    std::cout << "MISMATCH: " << r.mismatch << '\n';
    return 1;
  }
  std::cout << "match\n";
  return 0;
}

int serve(const std::string& config_path) {
  const ServiceConfig cfg = ServiceConfig::load(config_path);
  SessionManager manager(cfg.data_dir);
  const int recovered = manager.recover();
  HttpServer server(manager, cfg);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "recovered " << recovered << " session(s) from " << cfg.data_dir << "; listening on "
            << cfg.bind_address << ':' << cfg.port << std::endl;
  if (!server.listen()) {
    std::cerr << "cannot bind " << cfg.bind_address << ':' << cfg.port << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based Bayesian optimization toolkit"};
  app.require_subcommand(1);

  std::string functions = "branin2,ackley4", algorithms = "bpe4prost,eubo_linecospar,random", out = "results.csv",
              logs_dir;
  int runs = 11, iterations = 50;
  std::uint64_t seed = 7;
  bool timing = false;
  auto* sim = app.add_subcommand("simulate", "Run the benchmark study and write regret records as CSV");
  sim->add_option("--functions", functions, "Comma-separated: branin2, ackley4, alpine1_4, hartmann4");
  sim->add_option("--algorithms", algorithms, "Comma-separated: bpe4prost, eubo_linecospar, random");
  sim->add_option("--runs", runs, "Runs per (function, algorithm)")->check(CLI::PositiveNumber);
  sim->add_option("--iterations", iterations, "Queries after initialization")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "Base seed; run r uses seed + r");
  sim->add_option("--out", out, "Output CSV");
  sim->add_option("--logs-dir", logs_dir, "Write one replayable event log per run here");
  sim->add_flag("--timing", timing, "Record per-iteration wall time (output no longer byte-stable)");

  std::string in, summary_out = "summary.csv";
  auto* sum = app.add_subcommand("summarize", "Mean and standard error of log10 regret per iteration");
  sum->add_option("--in", in, "Regret CSV from simulate")->required();
  sum->add_option("--out", summary_out, "Summary CSV");

  std::string config_path;
  auto* srv = app.add_subcommand("serve", "Run the HTTP session server");
  srv->add_option("--config", config_path, "Service config file (JSON)");

  std::string session_path;
  auto* rep = app.add_subcommand("replay", "Re-run a logged session or simulation and compare");
  rep->add_option("--session", session_path, "Event log (JSON lines)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return simulate(functions, algorithms, runs, iterations, seed, out, logs_dir, timing);
    if (*sum) {
      const auto rows = summarize(in);
      write_summary_csv(summary_out, rows);
      std::cout << "wrote " << rows.size() << " summary rows to " << summary_out << '\n';
      return 0;
    }
    if (*srv) return serve(config_path);
    if (*rep) return replay(session_path);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const IncompatibleLogError& e) {
    std::cerr << "incompatible log: " << e.what() << '\n';
    return 2;
  } catch (const NotFoundError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
