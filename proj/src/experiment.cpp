#include "prefopt/experiment.hpp"

#include "prefopt/errors.hpp"
#include "prefopt/events.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#ifdef PREFOPT_HAVE_OPENMP
#include <omp.h>
#endif

namespace prefopt {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Counts oracle calls for the initialization arithmetic checks.
class CountingOracle : public PreferenceOracle {
 public:
  explicit CountingOracle(PreferenceOracle& inner) : inner_(inner) {}
  Choice answer(const Configuration& a, const Configuration& b) override {
    ++calls;
    return inner_.answer(a, b);
  }
  int calls = 0;

 private:
  PreferenceOracle& inner_;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void ExperimentPlan::check() const {
  if (functions.empty()) throw ConfigError("plan has no functions");
  if (algorithms.empty()) throw ConfigError("plan has no algorithms");
  if (n_runs < 1) throw ConfigError("n_runs must be positive");
  if (budget < 1) throw ConfigError("budget must be positive");
  if (grid_points < 2) throw ConfigError("grid_points must be at least 2");
}

CellResult run_cell(const ExperimentPlan& plan, FunctionId fid, Algorithm alg, int run) {
  CellResult cell;
  cell.function = fid;
  cell.algorithm = alg;
  cell.run_id = run;

  const BenchmarkFunction f(fid);
  const std::size_t d = f.dim();
  ParameterSpace space = f.space();
  if (alg == Algorithm::eubo_linecospar) space = space.as_grid(plan.grid_points);

  LoopConfig cfg = LoopConfig::simulation(alg, d, plan.base_seed + static_cast<std::uint64_t>(run));
  cfg.budget = plan.budget;
  cfg.n_stop = std::min(cfg.n_stop, std::max(plan.budget, 1));
  const ModelConfig model = ModelConfig::for_algorithm(alg, d);
  const AcquisitionConfig acq = acquisition_for(alg, 2);

  SimulatedOracle truth(f);
  CountingOracle oracle(truth);

  std::optional<EventWriter> writer;
  if (plan.logs_dir) {
    std::filesystem::create_directories(*plan.logs_dir);
    cell.log_path = (std::filesystem::path(*plan.logs_dir) /
                     (to_string(fid) + "_" + to_string(alg) + "_run" + std::to_string(run) + ".jsonl"))
                        .string();
    std::filesystem::remove(cell.log_path);
    writer.emplace(cell.log_path, false);
    SessionSetup setup;
    setup.session_id = to_string(fid) + "-" + to_string(alg) + "-" + std::to_string(run);
    setup.source = "simulation";
    setup.space = space;
    setup.loop = cfg;
    setup.model = model;
    setup.acquisition = acq;
    setup.extra = {{"function", to_string(fid)}, {"run_id", run}};
    writer->append(event_type::session_created, to_json(setup));
  }

  try {
    Elicitation e(space, cfg, model, acq);
    std::optional<RunRecorder> rec;
    if (writer) {
      rec.emplace(*writer, e);
      rec->query();
    }
    auto last = std::chrono::steady_clock::now();
    bool init_captured = false;
    std::size_t seen = 0;
    while (!e.finished()) {
      const Query q = *e.pending();
      const Choice c = oracle.answer(q.option_a(), q.option_b());
      const PresentedChoice pc = c == Choice::first    ? PresentedChoice::A
                                 : c == Choice::second ? PresentedChoice::B
                                                       : PresentedChoice::no_preference;
      if (rec) rec->response(pc);
      e.respond_presented(pc);
      if (!init_captured && !e.in_init()) {
        init_captured = true;
        cell.init_records = e.state().dataset.records();
      }
      const auto& hist = e.state().recommendation_history;
      for (; seen < hist.size(); ++seen) {
        const auto now = std::chrono::steady_clock::now();
        RegretRecord r;
        r.run_id = run;
        r.function = fid;
        r.algorithm = alg;
        r.iteration = hist[seen].iteration;
        r.regret = simple_regret(f, hist[seen]);
        r.recommendation = hist[seen].point;
        if (plan.record_timing) r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - last).count();
        last = now;
        cell.records.push_back(std::move(r));
      }
      if (rec) {
        rec->progress();
        rec->query();
      }
    }
    cell.state = e.state();
  } catch (const std::exception& ex) {
    cell.error = ex.what();
  }
  cell.comparisons = oracle.calls;
  cell.oracle_ties = truth.ties();
  return cell;
}

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  plan.check();
  std::vector<std::tuple<FunctionId, Algorithm, int>> jobs;
  for (FunctionId f : plan.functions)
    for (Algorithm a : plan.algorithms)
      for (int r = 0; r < plan.n_runs; ++r) jobs.emplace_back(f, a, r);

  ExperimentResult result;
  result.cells.resize(jobs.size());
  const auto n = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& [f, a, r] = jobs[static_cast<std::size_t>(i)];
    result.cells[static_cast<std::size_t>(i)] = run_cell(plan, f, a, r);
  }

  for (const auto& c : result.cells) {
    if (c.error) ++result.failed_cells;
    result.records.insert(result.records.end(), c.records.begin(), c.records.end());
  }
  std::sort(result.records.begin(), result.records.end(), [](const RegretRecord& x, const RegretRecord& y) {
    return std::make_tuple(to_string(x.function), to_string(x.algorithm), x.run_id, x.iteration) <
           std::make_tuple(to_string(y.function), to_string(y.algorithm), y.run_id, y.iteration);
  });

  if (!plan.output_path.empty()) {
    write_regret_csv(plan.output_path, result.records);
    const std::string sidecar = plan.output_path + ".errors.csv";
    std::filesystem::remove(sidecar);
    if (result.failed_cells > 0) {
      std::ofstream err(sidecar);
      err << "function,algorithm,run_id,error\n";
      for (const auto& c : result.cells) {
        if (!c.error) continue;
        std::string msg = *c.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << to_string(c.function) << ',' << to_string(c.algorithm) << ',' << c.run_id << ',' << msg << '\n';
      }
    }
  }
  return result;
}

void write_regret_csv(std::ostream& out, const std::vector<RegretRecord>& records) {
  std::size_t d = 0;
  for (const auto& r : records) d = std::max(d, r.recommendation.dim());
  out << "run_id,function,algorithm,iteration,regret,wall_ms";
  for (std::size_t i = 1; i <= d; ++i) out << ",x_" << i;
  out << '\n';
  for (const auto& r : records) {
    out << r.run_id << ',' << to_string(r.function) << ',' << to_string(r.algorithm) << ',' << r.iteration << ','
        << fmt17(r.regret) << ',' << r.wall_ms;
    for (std::size_t i = 0; i < d; ++i) {
      out << ',';
      if (i < r.recommendation.dim()) out << fmt17(r.recommendation.coords[static_cast<Eigen::Index>(i)]);
    }
    out << '\n';
  }
}

void write_regret_csv(const std::string& path, const std::vector<RegretRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  write_regret_csv(out, records);
}

std::vector<SummaryRow> summarize(std::istream& in) {
  std::string line;
  long row = 1;
  if (!std::getline(in, line)) throw ParseError("empty CSV", 1);
  const auto header = split_csv(line);
  const std::vector<std::string> expected{"run_id", "function", "algorithm", "iteration", "regret", "wall_ms"};
  if (header.size() < expected.size() || !std::equal(expected.begin(), expected.end(), header.begin())) {
    throw ParseError("unexpected CSV header", 1);
  }

  std::map<std::tuple<std::string, std::string, int>, std::vector<double>> groups;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() < expected.size()) throw ParseError("row " + std::to_string(row) + ": too few fields", row);
    try {
      std::size_t pos = 0;
      const int iteration = std::stoi(f[3], &pos);
      if (pos != f[3].size()) throw std::invalid_argument("iteration");
      const double regret = std::stod(f[4], &pos);
      if (pos != f[4].size() || !std::isfinite(regret)) throw std::invalid_argument("regret");
      groups[{f[1], f[2], iteration}].push_back(std::log10(std::max(regret, kRegretFloor)));
    } catch (const std::logic_error&) {
      throw ParseError("row " + std::to_string(row) + ": malformed number", row);
    }
  }

  std::vector<SummaryRow> out;
  for (const auto& [key, v] : groups) {
    SummaryRow s;
    s.function = std::get<0>(key);
    s.algorithm = std::get<1>(key);
    s.iteration = std::get<2>(key);
    s.n_runs = static_cast<int>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean_log10_regret = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean_log10_regret) * (x - s.mean_log10_regret);
      s.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    }
    out.push_back(s);
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw NotFoundError("cannot open " + csv_path);
  return summarize(in);
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << "function,algorithm,iteration,n_runs,mean_log10_regret,std_error\n";
  for (const auto& r : rows) {
    out << r.function << ',' << r.algorithm << ',' << r.iteration << ',' << r.n_runs << ','
        << fmt17(r.mean_log10_regret) << ',' << fmt17(r.std_error) << '\n';
  }
}

double mean_regret_at(const std::vector<RegretRecord>& records, FunctionId f, Algorithm a, int iteration) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : records) {
    if (r.function == f && r.algorithm == a && r.iteration == iteration) {
      sum += r.regret;
      ++n;
    }
  }
  if (n == 0) throw NotFoundError("no records for " + to_string(f) + "/" + to_string(a) + " at iteration " + std::to_string(iteration));
  return sum / n;
}

}  // namespace prefopt
