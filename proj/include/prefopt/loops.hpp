#pragma once

#include "prefopt/acquisition.hpp"
#include "prefopt/hyperparameters.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace prefopt {

enum class Algorithm { eubo_linecospar, bpe4prost, random_pairs };
enum class StopReason { none_yet, budget_exhausted, stability };
/// Answer in algorithm order (first = x1 / incumbent).
enum class Choice { first, second, no_preference };
/// Answer in presentation order.
enum class PresentedChoice { A, B, no_preference };
enum class InitDesign { sobol, uniform };
enum class QueryPhase { init, optimization, fallback };

std::string to_string(Algorithm a);
std::string to_string(StopReason r);
std::string to_string(Choice c);
std::string to_string(PresentedChoice c);
std::string to_string(QueryPhase p);
Algorithm algorithm_from_string(const std::string& s);
StopReason stop_reason_from_string(const std::string& s);
PresentedChoice presented_choice_from_string(const std::string& s);
QueryPhase query_phase_from_string(const std::string& s);

struct LoopSeeds {
  std::uint64_t sobol = 0;
  std::uint64_t mc = 0;
  std::uint64_t line = 0;

  static LoopSeeds from(std::uint64_t seed) { return {seed, seed + 1000003u, seed + 2000003u}; }
};

struct LoopConfig {
  Algorithm algorithm = Algorithm::bpe4prost;
  int n_init_pairs = 5;
  int budget = 50;
  int n_stop = 5;
  double stability_fraction = 0.10;
  int refit_every_n = 1;
  bool stability_stop = true;
  InitDesign init_design = InitDesign::sobol;
  int max_random_fallbacks = 10;
  LoopSeeds seeds;

  void check(const ParameterSpace& space) const;

  /// Benchmark protocol: 2d+1 initial pairs, 50 queries, no early stop.
  static LoopConfig simulation(Algorithm algorithm, std::size_t dim, std::uint64_t seed);
};

struct ModelConfig {
  KernelConfig kernel;
  LikelihoodConfig likelihood;
  HyperparameterOptions hyper;
  bool fit_hyperparameters = true;

  /// Exponential kernel + probit for EUBO-LineCoSpar, Matern 5/2 + logistic otherwise.
  static ModelConfig for_algorithm(Algorithm algorithm, std::size_t dim);
};

/// Acquisition defaults for an algorithm: q = 2 for the line search and the
/// random baseline; `bpe4prost_q` (3 for live sessions, 2 in simulation) otherwise.
AcquisitionConfig acquisition_for(Algorithm algorithm, int bpe4prost_q);

struct LineSet {
  Configuration origin;
  Eigen::VectorXd direction;
  std::vector<Configuration> nodes;
};

inline constexpr std::size_t kMaxLineNodes = 200;

/// Grid nodes along a line through `origin` with the given unit direction,
/// stepping at the grid spacing both ways, nearest nodes first.
LineSet make_line(const ParameterSpace& space, const Configuration& origin, const Eigen::VectorXd& direction,
                  std::size_t max_nodes = kMaxLineNodes);
Eigen::VectorXd random_direction(std::size_t dim, std::uint64_t seed, std::uint64_t stream);

struct Query {
  std::int64_t query_id = 0;
  Configuration first;
  Configuration second;
  bool swapped = false;  // true: option A shows `second`
  QueryPhase phase = QueryPhase::init;
  int iteration = 0;     // 0 during initialization
  int attempt = 0;

  const Configuration& option_a() const { return swapped ? second : first; }
  const Configuration& option_b() const { return swapped ? first : second; }
  Choice to_algorithm_order(PresentedChoice c) const;
};

struct IterationTrace {
  int iteration = 0;
  std::optional<Configuration> incumbent;
  std::optional<LineSet> line;
  std::vector<Configuration> candidates;
  std::vector<Configuration> batch;
  std::vector<Query> queries;
  Choice resolved = Choice::no_preference;
};

struct LoopState {
  ComparisonDataset dataset;
  int init_pairs_done = 0;
  int iteration = 0;  // completed optimization iterations
  std::optional<Configuration> current_pref;
  std::vector<Configuration> incumbent_history;  // EUBO-LineCoSpar only
  std::vector<Recommendation> recommendation_history;
  StopReason stop_reason = StopReason::none_yet;
  int stability_count = 0;
  std::optional<Configuration> stability_reference;
  KernelConfig kernel;
  int hyper_fallbacks = 0;

  // Random-number bookkeeping. Every random draw is a pure function of the
  // seeds and these counters, so they are the whole RNG state.
  std::int64_t sobol_cursor = 0;
  std::int64_t queries_issued = 0;

  // In-flight iteration.
  std::vector<Configuration> batch;
  int fallback_attempts = 0;
  std::optional<Query> pending;

  std::vector<IterationTrace> trace;  // diagnostics; not serialized
};

class PreferenceOracle {
 public:
  virtual ~PreferenceOracle() = default;
  /// Which of the two shown options is preferred (first = `a`).
  virtual Choice answer(const Configuration& a, const Configuration& b) = 0;
};

/// Resumable elicitation run. Queries are issued one at a time through
/// pending(); respond() feeds the answer back and advances the loop as far as
/// it can go without another answer.
class Elicitation {
 public:
  Elicitation(ParameterSpace space, LoopConfig cfg, ModelConfig model, AcquisitionConfig acq);
  Elicitation(ParameterSpace space, LoopConfig cfg, ModelConfig model, AcquisitionConfig acq, LoopState resumed);

  const std::optional<Query>& pending() const { return state_.pending; }
  bool finished() const { return state_.stop_reason != StopReason::none_yet; }
  bool in_init() const { return state_.init_pairs_done < cfg_.n_init_pairs; }

  void respond(Choice choice);
  void respond_presented(PresentedChoice choice);

  const LoopState& state() const { return state_; }
  const ParameterSpace& space() const { return space_; }
  const LoopConfig& config() const { return cfg_; }
  const ModelConfig& model() const { return model_; }
  const AcquisitionConfig& acquisition() const { return acq_; }
  /// Final estimate: the incumbent for EUBO-LineCoSpar, the last
  /// posterior-mean maximizer otherwise.
  std::optional<Recommendation> final_recommendation() const;
  const LaplacePosterior& posterior();

 private:
  void start();
  void issue(Configuration first, Configuration second, QueryPhase phase, int attempt);
  void issue_init_pair();
  void finish_init();
  void begin_iteration();
  void complete_iteration(std::optional<Winner> winner);
  void refit(bool hyperparameters);
  Configuration next_sobol();
  Configuration random_point(int attempt);
  void update_stability(const Configuration& before);

  ParameterSpace space_;
  LoopConfig cfg_;
  ModelConfig model_;
  AcquisitionConfig acq_;
  LoopState state_;
  std::optional<LaplacePosterior> posterior_;
};

/// Drives one presented query through an oracle and returns the answer in
/// algorithm order.
Choice ask(PreferenceOracle& oracle, const Query& q);

LoopState init_phase(const ParameterSpace& space, const LoopConfig& cfg, const ModelConfig& model,
                     const AcquisitionConfig& acq, PreferenceOracle& oracle);
LoopState step_linecospar(LoopState state, const ParameterSpace& space, const LoopConfig& cfg,
                          const ModelConfig& model, const AcquisitionConfig& acq, PreferenceOracle& oracle);
LoopState step_bpe4prost(LoopState state, const ParameterSpace& space, const LoopConfig& cfg,
                         const ModelConfig& model, const AcquisitionConfig& acq, PreferenceOracle& oracle);
LoopState step_random(LoopState state, const ParameterSpace& space, const LoopConfig& cfg,
                      const ModelConfig& model, const AcquisitionConfig& acq, PreferenceOracle& oracle);
LoopState run(const ParameterSpace& space, const LoopConfig& cfg, const ModelConfig& model,
              const AcquisitionConfig& acq, PreferenceOracle& oracle);

// Serialization (structured text, doubles round-trip exactly).
nlohmann::json to_json(const LoopConfig& cfg);
LoopConfig loop_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const KernelConfig& k);
KernelConfig kernel_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AcquisitionConfig& a);
AcquisitionConfig acquisition_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Query& q);
Query query_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Recommendation& r);
Recommendation recommendation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LoopState& s);
LoopState loop_state_from_json(const nlohmann::json& j);

}  // namespace prefopt
