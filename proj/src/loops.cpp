#include "prefopt/loops.hpp"

#include "prefopt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace prefopt {

namespace {

enum : std::uint32_t { kTagLine = 1, kTagPresentation = 2, kTagFallback = 3, kTagInit = 4 };

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), tag};
  return std::mt19937_64(seq);
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::eubo_linecospar: return "eubo_linecospar";
    case Algorithm::bpe4prost: return "bpe4prost";
    case Algorithm::random_pairs: return "random";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "eubo_linecospar") return Algorithm::eubo_linecospar;
  if (s == "bpe4prost") return Algorithm::bpe4prost;
  if (s == "random" || s == "random_pairs") return Algorithm::random_pairs;
  throw ConfigError("unknown algorithm '" + s + "'");
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::none_yet: return "none_yet";
    case StopReason::budget_exhausted: return "budget_exhausted";
    case StopReason::stability: return "stability";
  }
  return "?";
}

StopReason stop_reason_from_string(const std::string& s) {
  if (s == "none_yet") return StopReason::none_yet;
  if (s == "budget_exhausted") return StopReason::budget_exhausted;
  if (s == "stability") return StopReason::stability;
  throw ParseError("unknown stop reason '" + s + "'");
}

std::string to_string(Choice c) {
  switch (c) {
    case Choice::first: return "first";
    case Choice::second: return "second";
    case Choice::no_preference: return "no_preference";
  }
  return "?";
}

std::string to_string(PresentedChoice c) {
  switch (c) {
    case PresentedChoice::A: return "A";
    case PresentedChoice::B: return "B";
    case PresentedChoice::no_preference: return "no_preference";
  }
  return "?";
}

PresentedChoice presented_choice_from_string(const std::string& s) {
  if (s == "A") return PresentedChoice::A;
  if (s == "B") return PresentedChoice::B;
  if (s == "no_preference") return PresentedChoice::no_preference;
  throw ParseError("choice must be A, B or no_preference, got '" + s + "'");
}

std::string to_string(QueryPhase p) {
  switch (p) {
    case QueryPhase::init: return "init";
    case QueryPhase::optimization: return "optimization";
    case QueryPhase::fallback: return "fallback";
  }
  return "?";
}

QueryPhase query_phase_from_string(const std::string& s) {
  if (s == "init") return QueryPhase::init;
  if (s == "optimization") return QueryPhase::optimization;
  if (s == "fallback") return QueryPhase::fallback;
  throw ParseError("unknown query phase '" + s + "'");
}

void LoopConfig::check(const ParameterSpace& space) const {
  if (n_init_pairs < 1) throw ConfigError("n_init_pairs must be positive");
  if (budget < 0) throw ConfigError("budget must be nonnegative");
  if (n_stop < 1) throw ConfigError("n_stop must be positive");
  if (budget > 0 && n_stop > budget) throw ConfigError("n_stop must not exceed the budget");
  if (!(stability_fraction > 0.0 && stability_fraction <= 1.0)) throw ConfigError("stability_fraction must lie in (0, 1]");
  if (refit_every_n < 1) throw ConfigError("refit_every_n must be positive");
  if (algorithm == Algorithm::eubo_linecospar && !space.is_grid()) {
    throw ConfigError("eubo_linecospar needs a grid-mode space");
  }
  if (algorithm != Algorithm::eubo_linecospar && space.is_grid()) {
    throw ConfigError(to_string(algorithm) + " needs a continuous space");
  }
}

LoopConfig LoopConfig::simulation(Algorithm algorithm, std::size_t dim, std::uint64_t seed) {
  LoopConfig c;
  c.algorithm = algorithm;
  c.n_init_pairs = static_cast<int>(2 * dim + 1);
  c.budget = 50;
  c.n_stop = 5;
  c.stability_stop = false;
  c.seeds = LoopSeeds::from(seed);
  return c;
}

ModelConfig ModelConfig::for_algorithm(Algorithm algorithm, std::size_t dim) {
  ModelConfig m;
  if (algorithm == Algorithm::eubo_linecospar) {
    m.kernel = KernelConfig::defaults(KernelFamily::exponential, dim);
    m.likelihood = LikelihoodConfig::probit();
  } else {
    m.kernel = KernelConfig::defaults(KernelFamily::matern52, dim);
    m.likelihood = LikelihoodConfig::logistic();
  }
  return m;
}

AcquisitionConfig acquisition_for(Algorithm algorithm, int bpe4prost_q) {
  AcquisitionConfig a;
  a.q = algorithm == Algorithm::bpe4prost ? bpe4prost_q : 2;
  return a;
}

Eigen::VectorXd random_direction(std::size_t dim, std::uint64_t seed, std::uint64_t stream) {
  auto rng = stream_rng(seed, stream, kTagLine);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

LineSet make_line(const ParameterSpace& space, const Configuration& origin, const Eigen::VectorXd& direction,
                  std::size_t max_nodes) {
  if (!space.is_grid()) throw ContractViolation("make_line needs a grid-mode space");
  if (direction.size() != static_cast<Eigen::Index>(space.dim())) throw ContractViolation("direction has the wrong dimension");
  LineSet line{snap_to_grid(space, origin), direction.normalized(), {}};
  line.nodes.push_back(line.origin);
  const double h = space.grid_step();
  auto inside = [](const Eigen::VectorXd& p) { return (p.array() >= -1e-12).all() && (p.array() <= 1.0 + 1e-12).all(); };
  auto push = [&](const Eigen::VectorXd& p) {
    Configuration node = snap_to_grid(space, Configuration(p));
    for (const auto& n : line.nodes) {
      if (same_point(n, node, 1e-12)) return;
    }
    line.nodes.push_back(std::move(node));
  };
  bool forward = true, backward = true;
  for (int t = 1; (forward || backward) && line.nodes.size() < max_nodes; ++t) {
    if (forward) {
      const Eigen::VectorXd p = line.origin.coords + (t * h) * line.direction;
      if (inside(p)) push(p); else forward = false;
    }
    if (backward && line.nodes.size() < max_nodes) {
      const Eigen::VectorXd p = line.origin.coords - (t * h) * line.direction;
      if (inside(p)) push(p); else backward = false;
    }
  }
  return line;
}

Choice Query::to_algorithm_order(PresentedChoice c) const {
  if (c == PresentedChoice::no_preference) return Choice::no_preference;
  const bool a = c == PresentedChoice::A;
  return (a != swapped) ? Choice::first : Choice::second;
}

Elicitation::Elicitation(ParameterSpace space, LoopConfig cfg, ModelConfig model, AcquisitionConfig acq)
    : space_(std::move(space)), cfg_(cfg), model_(std::move(model)), acq_(acq) {
  cfg_.check(space_);
  acq_.check();
  if (model_.kernel.dim() != space_.dim()) throw ConfigError("kernel dimension differs from the space");
  state_.kernel = model_.kernel;
  start();
}

Elicitation::Elicitation(ParameterSpace space, LoopConfig cfg, ModelConfig model, AcquisitionConfig acq,
                         LoopState resumed)
    : space_(std::move(space)), cfg_(cfg), model_(std::move(model)), acq_(acq), state_(std::move(resumed)) {
  cfg_.check(space_);
  acq_.check();
}

void Elicitation::start() { issue_init_pair(); }

Configuration Elicitation::next_sobol() {
  const auto idx = static_cast<std::size_t>(state_.sobol_cursor++);
  if (cfg_.init_design == InitDesign::uniform && in_init()) {
    return uniform_points(space_, idx + 1, cfg_.seeds.sobol).back();
  }
  return sobol_points(space_, 1, cfg_.seeds.sobol, idx).front();
}

Configuration Elicitation::random_point(int attempt) {
  auto rng = stream_rng(cfg_.seeds.line, static_cast<std::uint64_t>(state_.iteration + 1) * 64u + static_cast<std::uint64_t>(attempt),
                        kTagFallback);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(space_.dim()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = unif(rng);
  Configuration c(std::move(v));
  return space_.is_grid() ? snap_to_grid(space_, c) : c;
}

void Elicitation::issue(Configuration first, Configuration second, QueryPhase phase, int attempt) {
  Query q;
  q.query_id = ++state_.queries_issued;
  auto rng = stream_rng(cfg_.seeds.line, static_cast<std::uint64_t>(q.query_id), kTagPresentation);
  q.swapped = (rng() >> 63) != 0;
  q.first = std::move(first);
  q.second = std::move(second);
  q.phase = phase;
  q.iteration = phase == QueryPhase::init ? 0 : state_.iteration + 1;
  q.attempt = attempt;
  if (phase != QueryPhase::init && !state_.trace.empty()) state_.trace.back().queries.push_back(q);
  state_.pending = std::move(q);
}

void Elicitation::issue_init_pair() {
  Configuration a = next_sobol();
  Configuration b = next_sobol();
  // Snapping can merge two design points on coarse grids.
  for (int guard = 0; same_point(a, b, ComparisonDataset::kDedupTolerance); ++guard) {
    if (guard > 1000) throw NumericalError("cannot draw two distinct initial configurations");
    b = next_sobol();
  }
  issue(std::move(a), std::move(b), QueryPhase::init, 0);
}

void Elicitation::respond_presented(PresentedChoice choice) {
  if (!state_.pending) throw StateError("no pending query");
  respond(state_.pending->to_algorithm_order(choice));
}

void Elicitation::respond(Choice choice) {
  if (!state_.pending) throw StateError("no pending query");
  const Query q = *state_.pending;

  if (q.phase == QueryPhase::init) {
    if (choice == Choice::no_preference) {
      state_.dataset.add_point(q.first);
      state_.dataset.add_point(q.second);
      if (!state_.current_pref) state_.current_pref = q.first;
    } else {
      const Winner w = choice == Choice::first ? Winner::first : Winner::second;
      state_.dataset.add({q.first, q.second, w});
      state_.current_pref = w == Winner::first ? q.first : q.second;
    }
    state_.pending.reset();
    ++state_.init_pairs_done;
    if (in_init()) {
      issue_init_pair();
    } else {
      finish_init();
    }
    return;
  }

  if (!state_.trace.empty()) state_.trace.back().resolved = choice;
  switch (cfg_.algorithm) {
    case Algorithm::eubo_linecospar: {
      if (choice == Choice::no_preference) {
        complete_iteration(std::nullopt);
      } else {
        complete_iteration(choice == Choice::first ? Winner::first : Winner::second);
      }
      return;
    }
    case Algorithm::bpe4prost: {
      if (choice != Choice::no_preference) {
        complete_iteration(choice == Choice::first ? Winner::first : Winner::second);
        return;
      }
      const bool try_third = cfg_.algorithm == Algorithm::bpe4prost && state_.batch.size() >= 3 &&
                             q.phase == QueryPhase::optimization;
      if (try_third && !same_point(state_.batch[0], state_.batch[2], ComparisonDataset::kDedupTolerance)) {
        issue(state_.batch[0], state_.batch[2], QueryPhase::fallback, 0);
        return;
      }
      if (state_.fallback_attempts >= cfg_.max_random_fallbacks) {
        throw StalledUserError("no preference after " + std::to_string(cfg_.max_random_fallbacks) +
                               " random fallback comparisons");
      }
      const int attempt = ++state_.fallback_attempts;
      Configuration r = random_point(attempt);
      issue(state_.batch[0], std::move(r), QueryPhase::fallback, attempt);
      return;
    }
    case Algorithm::random_pairs: {
      if (choice != Choice::no_preference) {
        complete_iteration(choice == Choice::first ? Winner::first : Winner::second);
        return;
      }
      if (state_.fallback_attempts >= cfg_.max_random_fallbacks) {
        throw StalledUserError("no preference after " + std::to_string(cfg_.max_random_fallbacks) + " retries");
      }
      const int attempt = ++state_.fallback_attempts;
      Configuration a = next_sobol();
      Configuration b = next_sobol();
      state_.batch = {a, b};
      issue(std::move(a), std::move(b), QueryPhase::fallback, attempt);
      return;
    }
  }
}

void Elicitation::refit(bool hyperparameters) {
  if (hyperparameters && model_.fit_hyperparameters && !state_.dataset.empty()) {
    HyperparameterOptions opts = model_.hyper;
    opts.seed = cfg_.seeds.mc + static_cast<std::uint64_t>(state_.iteration) * 7919u;
    const HyperparameterFit fit = fit_hyperparameters(state_.dataset, state_.kernel, model_.likelihood, opts);
    if (fit.fell_back_to_prior) ++state_.hyper_fallbacks;
    state_.kernel = fit.kernel;
  }
  posterior_ = fit_laplace(state_.dataset, state_.kernel, model_.likelihood);
}

const LaplacePosterior& Elicitation::posterior() {
  if (!posterior_) posterior_ = fit_laplace(state_.dataset, state_.kernel, model_.likelihood);
  return *posterior_;
}

void Elicitation::finish_init() {
  refit(true);
  if (cfg_.budget == 0) {
    state_.stop_reason = StopReason::budget_exhausted;
    return;
  }
  begin_iteration();
}

void Elicitation::begin_iteration() {
  const int n = state_.iteration + 1;
  const LaplacePosterior& post = posterior();
  AcquisitionConfig acq = acq_;
  acq.seed = cfg_.seeds.mc + static_cast<std::uint64_t>(n);
  state_.fallback_attempts = 0;
  IterationTrace trace;
  trace.iteration = n;

  switch (cfg_.algorithm) {
    case Algorithm::eubo_linecospar: {
      const Configuration pref = *state_.current_pref;
      LineSet line = make_line(space_, pref, random_direction(space_.dim(), cfg_.seeds.line, static_cast<std::uint64_t>(n)));
      std::vector<Configuration> candidates = line.nodes;
      for (const auto& v : state_.dataset.visited()) {
        const bool dup = std::any_of(line.nodes.begin(), line.nodes.end(),
                                     [&](const Configuration& c) { return same_point(c, v, ComparisonDataset::kDedupTolerance); });
        if (!dup) candidates.push_back(v);
      }
      Configuration challenger = maximize_qeubo_discrete(post, candidates, acq, pref);
      state_.batch = {pref, challenger};
      trace.incumbent = pref;
      trace.line = std::move(line);
      trace.candidates = std::move(candidates);
      trace.batch = state_.batch;
      state_.trace.push_back(std::move(trace));
      issue(pref, std::move(challenger), QueryPhase::optimization, 0);
      return;
    }
    case Algorithm::bpe4prost: {
      std::vector<Configuration> batch = maximize_qeubo_continuous(post, space_, acq);
      // Leading candidate first: x1 is the point with the highest posterior mean.
      std::stable_sort(batch.begin(), batch.end(), [&](const Configuration& a, const Configuration& b) {
        return predict_mean(post, a.coords) > predict_mean(post, b.coords);
      });
      state_.batch = batch;
      trace.batch = batch;
      state_.trace.push_back(std::move(trace));
      if (!same_point(batch[0], batch[1], ComparisonDataset::kDedupTolerance)) {
        issue(batch[0], batch[1], QueryPhase::optimization, 0);
      } else if (batch.size() >= 3 && !same_point(batch[0], batch[2], ComparisonDataset::kDedupTolerance)) {
        issue(batch[0], batch[2], QueryPhase::fallback, 0);
      } else {
        const int attempt = ++state_.fallback_attempts;
        issue(batch[0], random_point(attempt), QueryPhase::fallback, attempt);
      }
      return;
    }
    case Algorithm::random_pairs: {
      Configuration a = next_sobol();
      Configuration b = next_sobol();
      state_.batch = {a, b};
      trace.batch = state_.batch;
      state_.trace.push_back(std::move(trace));
      issue(std::move(a), std::move(b), QueryPhase::optimization, 0);
      return;
    }
  }
}

void Elicitation::update_stability(const Configuration& before) {
  if (cfg_.algorithm == Algorithm::eubo_linecospar) {
    state_.stability_count = same_point(before, *state_.current_pref, 1e-12) ? state_.stability_count + 1 : 0;
  } else if (cfg_.algorithm == Algorithm::bpe4prost) {
    // Longest run of recent recommendations whose per-dimension spread stays
    // within the fraction, so every pair in it is within the bound.
    const auto& h = state_.recommendation_history;
    Eigen::VectorXd lo = h.back().point.coords, hi = lo;
    std::size_t start = h.size() - 1;
    while (start > 0) {
      const Eigen::VectorXd& x = h[start - 1].point.coords;
      const Eigen::VectorXd nlo = lo.cwiseMin(x), nhi = hi.cwiseMax(x);
      if ((nhi - nlo).maxCoeff() > cfg_.stability_fraction + 1e-12) break;
      lo = nlo;
      hi = nhi;
      --start;
    }
    state_.stability_reference = h[start].point;
    state_.stability_count = static_cast<int>(h.size() - 1 - start);
  }
}

void Elicitation::complete_iteration(std::optional<Winner> winner) {
  const Query q = *state_.pending;
  state_.pending.reset();
  const Configuration before = state_.current_pref.value_or(Configuration{});
  if (winner) {
    state_.dataset.add({q.first, q.second, *winner});
    if (cfg_.algorithm == Algorithm::eubo_linecospar) {
      state_.current_pref = *winner == Winner::first ? q.first : q.second;
    }
  }
  ++state_.iteration;
  refit(state_.iteration % cfg_.refit_every_n == 0);
  const LaplacePosterior& post = posterior();

  Recommendation rec;
  if (cfg_.algorithm == Algorithm::eubo_linecospar) {
    rec.point = *state_.current_pref;
    rec.posterior_mean = predict_mean(post, rec.point.coords);
    rec.iteration = state_.iteration;
    state_.incumbent_history.push_back(*state_.current_pref);
  } else {
    RecommendOptions opts;
    opts.seed = cfg_.seeds.mc + static_cast<std::uint64_t>(state_.iteration) * 31u;
    rec = recommend(post, space_, RecommendScope::continuous, opts, state_.iteration);
  }
  state_.recommendation_history.push_back(rec);
  update_stability(before);

  if (cfg_.stability_stop && cfg_.algorithm != Algorithm::random_pairs && state_.stability_count >= cfg_.n_stop) {
    state_.stop_reason = StopReason::stability;
  } else if (state_.iteration >= cfg_.budget) {
    state_.stop_reason = StopReason::budget_exhausted;
  } else {
    begin_iteration();
  }
}

std::optional<Recommendation> Elicitation::final_recommendation() const {
  if (state_.recommendation_history.empty()) return std::nullopt;
  return state_.recommendation_history.back();
}

Choice ask(PreferenceOracle& oracle, const Query& q) {
  const Choice presented = oracle.answer(q.option_a(), q.option_b());
  const PresentedChoice pc = presented == Choice::first    ? PresentedChoice::A
                             : presented == Choice::second ? PresentedChoice::B
                                                           : PresentedChoice::no_preference;
  return q.to_algorithm_order(pc);
}

namespace {

void drive(Elicitation& e, PreferenceOracle& oracle, const std::function<bool()>& until) {
  while (!e.finished() && e.pending() && !until()) e.respond(ask(oracle, *e.pending()));
}

LoopState step_as(Algorithm expected, LoopState state, const ParameterSpace& space, const LoopConfig& cfg,
                  const ModelConfig& model, const AcquisitionConfig& acq, PreferenceOracle& oracle) {
  if (cfg.algorithm != expected) throw ConfigError("loop configured for " + to_string(cfg.algorithm));
  Elicitation e(space, cfg, model, acq, std::move(state));
  const int target = e.state().iteration + 1;
  drive(e, oracle, [&] { return e.state().iteration >= target; });
  return e.state();
}

}  // namespace

LoopState init_phase(const ParameterSpace& space, const LoopConfig& cfg, const ModelConfig& model,
                     const AcquisitionConfig& acq, PreferenceOracle& oracle) {
  Elicitation e(space, cfg, model, acq);
  drive(e, oracle, [&] { return !e.in_init(); });
  return e.state();
}

LoopState step_linecospar(LoopState state, const ParameterSpace& space, const LoopConfig& cfg,
                          const ModelConfig& model, const AcquisitionConfig& acq, PreferenceOracle& oracle) {
  return step_as(Algorithm::eubo_linecospar, std::move(state), space, cfg, model, acq, oracle);
}

LoopState step_bpe4prost(LoopState state, const ParameterSpace& space, const LoopConfig& cfg,
                         const ModelConfig& model, const AcquisitionConfig& acq, PreferenceOracle& oracle) {
  return step_as(Algorithm::bpe4prost, std::move(state), space, cfg, model, acq, oracle);
}

LoopState step_random(LoopState state, const ParameterSpace& space, const LoopConfig& cfg,
                      const ModelConfig& model, const AcquisitionConfig& acq, PreferenceOracle& oracle) {
  return step_as(Algorithm::random_pairs, std::move(state), space, cfg, model, acq, oracle);
}

LoopState run(const ParameterSpace& space, const LoopConfig& cfg, const ModelConfig& model,
              const AcquisitionConfig& acq, PreferenceOracle& oracle) {
  Elicitation e(space, cfg, model, acq);
  drive(e, oracle, [] { return false; });
  return e.state();
}

}  // namespace prefopt
