#include "prefopt/errors.hpp"
#include "prefopt/loops.hpp"

#include <doctest.h>

#include <cmath>

using namespace prefopt;

namespace {

// Smooth bump with its peak at (0.7, 0.3, ...).
double bump(const Configuration& x) {
  double s = 0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    const double c = i % 2 ? 0.3 : 0.7;
    s += (x[i] - c) * (x[i] - c);
  }
  return -s;
}

class BumpOracle : public PreferenceOracle {
 public:
  Choice answer(const Configuration& a, const Configuration& b) override {
    ++calls;
    return bump(a) >= bump(b) ? Choice::first : Choice::second;
  }
  int calls = 0;
};

AcquisitionConfig fast_acq(Algorithm alg, int q) {
  auto a = acquisition_for(alg, q);
  a.raw_candidates = 64;
  a.restarts = 3;
  a.mc_samples = 256;
  return a;
}

LoopConfig small_cfg(Algorithm alg, std::size_t dim, std::uint64_t seed, int budget) {
  auto c = LoopConfig::simulation(alg, dim, seed);
  c.budget = budget;
  c.n_stop = std::min(c.n_stop, std::max(budget, 1));
  return c;
}

ParameterSpace space_for(Algorithm alg, std::size_t dim) {
  return alg == Algorithm::eubo_linecospar ? ParameterSpace::unit_cube(dim, SpaceMode::grid, 21)
                                           : ParameterSpace::unit_cube(dim);
}

Elicitation make(Algorithm alg, std::size_t dim, std::uint64_t seed, int budget, int q = 2) {
  return Elicitation(space_for(alg, dim), small_cfg(alg, dim, seed, budget), ModelConfig::for_algorithm(alg, dim),
                     fast_acq(alg, q));
}

void finish_init(Elicitation& e) {
  while (e.in_init()) e.respond(bump(e.pending()->first) >= bump(e.pending()->second) ? Choice::first : Choice::second);
}

bool in_list(const Configuration& x, const std::vector<Configuration>& v) {
  for (const auto& y : v) {
    if (same_point(x, y)) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("initialization uses 2d+1 pairs then the budget") {
  for (std::size_t d : {2u, 4u}) {
    const auto cfg = LoopConfig::simulation(Algorithm::random_pairs, d, 3);
    CHECK(cfg.n_init_pairs == static_cast<int>(2 * d + 1));
    CHECK(cfg.budget == 50);
  }
  BumpOracle oracle;
  const auto space = ParameterSpace::unit_cube(2);
  auto cfg = small_cfg(Algorithm::random_pairs, 2, 5, 6);
  const auto state = run(space, cfg, ModelConfig::for_algorithm(Algorithm::random_pairs, 2), fast_acq(Algorithm::random_pairs, 2), oracle);
  CHECK(state.dataset.size() == 5 + 6);
  CHECK(oracle.calls == 11);
  CHECK(state.iteration == 6);
  CHECK(state.recommendation_history.size() == 6);
  CHECK(state.stop_reason == StopReason::budget_exhausted);

  cfg.budget = 0;
  BumpOracle o2;
  const auto only_init = run(space, cfg, ModelConfig::for_algorithm(Algorithm::random_pairs, 2), fast_acq(Algorithm::random_pairs, 2), o2);
  CHECK(only_init.stop_reason == StopReason::budget_exhausted);
  CHECK(only_init.dataset.size() == 5);
  CHECK(only_init.recommendation_history.empty());
}

TEST_CASE("initial designs are shared across algorithms") {
  std::vector<std::vector<ComparisonRecord>> per_alg;
  for (auto alg : {Algorithm::bpe4prost, Algorithm::random_pairs}) {
    BumpOracle oracle;
    const auto s = init_phase(space_for(alg, 2), small_cfg(alg, 2, 42, 5), ModelConfig::for_algorithm(alg, 2), fast_acq(alg, 2), oracle);
    per_alg.push_back(s.dataset.records());
  }
  REQUIRE(per_alg[0].size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(same_point(per_alg[0][i].first, per_alg[1][i].first, 0.0));
    CHECK(same_point(per_alg[0][i].second, per_alg[1][i].second, 0.0));
  }
  // The grid variant sees the same design after snapping.
  BumpOracle oracle;
  const auto grid = init_phase(space_for(Algorithm::eubo_linecospar, 2), small_cfg(Algorithm::eubo_linecospar, 2, 42, 5),
                               ModelConfig::for_algorithm(Algorithm::eubo_linecospar, 2), fast_acq(Algorithm::eubo_linecospar, 2), oracle);
  const auto gs = space_for(Algorithm::eubo_linecospar, 2);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(same_point(grid.dataset.records()[i].first, snap_to_grid(gs, per_alg[0][i].first)));
  }
}

TEST_CASE("line search challengers come from the line or the visited set") {
  auto e = make(Algorithm::eubo_linecospar, 2, 11, 12);
  finish_init(e);
  while (!e.finished()) {
    const auto& tr = e.state().trace.back();
    const auto visited = e.state().dataset.visited();
    REQUIRE(tr.line);
    CHECK(same_point(tr.line->origin, *e.state().current_pref));
    CHECK(same_point(*tr.incumbent, *e.state().current_pref));
    CHECK(tr.line->nodes.size() <= kMaxLineNodes);
    for (const auto& n : tr.line->nodes) CHECK_NOTHROW(validate(e.space(), n));
    const auto& q = *e.pending();
    CHECK(same_point(q.first, *e.state().current_pref));
    CHECK((in_list(q.second, tr.line->nodes) || in_list(q.second, visited)));
    CHECK_FALSE(same_point(q.first, q.second));
    e.respond(bump(q.first) >= bump(q.second) ? Choice::first : Choice::second);
  }
  CHECK(e.state().iteration == 12);
}

TEST_CASE("line search incumbent retention") {
  auto e = make(Algorithm::eubo_linecospar, 2, 12, 10);
  finish_init(e);
  const auto records_before = e.state().dataset.size();

  // Incumbent wins: kept, one record.
  const Configuration pref0 = *e.state().current_pref;
  e.respond(Choice::first);
  CHECK(same_point(*e.state().current_pref, pref0));
  CHECK(e.state().dataset.size() == records_before + 1);
  CHECK(same_point(e.state().recommendation_history.back().point, pref0));

  // No preference: kept, no record.
  e.respond(Choice::no_preference);
  CHECK(same_point(*e.state().current_pref, pref0));
  CHECK(e.state().dataset.size() == records_before + 1);
  CHECK(e.state().iteration == 2);

  // Challenger wins: becomes the incumbent.
  const Configuration challenger = e.pending()->second;
  e.respond(Choice::second);
  CHECK(same_point(*e.state().current_pref, challenger));
  CHECK(same_point(e.state().recommendation_history.back().point, challenger));
  CHECK(same_point(e.pending()->first, challenger));
  CHECK(e.state().incumbent_history.size() == 3);
}

TEST_CASE("line search stability stop fires exactly at n_stop") {
  auto space = space_for(Algorithm::eubo_linecospar, 2);
  auto cfg = small_cfg(Algorithm::eubo_linecospar, 2, 13, 20);
  cfg.stability_stop = true;
  cfg.n_stop = 3;
  Elicitation e(space, cfg, ModelConfig::for_algorithm(Algorithm::eubo_linecospar, 2), fast_acq(Algorithm::eubo_linecospar, 2));
  finish_init(e);
  // One change first, then the incumbent keeps winning.
  e.respond(Choice::second);
  CHECK(e.state().stability_count == 0);
  for (int i = 1; i <= 3; ++i) {
    REQUIRE_FALSE(e.finished());
    e.respond(Choice::first);
    CHECK(e.state().stability_count == i);
  }
  CHECK(e.finished());
  CHECK(e.state().stop_reason == StopReason::stability);
  CHECK(e.state().iteration == 4);
  const auto& h = e.state().recommendation_history;
  for (std::size_t i = h.size() - 3; i < h.size(); ++i) CHECK(same_point(h[i].point, h.back().point, 0.0));
}

TEST_CASE("continuous stability stop matches an independent streak count") {
  auto space = ParameterSpace::unit_cube(2);
  auto cfg = small_cfg(Algorithm::bpe4prost, 2, 14, 40);
  cfg.stability_stop = true;
  cfg.n_stop = 3;
  BumpOracle oracle;
  const auto s = run(space, cfg, ModelConfig::for_algorithm(Algorithm::bpe4prost, 2), fast_acq(Algorithm::bpe4prost, 2), oracle);
  const auto& h = s.recommendation_history;
  // Independent count: longest trailing run ending at i with all pairs within 0.1.
  auto streak = [&](std::size_t i) {
    int len = 1;
    for (std::size_t j = i; j-- > 0;) {
      bool ok = true;
      for (std::size_t k = j + 1; k <= i; ++k) ok = ok && (h[j].point.coords - h[k].point.coords).cwiseAbs().maxCoeff() <= 0.1;
      if (!ok) break;
      ++len;
    }
    return len - 1;
  };
  int stop_at = -1;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (streak(i) >= 3) {
      stop_at = static_cast<int>(i) + 1;
      break;
    }
  }
  if (stop_at > 0) {
    CHECK(s.stop_reason == StopReason::stability);
    CHECK(s.iteration == stop_at);
    for (std::size_t i = h.size() - 4; i < h.size(); ++i) {
      for (std::size_t j = h.size() - 4; j < h.size(); ++j) {
        CHECK((h[i].point.coords - h[j].point.coords).cwiseAbs().maxCoeff() <= 0.1 + 1e-12);
      }
    }
  } else {
    CHECK(s.stop_reason == StopReason::budget_exhausted);
    CHECK(s.iteration == 40);
  }
}

TEST_CASE("fallback chain: x1 vs x2, x1 vs x3, then x1 vs random") {
  auto e = make(Algorithm::bpe4prost, 2, 15, 10, 3);
  finish_init(e);
  const auto batch = e.state().batch;
  REQUIRE(batch.size() == 3);
  auto q = *e.pending();
  CHECK(q.phase == QueryPhase::optimization);
  CHECK(same_point(q.first, batch[0], 0.0));
  CHECK(same_point(q.second, batch[1], 0.0));

  e.respond(Choice::no_preference);
  q = *e.pending();
  CHECK(q.phase == QueryPhase::fallback);
  CHECK(q.attempt == 0);
  CHECK(same_point(q.first, batch[0], 0.0));
  CHECK(same_point(q.second, batch[2], 0.0));

  std::vector<Configuration> randoms;
  for (int k = 1; k <= 10; ++k) {
    e.respond(Choice::no_preference);
    q = *e.pending();
    CHECK(q.phase == QueryPhase::fallback);
    CHECK(q.attempt == k);
    CHECK(same_point(q.first, batch[0], 0.0));
    CHECK_FALSE(in_list(q.second, batch));
    CHECK_NOTHROW(validate(e.space(), q.second));
    randoms.push_back(q.second);
  }
  CHECK(e.state().dataset.size() == 5);
  const auto pending_before = e.pending()->query_id;
  CHECK_THROWS_AS(e.respond(Choice::no_preference), StalledUserError);
  CHECK(e.pending()->query_id == pending_before);
  CHECK(e.state().dataset.size() == 5);

  // An answer after the stall still resolves the iteration against x1.
  e.respond(Choice::second);
  CHECK(e.state().iteration == 1);
  const auto& rec = e.state().dataset.records().back();
  CHECK(same_point(rec.first, batch[0], 0.0));
  CHECK(same_point(rec.second, randoms.back(), 0.0));
  CHECK(rec.winner == Winner::second);
}

TEST_CASE("q=2 batches skip straight to random fallbacks") {
  auto e = make(Algorithm::bpe4prost, 2, 16, 5, 2);
  finish_init(e);
  const auto batch = e.state().batch;
  REQUIRE(batch.size() == 2);
  e.respond(Choice::no_preference);
  CHECK(e.pending()->attempt == 1);
  CHECK(same_point(e.pending()->first, batch[0], 0.0));
}

TEST_CASE("x1 has the highest posterior mean in the batch and leads every record") {
  auto e = make(Algorithm::bpe4prost, 2, 17, 6, 3);
  finish_init(e);
  while (!e.finished()) {
    const auto batch = e.state().batch;
    const auto& post = e.posterior();
    for (const auto& b : batch) CHECK(predict_mean(post, batch[0].coords) >= predict_mean(post, b.coords));
    const auto before = e.state().dataset.size();
    const auto q = *e.pending();
    e.respond(bump(q.first) >= bump(q.second) ? Choice::first : Choice::second);
    CHECK(e.state().dataset.size() == before + 1);
    CHECK(same_point(e.state().dataset.records().back().first, batch[0], 0.0));
  }
}

TEST_CASE("random baseline ignores the answers") {
  auto a = make(Algorithm::random_pairs, 2, 18, 6);
  auto b = make(Algorithm::random_pairs, 2, 18, 6);
  while (!a.finished()) {
    const auto qa = *a.pending();
    const auto qb = *b.pending();
    CHECK(same_point(qa.first, qb.first, 0.0));
    CHECK(same_point(qa.second, qb.second, 0.0));
    a.respond(Choice::first);
    b.respond(Choice::second);
  }
  CHECK(a.state().dataset.size() == 5 + 6);
}

TEST_CASE("presentation order is resolved back to algorithm order") {
  auto e = make(Algorithm::random_pairs, 2, 19, 20);
  int swapped = 0, total = 0;
  while (!e.finished()) {
    const auto q = *e.pending();
    swapped += q.swapped;
    ++total;
    const auto before = e.state().dataset.size();
    e.respond_presented(PresentedChoice::A);
    const auto& r = e.state().dataset.records()[before];
    CHECK(same_point(r.winning(), q.option_a(), 0.0));
    CHECK(same_point(r.first, q.first, 0.0));
  }
  CHECK(swapped > 0);
  CHECK(swapped < total);
}

TEST_CASE("trajectories are deterministic and resume exactly") {
  for (auto alg : {Algorithm::eubo_linecospar, Algorithm::bpe4prost, Algorithm::random_pairs}) {
    const auto space = space_for(alg, 2);
    const auto cfg = small_cfg(alg, 2, 20, 8);
    const auto model = ModelConfig::for_algorithm(alg, 2);
    const auto acq = fast_acq(alg, 2);
    BumpOracle o1, o2, o3;
    const auto full = run(space, cfg, model, acq, o1);
    const auto again = run(space, cfg, model, acq, o2);
    CHECK(nlohmann::json(to_json(full)).dump() == nlohmann::json(to_json(again)).dump());

    // Interrupt after three optimization steps, round-trip through text, continue.
    LoopState s = init_phase(space, cfg, model, acq, o3);
    if (alg == Algorithm::eubo_linecospar) {
      for (int i = 0; i < 3; ++i) s = step_linecospar(s, space, cfg, model, acq, o3);
    } else if (alg == Algorithm::bpe4prost) {
      for (int i = 0; i < 3; ++i) s = step_bpe4prost(s, space, cfg, model, acq, o3);
    } else {
      for (int i = 0; i < 3; ++i) s = step_random(s, space, cfg, model, acq, o3);
    }
    CHECK(s.iteration == 3);
    const LoopState restored = loop_state_from_json(nlohmann::json::parse(to_json(s).dump()));
    Elicitation e(space, cfg, model, acq, restored);
    while (!e.finished()) e.respond(ask(o3, *e.pending()));
    REQUIRE(e.final_recommendation());
    CHECK(same_point(e.final_recommendation()->point, full.recommendation_history.back().point, 0.0));
    CHECK(e.state().dataset.size() == full.dataset.size());
    CHECK(to_json(e.state()).dump() == to_json(full).dump());
  }
}

TEST_CASE("step functions check the algorithm") {
  const auto space = ParameterSpace::unit_cube(2);
  BumpOracle o;
  const auto cfg = small_cfg(Algorithm::random_pairs, 2, 1, 3);
  const auto model = ModelConfig::for_algorithm(Algorithm::random_pairs, 2);
  auto s = init_phase(space, cfg, model, fast_acq(Algorithm::random_pairs, 2), o);
  CHECK_THROWS_AS(step_bpe4prost(s, space, cfg, model, fast_acq(Algorithm::random_pairs, 2), o), ConfigError);
  s = step_random(s, space, cfg, model, fast_acq(Algorithm::random_pairs, 2), o);
  CHECK(s.dataset.size() == 6);
}

TEST_CASE("configuration checks") {
  const auto grid = ParameterSpace::unit_cube(2, SpaceMode::grid, 11);
  const auto cont = ParameterSpace::unit_cube(2);
  CHECK_THROWS_AS(LoopConfig::simulation(Algorithm::eubo_linecospar, 2, 1).check(cont), ConfigError);
  CHECK_THROWS_AS(LoopConfig::simulation(Algorithm::bpe4prost, 2, 1).check(grid), ConfigError);
  auto c = LoopConfig::simulation(Algorithm::bpe4prost, 2, 1);
  c.n_init_pairs = 0;
  CHECK_THROWS_AS(c.check(cont), ConfigError);
  CHECK(algorithm_from_string("random") == Algorithm::random_pairs);
  CHECK_THROWS_AS(algorithm_from_string("cospar"), ConfigError);
  const auto m = ModelConfig::for_algorithm(Algorithm::eubo_linecospar, 3);
  CHECK(m.kernel.family == KernelFamily::exponential);
  CHECK(m.likelihood.family == LikelihoodFamily::probit);
  CHECK(acquisition_for(Algorithm::bpe4prost, 3).q == 3);
  CHECK(acquisition_for(Algorithm::eubo_linecospar, 3).q == 2);
}

TEST_CASE("lines step at the grid spacing and stay on the grid") {
  const auto space = ParameterSpace::unit_cube(3, SpaceMode::grid, 11);
  Eigen::VectorXd dir(3);
  dir << 1.0, 0.0, 0.0;
  const auto line = make_line(space, Configuration{0.5, 0.2, 0.9}, dir);
  CHECK(line.nodes.size() == 11);
  for (const auto& n : line.nodes) {
    CHECK(n[1] == doctest::Approx(0.2));
    CHECK(n[2] == doctest::Approx(0.9));
  }
  const auto diag = make_line(space, Configuration{0.0, 0.0, 0.0}, random_direction(3, 7, 1), 5);
  CHECK(diag.nodes.size() <= 5);
  CHECK(random_direction(4, 7, 2).norm() == doctest::Approx(1.0));
  CHECK((random_direction(4, 7, 2) - random_direction(4, 7, 2)).norm() == 0.0);
}
