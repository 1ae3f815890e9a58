#include "prefopt/benchmarks.hpp"
#include "prefopt/errors.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace prefopt;
using prefopt::testing::nelder_mead_max;


TEST_CASE("origin anchors") {
  const BenchmarkFunction ackley(FunctionId::ackley4), alpine(FunctionId::alpine1_4);
  CHECK(ackley.evaluate(Configuration{0.5, 0.5, 0.5, 0.5}) == 0.0);
  CHECK(alpine.evaluate(Configuration{0.0, 0.0, 0.0, 0.0}) == 0.0);
  CHECK(ackley.known_max() == 0.0);
  CHECK(alpine.known_max() == 0.0);
  CHECK(simple_regret(ackley, Configuration{0.5, 0.5, 0.5, 0.5}) == 0.0);
}

TEST_CASE("Branin maximum against random search") {
  const BenchmarkFunction f(FunctionId::branin2);
  REQUIRE(f.known_max());
  const double km = *f.known_max();
  CHECK(std::abs(km - (-0.397887)) < 1e-5);

  std::mt19937_64 rng(1234567);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<double, Eigen::VectorXd>> best;
  for (int i = 0; i < 1000000; ++i) {
    Eigen::VectorXd x(2);
    x << u(rng), u(rng);
    const double v = f.evaluate(Configuration(x));
    if (best.size() < 10 || v > best.back().first) {
      best.emplace_back(v, x);
      std::sort(best.begin(), best.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      if (best.size() > 10) best.pop_back();
    }
  }
  const double raw = best.front().first;
  CHECK(raw <= km + 1e-12);
  CHECK(km - raw < 1e-3);
  double polished = raw;
  for (const auto& [v, x] : best) {
    polished = std::max(polished, nelder_mead_max([&](const Eigen::VectorXd& p) { return f.evaluate(Configuration(p)); }, x, 1e-3, 400));
  }
  MESSAGE("Branin: registry " << km << ", random search " << raw << ", polished " << polished);
  CHECK(std::abs(polished - km) < 1e-5);
  // Three published minimizers give the same value.
  CHECK(f.evaluate_native(Eigen::Vector2d(-std::numbers::pi, 12.275)) == doctest::Approx(km).epsilon(1e-6));
  CHECK(f.evaluate_native(Eigen::Vector2d(std::numbers::pi, 2.275)) == doctest::Approx(km).epsilon(1e-6));
  CHECK(f.evaluate_native(Eigen::Vector2d(9.42478, 2.475)) == doctest::Approx(km).epsilon(1e-6));
}

TEST_CASE("Hartmann-4 maximum against Nelder-Mead") {
  const BenchmarkFunction f(FunctionId::hartmann4);
  REQUIRE(f.known_max());
  const double km = *f.known_max();
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double best = -1e300;
  for (int s = 0; s < 300; ++s) {
    Eigen::VectorXd x(4);
    for (int i = 0; i < 4; ++i) x[i] = u(rng);
    best = std::max(best, nelder_mead_max([&](const Eigen::VectorXd& p) { return f.evaluate(Configuration(p)); }, x, 0.1, 800));
  }
  MESSAGE("Hartmann-4: registry " << km << ", Nelder-Mead " << best);
  CHECK(std::abs(best - km) < 1e-6);
  CHECK(std::abs(hartmann4_multistart_max(10000) - km) == 0.0);
  CHECK(f.known_max_source().find("10^4") != std::string::npos);
}

TEST_CASE("utilities are finite across the cube") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto id : all_functions()) {
    const BenchmarkFunction f(id);
    CHECK(f.space().dim() == f.dim());
    for (int i = 0; i < 2000; ++i) {
      Eigen::VectorXd x(static_cast<Eigen::Index>(f.dim()));
      for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = i < 2 ? double(i) : u(rng);
      const double v = f.evaluate(Configuration(x));
      CHECK(std::isfinite(v));
      CHECK(v <= *f.known_max() + 1e-9);
      CHECK(simple_regret(f, Configuration(x)) >= 0.0);
    }
    CHECK(function_from_string(to_string(id)) == id);
  }
  CHECK_THROWS_AS(function_from_string("rosenbrock"), ConfigError);
}

TEST_CASE("simulated oracle is consistent") {
  const BenchmarkFunction f(FunctionId::ackley4);
  auto oracle = simulated_oracle(f);
  CHECK(oracle.answer(Configuration{0.5, 0.5, 0.5, 0.5}, Configuration{0.6, 0.5, 0.5, 0.5}) == Choice::first);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto point = [&] { return Configuration{u(rng), u(rng), u(rng), u(rng)}; };
  for (int i = 0; i < 10000; ++i) {
    const auto a = point(), b = point();
    const auto ab = oracle.answer(a, b), ba = oracle.answer(b, a);
    CHECK(ab != ba);
    CHECK((ab == Choice::first) == (f.evaluate(a) > f.evaluate(b)));
  }
  CHECK(oracle.ties() == 0);
  // Transitivity on a small set.
  std::vector<Configuration> pts;
  for (int i = 0; i < 12; ++i) pts.push_back(point());
  for (const auto& a : pts)
    for (const auto& b : pts)
      for (const auto& c : pts) {
        if (oracle.answer(a, b) == Choice::first && oracle.answer(b, c) == Choice::first && !same_point(a, c)) {
          CHECK(oracle.answer(a, c) == Choice::first);
        }
      }
  const auto x = point();
  const auto before = oracle.ties();
  CHECK(oracle.answer(x, x) == Choice::first);
  CHECK(oracle.ties() == before + 1);
}
