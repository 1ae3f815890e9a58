#include "prefopt/benchmarks.hpp"

#include "prefopt/errors.hpp"

#include <boost/math/constants/constants.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <mutex>

namespace prefopt {

namespace {

constexpr double kPi = boost::math::constants::pi<double>();

struct Box {
  double lower;
  double upper;
};

std::vector<Box> canonical_box(FunctionId id) {
  switch (id) {
    case FunctionId::branin2: return {{-5.0, 10.0}, {0.0, 15.0}};
    case FunctionId::ackley4: return std::vector<Box>(4, {-32.768, 32.768});
    case FunctionId::alpine1_4: return std::vector<Box>(4, {0.0, 10.0});
    case FunctionId::hartmann4: return std::vector<Box>(4, {0.0, 1.0});
  }
  throw ContractViolation("unknown function");
}

double branin(const Eigen::VectorXd& x) {
  const double b = 5.1 / (4.0 * kPi * kPi), c = 5.0 / kPi, t = 1.0 / (8.0 * kPi);
  const double u = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
  return u * u + 10.0 * (1.0 - t) * std::cos(x[0]) + 10.0;
}

double ackley(const Eigen::VectorXd& x) {
  const double a = 20.0, b = 0.2, c = 2.0 * kPi;
  const double n = static_cast<double>(x.size());
  double sq = 0.0, cs = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    sq += x[i] * x[i];
    cs += std::cos(c * x[i]);
  }
  // Grouped so that the origin evaluates to exactly zero.
  return (a - a * std::exp(-b * std::sqrt(sq / n))) + (std::exp(1.0) - std::exp(cs / n));
}

double alpine1(const Eigen::VectorXd& x) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += std::abs(x[i] * std::sin(x[i]) + 0.1 * x[i]);
  return s;
}

// First four columns of the six-dimensional Hartmann constants.
constexpr std::array<double, 4> kHartAlpha{1.0, 1.2, 3.0, 3.2};
constexpr double kHartA[4][4] = {{10, 3, 17, 3.5}, {0.05, 10, 17, 0.1}, {3, 3.5, 1.7, 10}, {17, 8, 0.05, 10}};
constexpr double kHartP[4][4] = {
    {1312e-4, 1696e-4, 5569e-4, 124e-4},
    {2329e-4, 4135e-4, 8307e-4, 3736e-4},
    {2348e-4, 1451e-4, 3522e-4, 2883e-4},
    {4047e-4, 8828e-4, 8732e-4, 5743e-4},
};

double hartmann4(const Eigen::VectorXd& x) {
  double h = 0.0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (int j = 0; j < 4; ++j) inner += kHartA[i][j] * (x[j] - kHartP[i][j]) * (x[j] - kHartP[i][j]);
    h -= kHartAlpha[i] * std::exp(-inner);
  }
  return h;
}

// Gradient of the Hartmann utility (= -hartmann4).
Eigen::VectorXd hartmann4_utility_grad(const Eigen::VectorXd& x) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(4);
  for (int i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (int j = 0; j < 4; ++j) inner += kHartA[i][j] * (x[j] - kHartP[i][j]) * (x[j] - kHartP[i][j]);
    const double e = kHartAlpha[i] * std::exp(-inner);
    for (int j = 0; j < 4; ++j) g[j] -= e * 2.0 * kHartA[i][j] * (x[j] - kHartP[i][j]);
  }
  return g;
}

double local_ascent(Eigen::VectorXd x) {
  auto u = [](const Eigen::VectorXd& p) { return -hartmann4(p); };
  double fx = u(x), step = 0.1;
  for (int it = 0; it < 2000 && step > 1e-14; ++it) {
    const Eigen::VectorXd g = hartmann4_utility_grad(x);
    const Eigen::VectorXd cand = (x + step * g).cwiseMax(0.0).cwiseMin(1.0);
    const double fc = u(cand);
    if (fc > fx) {
      if ((cand - x).lpNorm<Eigen::Infinity>() < 1e-13) break;
      x = cand;
      fx = fc;
      step *= 1.5;
    } else {
      step *= 0.5;
    }
  }
  return fx;
}

}  // namespace

std::string to_string(FunctionId id) {
  switch (id) {
    case FunctionId::branin2: return "branin2";
    case FunctionId::ackley4: return "ackley4";
    case FunctionId::alpine1_4: return "alpine1_4";
    case FunctionId::hartmann4: return "hartmann4";
  }
  return "?";
}

FunctionId function_from_string(const std::string& name) {
  for (FunctionId id : all_functions()) {
    if (to_string(id) == name) return id;
  }
  throw ConfigError("unknown benchmark function '" + name + "'");
}

const std::vector<FunctionId>& all_functions() {
  static const std::vector<FunctionId> ids{FunctionId::branin2, FunctionId::ackley4, FunctionId::alpine1_4,
                                           FunctionId::hartmann4};
  return ids;
}

BenchmarkFunction::BenchmarkFunction(FunctionId id) : id_(id) {}

std::size_t BenchmarkFunction::dim() const { return canonical_box(id_).size(); }

ParameterSpace BenchmarkFunction::space() const {
  std::vector<ParameterSpec> specs;
  const auto box = canonical_box(id_);
  for (std::size_t i = 0; i < box.size(); ++i) specs.push_back({"x" + std::to_string(i + 1), box[i].lower, box[i].upper, ""});
  return ParameterSpace(name(), specs);
}

double BenchmarkFunction::evaluate_native(const Eigen::VectorXd& x) const {
  switch (id_) {
    case FunctionId::branin2: return -branin(x);
    case FunctionId::ackley4: return -ackley(x);
    case FunctionId::alpine1_4: return -alpine1(x);
    case FunctionId::hartmann4: return -hartmann4(x);
  }
  throw ContractViolation("unknown function");
}

double BenchmarkFunction::evaluate(const Configuration& x) const {
  const auto box = canonical_box(id_);
  if (x.dim() != box.size()) throw ContractViolation(name() + " expects " + std::to_string(box.size()) + " coordinates");
  Eigen::VectorXd native(x.coords.size());
  for (std::size_t i = 0; i < box.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    native[k] = box[i].lower + x.coords[k] * (box[i].upper - box[i].lower);
  }
  return evaluate_native(native);
}

double branin_known_max() {
  const Eigen::Vector2d minimizers[3] = {{-kPi, 12.275}, {kPi, 2.275}, {9.42478, 2.475}};
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& m : minimizers) best = std::max(best, -branin(m));
  return best;
}

double hartmann4_multistart_max(std::size_t starts) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& s : sobol_unit(4, starts, 12345)) best = std::max(best, local_ascent(s));
  return best;
}

std::optional<double> BenchmarkFunction::known_max() const {
  switch (id_) {
    case FunctionId::ackley4:
    case FunctionId::alpine1_4: return 0.0;
    case FunctionId::branin2: {
      static const double v = branin_known_max();
      return v;
    }
    case FunctionId::hartmann4: {
      static const double v = hartmann4_multistart_max(10000);
      return v;
    }
  }
  return std::nullopt;
}

std::string BenchmarkFunction::known_max_source() const {
  switch (id_) {
    case FunctionId::ackley4:
    case FunctionId::alpine1_4: return "analytic: utility vanishes at the origin";
    case FunctionId::branin2: return "derived: best of the three published minimizers";
    case FunctionId::hartmann4: return "derived: projected gradient ascent from 10^4 Sobol starts";
  }
  return "";
}

Choice SimulatedOracle::answer(const Configuration& a, const Configuration& b) {
  const double ua = f_.evaluate(a), ub = f_.evaluate(b);
  if (ua > ub) return Choice::first;
  if (ua < ub) return Choice::second;
  ++ties_;
  return Choice::first;
}

SimulatedOracle simulated_oracle(const BenchmarkFunction& f) { return SimulatedOracle(f); }

double simple_regret(const BenchmarkFunction& f, const Configuration& x) {
  const auto best = f.known_max();
  if (!best) throw ConfigError("known maximum of " + f.name() + " is not resolved");
  return std::max(0.0, *best - f.evaluate(x));
}

double simple_regret(const BenchmarkFunction& f, const Recommendation& rec) { return simple_regret(f, rec.point); }

}  // namespace prefopt
