#pragma once

#include "prefopt/acquisition.hpp"
#include "prefopt/loops.hpp"

#include <optional>
#include <string>
#include <vector>

namespace prefopt {

enum class FunctionId { branin2, ackley4, alpine1_4, hartmann4 };

std::string to_string(FunctionId id);
FunctionId function_from_string(const std::string& name);
const std::vector<FunctionId>& all_functions();

/// Ground-truth utility: a negated minimization test function. Inputs are
/// unit-cube coordinates, mapped onto the function's canonical box.
class BenchmarkFunction {
 public:
  explicit BenchmarkFunction(FunctionId id);

  FunctionId id() const { return id_; }
  std::string name() const { return to_string(id_); }
  std::size_t dim() const;
  /// Continuous space over the canonical box (native units).
  ParameterSpace space() const;

  double evaluate(const Configuration& x) const;
  double evaluate_native(const Eigen::VectorXd& native) const;

  /// Global maximum of the utility, if resolved, and where the value came from.
  std::optional<double> known_max() const;
  std::string known_max_source() const;

 private:
  FunctionId id_;
};

/// Utility maximum of Branin as the best of its three published minimizers.
double branin_known_max();

/// Hartmann-4 maximum by projected gradient ascent from `starts` Sobol points.
/// The registry resolves it once with 10^4 starts.
double hartmann4_multistart_max(std::size_t starts);

/// Noiseless comparisons. Exact ties go to the first option and are counted.
class SimulatedOracle : public PreferenceOracle {
 public:
  explicit SimulatedOracle(BenchmarkFunction f) : f_(f) {}
  Choice answer(const Configuration& a, const Configuration& b) override;
  int ties() const { return ties_; }

 private:
  BenchmarkFunction f_;
  int ties_ = 0;
};

SimulatedOracle simulated_oracle(const BenchmarkFunction& f);

/// known_max - utility at the recommendation, clipped at 0.
double simple_regret(const BenchmarkFunction& f, const Recommendation& rec);
double simple_regret(const BenchmarkFunction& f, const Configuration& x);

}  // namespace prefopt
