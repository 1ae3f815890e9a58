#pragma once

#include "prefopt/laplace.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace prefopt {

struct AcquisitionConfig {
  int q = 2;
  int mc_samples = 512;
  int restarts = 8;
  int raw_candidates = 256;
  std::uint64_t seed = 0;
  // Closed forms for q = 1 and q = 2; the Monte Carlo estimator is used otherwise.
  bool analytic_fast_path = true;
  double fd_step = 1e-4;
  int max_ascent_steps = 60;

  void check() const;
};

struct Recommendation {
  Configuration point;
  double posterior_mean = 0.0;
  int iteration = 0;
};

enum class RecommendScope { grid, continuous, visited_only };

/// E[max(X, Y)] for a bivariate Gaussian.
double expected_max_bivariate(double mean1, double mean2, double var1, double var2, double cov);

struct QeuboEstimate {
  double value;
  double standard_error;  // 0 for the analytic paths
};

/// qEUBO with common random numbers: every call with the same (seed, q,
/// mc_samples) reuses one matrix of quasi-random standard normals. Batches are put in
/// lexicographic order before evaluation, which makes the value independent of
/// the order the caller lists the points in.
class QeuboEvaluator {
 public:
  QeuboEvaluator(const LaplacePosterior& post, const AcquisitionConfig& cfg);

  double operator()(const Eigen::MatrixXd& batch) const { return estimate(batch).value; }
  QeuboEstimate estimate(const Eigen::MatrixXd& batch) const;  // batch: d x q
  QeuboEstimate monte_carlo(const Eigen::MatrixXd& batch) const;

  const LaplacePosterior& posterior() const { return post_; }
  const AcquisitionConfig& config() const { return cfg_; }

 private:
  const LaplacePosterior& post_;
  AcquisitionConfig cfg_;
  Eigen::MatrixXd normals_;  // mc_samples x q
};

QeuboEstimate qeubo_estimate(const LaplacePosterior& post, const std::vector<Configuration>& batch,
                             const AcquisitionConfig& cfg);
double qeubo_value(const LaplacePosterior& post, const std::vector<Configuration>& batch,
                   const AcquisitionConfig& cfg);

/// Joint maximization over the cube^q: Sobol raw batches, then projected
/// finite-difference ascent from the best `restarts` of them.
std::vector<Configuration> maximize_qeubo_continuous(const LaplacePosterior& post, const ParameterSpace& space,
                                                     const AcquisitionConfig& cfg);

/// Exhaustive argmax over `candidates` of qEUBO on (fixed_first, c), or of the
/// single-point value when fixed_first is empty. Lowest index wins ties.
Configuration maximize_qeubo_discrete(const LaplacePosterior& post, const std::vector<Configuration>& candidates,
                                      const AcquisitionConfig& cfg,
                                      const std::optional<Configuration>& fixed_first);

struct RecommendOptions {
  std::uint64_t seed = 0;
  int sobol_seeds = 64;
  int refine = 8;
  int max_ascent_steps = 100;
  std::size_t grid_cap = kDefaultGridCap;
};

Recommendation recommend(const LaplacePosterior& post, const ParameterSpace& space, RecommendScope scope,
                         const RecommendOptions& opts = {}, int iteration = 0);

}  // namespace prefopt
