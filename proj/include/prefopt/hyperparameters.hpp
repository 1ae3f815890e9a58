#pragma once

#include "prefopt/laplace.hpp"

#include <cstdint>

namespace prefopt {

struct HyperparameterOptions {
  int starts = 4;
  int max_steps = 200;
  double gradient_tolerance = 1e-4;
  std::uint64_t seed = 0;
  double min_lengthscale = 0.05;
  double max_lengthscale = 10.0;
  double min_output_scale = 0.05;
  double max_output_scale = 20.0;
};

struct HyperparameterFit {
  KernelConfig kernel;
  double objective = 0.0;      // log marginal + log prior at the returned point
  bool fell_back_to_prior = false;
  int starts_converged = 0;
};

/// Laplace log marginal likelihood and its gradient with respect to the
/// log-hyperparameters (lengthscales..., output scale).
struct MarginalLikelihood {
  double value;
  Eigen::VectorXd gradient;
};
MarginalLikelihood laplace_log_marginal(const ComparisonDataset& data, const KernelConfig& kernel,
                                        const LikelihoodConfig& likelihood);

/// log marginal + log prior, the quantity fit_hyperparameters maximizes.
MarginalLikelihood hyperparameter_objective(const ComparisonDataset& data, const KernelConfig& kernel,
                                            const LikelihoodConfig& likelihood);

/// Multi-start projected gradient ascent in log-hyperparameter space. Starts
/// are the prior mode, the incoming `kernel` and Sobol perturbations of the
/// prior mode. Never throws for numerical trouble; falls back to the prior mode.
HyperparameterFit fit_hyperparameters(const ComparisonDataset& data, const KernelConfig& kernel,
                                      const LikelihoodConfig& likelihood,
                                      const HyperparameterOptions& opts = {});

}  // namespace prefopt
