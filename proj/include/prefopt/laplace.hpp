#pragma once

#include "prefopt/dataset.hpp"
#include "prefopt/kernel.hpp"
#include "prefopt/likelihood.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace prefopt {

/// Gaussian approximation N(mode, covariance) of the latent utility at the
/// visited configurations, plus the factorizations needed for prediction.
///
/// With K = L L^T the (jittered) prior Gram matrix and W the negative Hessian
/// of the log likelihood at the mode, the posterior covariance is
/// (K^-1 + W)^-1 = L C^-1 L^T where C = I + L^T W L.
struct LaplacePosterior {
  Eigen::VectorXd mode;
  Eigen::MatrixXd covariance;
  KernelConfig kernel;
  LikelihoodConfig likelihood;
  ComparisonDataset dataset;

  Eigen::MatrixXd points;       // d x m, visited configurations as columns
  Eigen::MatrixXd prior_gram;   // K including jitter
  Eigen::MatrixXd prior_chol;   // L, lower triangular
  Eigen::VectorXd alpha;        // K^-1 mode (= gradient of log likelihood at mode)
  Eigen::MatrixXd curvature;    // W
  Eigen::MatrixXd c_chol;       // lower Cholesky factor of C
  double jitter = 0.0;          // absolute diagonal jitter added to K
  double log_marginal = 0.0;    // Laplace estimate of log p(D | hyperparameters)
  int newton_iterations = 0;
  double gradient_norm = 0.0;   // max-norm of the log-posterior gradient at mode

  std::size_t size() const { return static_cast<std::size_t>(mode.size()); }
};

struct LaplaceOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-6;
  int max_halvings = 20;
  // Initial K^-1 u for Newton; zero when absent or of the wrong size.
  std::optional<Eigen::VectorXd> warm_alpha;
};

/// Log of the unnormalized posterior, log L(D|u) - u^T K^-1 u / 2, evaluated
/// for an arbitrary utility vector at the visited points of `post`.
double log_unnormalized_posterior(const LaplacePosterior& post, const Eigen::VectorXd& u);

/// Sum of log preference probabilities for utilities `u` at the visited points.
double log_likelihood(const ComparisonDataset& data, const LikelihoodConfig& lik, const Eigen::VectorXd& u);

LaplacePosterior fit_laplace(const ComparisonDataset& data, const KernelConfig& kernel,
                             const LikelihoodConfig& likelihood, const LaplaceOptions& opts = {});

struct Predictive {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Joint Gaussian predictive at `queries` (columns of a d x n matrix).
Predictive predict(const LaplacePosterior& post, const Eigen::MatrixXd& queries);
Predictive predict(const LaplacePosterior& post, const std::vector<Configuration>& queries);

/// Predictive mean and marginal variance only; cheaper than predict().
double predict_mean(const LaplacePosterior& post, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd predict_mean_grad(const LaplacePosterior& post, const Eigen::Ref<const Eigen::VectorXd>& x);

/// n_samples x |queries| matrix of draws from the joint predictive.
Eigen::MatrixXd sample_utility(const LaplacePosterior& post, const std::vector<Configuration>& queries,
                               std::size_t n_samples, std::uint64_t seed);

/// Square-root factor A with A A^T = cov for a PSD matrix; rank-deficient
/// inputs get zero columns instead of failing.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov);

}  // namespace prefopt
