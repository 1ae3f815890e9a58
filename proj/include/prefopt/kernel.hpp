#pragma once

#include "prefopt/domain.hpp"

#include <Eigen/Core>

#include <vector>

namespace prefopt {

enum class KernelFamily { matern52, exponential };

/// Normal density over log(value).
struct LogNormalPrior {
  double location = 0.0;
  double scale = 0.5;

  double mode() const;  // exp(location): the mode in log space
  double log_density(double log_value) const;
  double d_log_density(double log_value) const;
};

struct KernelConfig {
  KernelFamily family = KernelFamily::matern52;
  Eigen::VectorXd lengthscales;
  double output_scale = 1.0;
  std::vector<LogNormalPrior> prior_lengthscale;
  LogNormalPrior prior_outputscale;

  /// Hyperparameters at the prior mode with the default log-normal priors.
  static KernelConfig defaults(KernelFamily family, std::size_t dim);

  std::size_t dim() const { return static_cast<std::size_t>(lengthscales.size()); }
  void check() const;

  /// (log lengthscales..., log output_scale)
  Eigen::VectorXd log_params() const;
  KernelConfig with_log_params(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd prior_mode_log_params() const;
  double log_prior(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd d_log_prior(const Eigen::VectorXd& theta) const;
};

double kernel_eval(const KernelConfig& cfg, const Configuration& a, const Configuration& b);
double kernel_eval(const KernelConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& a,
                   const Eigen::Ref<const Eigen::VectorXd>& b);

/// Gradient of k(x, y) with respect to x. The exponential kernel is not
/// differentiable at x == y; zero is returned there.
Eigen::VectorXd kernel_grad_x(const KernelConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y);

/// Column-per-point matrix from a list of configurations.
Eigen::MatrixXd stack_points(const std::vector<Configuration>& points);

/// Gram matrix K(points, points).
Eigen::MatrixXd gram_matrix(const KernelConfig& cfg, const Eigen::MatrixXd& points);

/// Derivatives of the Gram matrix with respect to log-hyperparameters, ordered
/// like KernelConfig::log_params().
std::vector<Eigen::MatrixXd> gram_matrix_grads(const KernelConfig& cfg, const Eigen::MatrixXd& points);

}  // namespace prefopt
