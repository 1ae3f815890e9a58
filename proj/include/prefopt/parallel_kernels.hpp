#pragma once

// Data-parallel inner loops. Every kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::omp. Each output element
// is computed independently and in the same order of operations, so the two
// versions agree bit for bit; tests rely on that.

#include "prefopt/kernel.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <vector>

namespace prefopt {

struct LaplacePosterior;

namespace kernels {

/// Mean of max_i (mean + factor * z)_i over the rows z of `normals` (n x q).
double expected_max(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor,
                    const Eigen::MatrixXd& normals);

namespace serial {

Eigen::MatrixXd cross_covariance(const KernelConfig& cfg, const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b);
Eigen::VectorXd predictive_means(const LaplacePosterior& post, const Eigen::MatrixXd& x);
Eigen::VectorXd expected_max_many(const std::vector<Eigen::VectorXd>& means,
                                  const std::vector<Eigen::MatrixXd>& factors,
                                  const Eigen::MatrixXd& normals);
Eigen::VectorXd map_indexed(std::size_t n, const std::function<double(std::size_t)>& fn);

}  // namespace serial

namespace omp {

Eigen::MatrixXd cross_covariance(const KernelConfig& cfg, const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b);
Eigen::VectorXd predictive_means(const LaplacePosterior& post, const Eigen::MatrixXd& x);
Eigen::VectorXd expected_max_many(const std::vector<Eigen::VectorXd>& means,
                                  const std::vector<Eigen::MatrixXd>& factors,
                                  const Eigen::MatrixXd& normals);
/// fn must be safe to call concurrently.
Eigen::VectorXd map_indexed(std::size_t n, const std::function<double(std::size_t)>& fn);

}  // namespace omp

int max_threads();

}  // namespace kernels
}  // namespace prefopt
