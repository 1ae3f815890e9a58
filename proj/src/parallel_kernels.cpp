#include "prefopt/parallel_kernels.hpp"

#include "prefopt/errors.hpp"
#include "prefopt/laplace.hpp"

#include <algorithm>
#include <limits>

#ifdef PREFOPT_HAVE_OPENMP
#include <omp.h>
#endif

namespace prefopt::kernels {

namespace {

void check_cross(const KernelConfig& cfg, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != cfg.lengthscales.size() || b.rows() != cfg.lengthscales.size()) {
    throw ContractViolation("cross_covariance: dimension mismatch");
  }
}

double mean_at(const LaplacePosterior& post, const Eigen::Ref<const Eigen::VectorXd>& x) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < post.points.cols(); ++i) {
    acc += post.alpha[i] * kernel_eval(post.kernel, x, post.points.col(i));
  }
  return acc;
}

}  // namespace

double expected_max(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor,
                    const Eigen::MatrixXd& normals) {
  const Eigen::Index q = mean.size();
  double sum = 0.0;
  for (Eigen::Index s = 0; s < normals.rows(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < q; ++i) {
      double u = mean[i];
      for (Eigen::Index k = 0; k < factor.cols(); ++k) u += factor(i, k) * normals(s, k);
      best = std::max(best, u);
    }
    sum += best;
  }
  return sum / static_cast<double>(normals.rows());
}

namespace serial {

Eigen::MatrixXd cross_covariance(const KernelConfig& cfg, const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b) {
  check_cross(cfg, a, b);
  Eigen::MatrixXd k(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.cols(); ++i) k(i, j) = kernel_eval(cfg, a.col(i), b.col(j));
  }
  return k;
}

Eigen::VectorXd predictive_means(const LaplacePosterior& post, const Eigen::MatrixXd& x) {
  Eigen::VectorXd out(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out[j] = mean_at(post, x.col(j));
  return out;
}

Eigen::VectorXd expected_max_many(const std::vector<Eigen::VectorXd>& means,
                                  const std::vector<Eigen::MatrixXd>& factors,
                                  const Eigen::MatrixXd& normals) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(means.size()));
  for (std::size_t b = 0; b < means.size(); ++b) {
    out[static_cast<Eigen::Index>(b)] = expected_max(means[b], factors[b], normals);
  }
  return out;
}

Eigen::VectorXd map_indexed(std::size_t n, const std::function<double(std::size_t)>& fn) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out[static_cast<Eigen::Index>(i)] = fn(i);
  return out;
}

}  // namespace serial

namespace omp {

Eigen::MatrixXd cross_covariance(const KernelConfig& cfg, const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b) {
  check_cross(cfg, a, b);
  Eigen::MatrixXd k(a.cols(), b.cols());
  const Eigen::Index n = b.cols();
#pragma omp parallel for schedule(static) if (a.cols() * n > 4096)
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < a.cols(); ++i) k(i, j) = kernel_eval(cfg, a.col(i), b.col(j));
  }
  return k;
}

Eigen::VectorXd predictive_means(const LaplacePosterior& post, const Eigen::MatrixXd& x) {
  Eigen::VectorXd out(x.cols());
  const Eigen::Index n = x.cols();
#pragma omp parallel for schedule(static) if (n > 256)
  for (Eigen::Index j = 0; j < n; ++j) out[j] = mean_at(post, x.col(j));
  return out;
}

Eigen::VectorXd expected_max_many(const std::vector<Eigen::VectorXd>& means,
                                  const std::vector<Eigen::MatrixXd>& factors,
                                  const Eigen::MatrixXd& normals) {
  const auto n = static_cast<Eigen::Index>(means.size());
  Eigen::VectorXd out(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < n; ++b) {
    out[b] = expected_max(means[static_cast<std::size_t>(b)], factors[static_cast<std::size_t>(b)], normals);
  }
  return out;
}

Eigen::VectorXd map_indexed(std::size_t n, const std::function<double(std::size_t)>& fn) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < count; ++i) out[i] = fn(static_cast<std::size_t>(i));
  return out;
}

}  // namespace omp

int max_threads() {
#ifdef PREFOPT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace prefopt::kernels
