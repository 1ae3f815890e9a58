#include "prefopt/kernel.hpp"

#include "prefopt/errors.hpp"
#include "prefopt/parallel_kernels.hpp"

#include <cmath>
#include <numbers>

namespace prefopt {

namespace {

constexpr double kSqrt5 = 2.2360679774997896964;

// Kernel value as a function of the scaled distance r.
double correlation(KernelFamily family, double r) {
  if (family == KernelFamily::matern52) {
    const double s = kSqrt5 * r;
    return (1.0 + s + s * s / 3.0) * std::exp(-s);
  }
  return std::exp(-r);
}

}  // namespace

double LogNormalPrior::mode() const { return std::exp(location); }

double LogNormalPrior::log_density(double log_value) const {
  const double t = (log_value - location) / scale;
  return -0.5 * t * t - std::log(scale) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double LogNormalPrior::d_log_density(double log_value) const {
  return -(log_value - location) / (scale * scale);
}

KernelConfig KernelConfig::defaults(KernelFamily family, std::size_t dim) {
  KernelConfig k;
  k.family = family;
  const LogNormalPrior ls_prior{std::log(0.25), 0.5};
  k.prior_lengthscale.assign(dim, ls_prior);
  k.prior_outputscale = LogNormalPrior{std::log(1.0), 0.5};
  k.lengthscales = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), ls_prior.mode());
  k.output_scale = k.prior_outputscale.mode();
  return k;
}

void KernelConfig::check() const {
  if (lengthscales.size() == 0) throw ContractViolation("kernel needs at least one lengthscale");
  if ((lengthscales.array() <= 0.0).any()) throw ContractViolation("lengthscales must be positive");
  if (!(output_scale > 0.0)) throw ContractViolation("output_scale must be positive");
  if (prior_lengthscale.size() != dim()) throw ContractViolation("one lengthscale prior per dimension");
}

Eigen::VectorXd KernelConfig::log_params() const {
  Eigen::VectorXd theta(lengthscales.size() + 1);
  theta.head(lengthscales.size()) = lengthscales.array().log().matrix();
  theta[lengthscales.size()] = std::log(output_scale);
  return theta;
}

KernelConfig KernelConfig::with_log_params(const Eigen::VectorXd& theta) const {
  if (theta.size() != lengthscales.size() + 1) throw ContractViolation("wrong hyperparameter count");
  KernelConfig k = *this;
  k.lengthscales = theta.head(lengthscales.size()).array().exp().matrix();
  k.output_scale = std::exp(theta[lengthscales.size()]);
  return k;
}

Eigen::VectorXd KernelConfig::prior_mode_log_params() const {
  Eigen::VectorXd theta(lengthscales.size() + 1);
  for (std::size_t j = 0; j < dim(); ++j) theta[static_cast<Eigen::Index>(j)] = prior_lengthscale[j].location;
  theta[lengthscales.size()] = prior_outputscale.location;
  return theta;
}

double KernelConfig::log_prior(const Eigen::VectorXd& theta) const {
  double lp = prior_outputscale.log_density(theta[lengthscales.size()]);
  for (std::size_t j = 0; j < dim(); ++j) lp += prior_lengthscale[j].log_density(theta[static_cast<Eigen::Index>(j)]);
  return lp;
}

Eigen::VectorXd KernelConfig::d_log_prior(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd g(theta.size());
  for (std::size_t j = 0; j < dim(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    g[i] = prior_lengthscale[j].d_log_density(theta[i]);
  }
  g[lengthscales.size()] = prior_outputscale.d_log_density(theta[lengthscales.size()]);
  return g;
}

double kernel_eval(const KernelConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& a,
                   const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != cfg.lengthscales.size() || b.size() != cfg.lengthscales.size()) {
    throw ContractViolation("kernel_eval: dimension mismatch");
  }
  const double r = ((a - b).array() / cfg.lengthscales.array()).matrix().norm();
  return cfg.output_scale * correlation(cfg.family, r);
}

double kernel_eval(const KernelConfig& cfg, const Configuration& a, const Configuration& b) {
  return kernel_eval(cfg, a.coords, b.coords);
}

Eigen::VectorXd kernel_grad_x(const KernelConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y) {
  const Eigen::ArrayXd inv_ls2 = cfg.lengthscales.array().square().inverse();
  const Eigen::ArrayXd diff = (x - y).array();
  const double r = std::sqrt((diff.square() * inv_ls2).sum());
  if (cfg.family == KernelFamily::matern52) {
    // dk/dx = -s (5/3) (1 + sqrt5 r) exp(-sqrt5 r) diff / l^2
    const double w = -cfg.output_scale * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
    return (w * diff * inv_ls2).matrix();
  }
  if (r == 0.0) return Eigen::VectorXd::Zero(x.size());
  const double w = -cfg.output_scale * std::exp(-r) / r;
  return (w * diff * inv_ls2).matrix();
}

Eigen::MatrixXd stack_points(const std::vector<Configuration>& points) {
  if (points.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(points.front().coords.size(), static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = points[i].coords;
  return m;
}

Eigen::MatrixXd gram_matrix(const KernelConfig& cfg, const Eigen::MatrixXd& points) {
  return kernels::omp::cross_covariance(cfg, points, points);
}

std::vector<Eigen::MatrixXd> gram_matrix_grads(const KernelConfig& cfg, const Eigen::MatrixXd& points) {
  const Eigen::Index m = points.cols();
  const Eigen::Index d = cfg.lengthscales.size();
  std::vector<Eigen::MatrixXd> grads(static_cast<std::size_t>(d + 1), Eigen::MatrixXd::Zero(m, m));
  const Eigen::ArrayXd inv_ls = cfg.lengthscales.array().inverse();
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = j; i < m; ++i) {
      const Eigen::ArrayXd scaled = (points.col(i) - points.col(j)).array() * inv_ls;
      const Eigen::ArrayXd sq = scaled.square();
      const double r = std::sqrt(sq.sum());
      const double k = cfg.output_scale * correlation(cfg.family, r);
      // d k / d log l_p = -(dk/dr) * (scaled_p^2 / r)
      double w = 0.0;
      if (cfg.family == KernelFamily::matern52) {
        w = cfg.output_scale * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
      } else if (r > 0.0) {
        w = k / r;
      }
      for (Eigen::Index p = 0; p < d; ++p) {
        const double g = w * sq[p];
        grads[static_cast<std::size_t>(p)](i, j) = g;
        grads[static_cast<std::size_t>(p)](j, i) = g;
      }
      grads[static_cast<std::size_t>(d)](i, j) = k;
      grads[static_cast<std::size_t>(d)](j, i) = k;
    }
  }
  return grads;
}

}  // namespace prefopt
