#include "prefopt/errors.hpp"
#include "prefopt/kernel.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace prefopt;

namespace {

// General Matern form through the modified Bessel function, nu = 5/2.
double matern_bessel(double r) {
  const double nu = 2.5;
  const double s = std::sqrt(2.0 * nu) * r;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(s, nu) * std::cyl_bessel_k(nu, s);
}

KernelConfig one_d(KernelFamily f) {
  auto k = KernelConfig::defaults(f, 1);
  k.lengthscales[0] = 1.0;
  k.output_scale = 1.0;
  return k;
}

}  // namespace

TEST_CASE("matern 5/2 value at unit distance") {
  const auto k = one_d(KernelFamily::matern52);
  const double v = kernel_eval(k, Configuration{0.1}, Configuration{1.1});
  CHECK(v == doctest::Approx(matern_bessel(1.0)).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.52399).epsilon(1e-5));
  for (double r : {0.05, 0.3, 0.77, 2.5}) {
    CHECK(kernel_eval(k, Configuration{0.0}, Configuration{r}) == doctest::Approx(matern_bessel(r)).epsilon(1e-11));
  }
}

TEST_CASE("exponential value at unit distance") {
  const auto k = one_d(KernelFamily::exponential);
  CHECK(kernel_eval(k, Configuration{0.0}, Configuration{1.0}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(kernel_eval(k, Configuration{0.0}, Configuration{1.0}) == doctest::Approx(0.36788).epsilon(1e-5));
}

TEST_CASE("diagonal equals output scale and anisotropy scales distances") {
  for (auto f : {KernelFamily::matern52, KernelFamily::exponential}) {
    auto k = KernelConfig::defaults(f, 3);
    k.output_scale = 2.0;
    const Configuration x{0.2, 0.4, 0.9};
    CHECK(kernel_eval(k, x, x) == 2.0);
    k.lengthscales << 0.5, 2.0, 1.0;
    const Configuration a{0.0, 0.0, 0.0}, b{0.5, 0.0, 0.0}, c{0.0, 2.0, 0.0};
    CHECK(kernel_eval(k, a, b) == doctest::Approx(kernel_eval(k, a, c)).epsilon(1e-14));
  }
  auto k = KernelConfig::defaults(KernelFamily::matern52, 2);
  CHECK_THROWS_AS(kernel_eval(k, Configuration{0.1}, Configuration{0.2, 0.3}), ContractViolation);
}

TEST_CASE("default priors put the mode at exp(location)") {
  const auto k = KernelConfig::defaults(KernelFamily::matern52, 4);
  CHECK(k.lengthscales.size() == 4);
  for (std::size_t j = 0; j < 4; ++j) CHECK(k.lengthscales[static_cast<Eigen::Index>(j)] == doctest::Approx(k.prior_lengthscale[j].mode()));
  CHECK(k.output_scale == doctest::Approx(k.prior_outputscale.mode()));
  const auto theta = k.prior_mode_log_params();
  CHECK((k.log_params() - theta).norm() < 1e-14);
  CHECK(k.d_log_prior(theta).norm() < 1e-14);
  // Finite-difference check of the prior gradient away from the mode.
  Eigen::VectorXd t = theta;
  t << -1.0, -2.0, 0.3, -0.7, 0.4;
  const auto g = k.d_log_prior(t);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    Eigen::VectorXd p = t, m = t;
    p[i] += 1e-6;
    m[i] -= 1e-6;
    CHECK((k.log_prior(p) - k.log_prior(m)) / 2e-6 == doctest::Approx(g[i]).epsilon(1e-6));
  }
}

TEST_CASE("gram gradients match finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd pts(3, 6);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = u(rng);
  for (auto f : {KernelFamily::matern52, KernelFamily::exponential}) {
    auto k = KernelConfig::defaults(f, 3);
    k.lengthscales << 0.3, 0.7, 1.4;
    k.output_scale = 1.7;
    const auto grads = gram_matrix_grads(k, pts);
    const auto theta = k.log_params();
    REQUIRE(grads.size() == 4);
    for (Eigen::Index p = 0; p < theta.size(); ++p) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[p] += 1e-6;
      tm[p] -= 1e-6;
      const Eigen::MatrixXd fd = (gram_matrix(k.with_log_params(tp), pts) - gram_matrix(k.with_log_params(tm), pts)) / 2e-6;
      CHECK((fd - grads[static_cast<std::size_t>(p)]).cwiseAbs().maxCoeff() < 1e-7);
    }
  }
}

TEST_CASE("kernel gradient in x matches finite differences") {
  for (auto f : {KernelFamily::matern52, KernelFamily::exponential}) {
    auto k = KernelConfig::defaults(f, 2);
    k.lengthscales << 0.4, 0.9;
    Eigen::VectorXd x(2), y(2);
    x << 0.3, 0.8;
    y << 0.55, 0.1;
    const auto g = kernel_grad_x(k, x, y);
    for (Eigen::Index i = 0; i < 2; ++i) {
      Eigen::VectorXd p = x, m = x;
      p[i] += 1e-6;
      m[i] -= 1e-6;
      CHECK((kernel_eval(k, p, y) - kernel_eval(k, m, y)) / 2e-6 == doctest::Approx(g[i]).epsilon(1e-6));
    }
    CHECK(kernel_grad_x(k, x, x).norm() == 0.0);
  }
}

TEST_CASE("gram matrix is symmetric with output scale on the diagonal") {
  auto k = KernelConfig::defaults(KernelFamily::matern52, 2);
  k.output_scale = 3.0;
  Eigen::MatrixXd pts(2, 4);
  pts << 0.1, 0.5, 0.9, 0.3, 0.2, 0.2, 0.7, 1.0;
  const auto K = gram_matrix(k, pts);
  CHECK((K - K.transpose()).norm() == 0.0);
  for (int i = 0; i < 4; ++i) CHECK(K(i, i) == 3.0);
  CHECK(K(0, 2) == kernel_eval(k, Eigen::VectorXd(pts.col(0)), Eigen::VectorXd(pts.col(2))));
}
