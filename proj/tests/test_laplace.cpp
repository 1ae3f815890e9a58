#include "prefopt/errors.hpp"
#include "prefopt/laplace.hpp"

#include "test_support.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <cmath>

using namespace prefopt;
using prefopt::testing::random_dataset;

namespace {

ComparisonDataset flipped(const ComparisonDataset& data) {
  ComparisonDataset out;
  for (const auto& x : data.visited()) out.add_point(x);
  for (const auto& r : data.records()) {
    out.add({r.second, r.first, r.winner == Winner::first ? Winner::second : Winner::first});
  }
  return out;
}

Eigen::VectorXd fd_gradient(const LaplacePosterior& post, const Eigen::VectorXd& u, double h) {
  Eigen::VectorXd g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    Eigen::VectorXd p = u, m = u;
    p[i] += h;
    m[i] -= h;
    g[i] = (log_unnormalized_posterior(post, p) - log_unnormalized_posterior(post, m)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("mode is stationary on random datasets") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 4), recs(1, 20);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = dim(rng), n = recs(rng);
    const std::size_t m = std::max<std::size_t>(2, std::min<std::size_t>(n + 1, 12));
    const auto data = random_dataset(rng, d, m, n);
    const auto lik = trial % 2 ? LikelihoodConfig::probit(0.5) : LikelihoodConfig::logistic(0.3);
    const auto post = fit_laplace(data, KernelConfig::defaults(KernelFamily::matern52, d), lik);
    worst = std::max(worst, fd_gradient(post, post.mode, 1e-6).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("label flip leaves the posterior unchanged") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto data = random_dataset(rng, 3, 8, 1 + trial % 20);
    const auto k = KernelConfig::defaults(KernelFamily::exponential, 3);
    const auto lik = LikelihoodConfig::probit(1.0);
    const auto a = fit_laplace(data, k, lik);
    const auto b = fit_laplace(flipped(data), k, lik);
    for (std::size_t i = 0; i < data.visited().size(); ++i) {
      const auto j = b.dataset.index_of_visited(data.visited()[i]);
      REQUIRE(j != ComparisonDataset::npos);
      CHECK(std::abs(a.mode[static_cast<Eigen::Index>(i)] - b.mode[static_cast<Eigen::Index>(j)]) < 1e-6);
    }
  }
}

TEST_CASE("winner gets the higher utility") {
  ComparisonDataset data;
  data.add({Configuration{0.2, 0.2}, Configuration{0.8, 0.6}, Winner::first});
  const auto post = fit_laplace(data, KernelConfig::defaults(KernelFamily::matern52, 2), LikelihoodConfig::logistic(1.0));
  CHECK(post.mode[0] > post.mode[1]);
  CHECK(post.mode[0] == doctest::Approx(-post.mode[1]).epsilon(1e-9));
}

TEST_CASE("very flat likelihood keeps the mode near zero") {
  ComparisonDataset data;
  data.add({Configuration{0.1}, Configuration{0.9}, Winner::second});
  const auto post = fit_laplace(data, KernelConfig::defaults(KernelFamily::matern52, 1), LikelihoodConfig::logistic(1e6));
  CHECK(post.mode.lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("prediction matches the dense formula") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto data = random_dataset(rng, 2, 7, 10);
    auto k = KernelConfig::defaults(KernelFamily::matern52, 2);
    k.output_scale = 1.3;
    const auto post = fit_laplace(data, k, LikelihoodConfig::logistic(0.5));

    std::vector<Configuration> q;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 5; ++i) q.push_back(Configuration{u(rng), u(rng)});
    q.push_back(data.visited()[2]);
    const auto pred = predict(post, q);

    const Eigen::MatrixXd X = stack_points(data.visited());
    const Eigen::MatrixXd Q = stack_points(q);
    const Eigen::MatrixXd Kinv = post.prior_gram.inverse();
    Eigen::MatrixXd ks(X.cols(), Q.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i)
      for (Eigen::Index j = 0; j < Q.cols(); ++j) ks(i, j) = kernel_eval(k, Eigen::VectorXd(X.col(i)), Eigen::VectorXd(Q.col(j)));
    Eigen::MatrixXd kqq(Q.cols(), Q.cols());
    for (Eigen::Index i = 0; i < Q.cols(); ++i)
      for (Eigen::Index j = 0; j < Q.cols(); ++j) kqq(i, j) = kernel_eval(k, Eigen::VectorXd(Q.col(i)), Eigen::VectorXd(Q.col(j)));
    const Eigen::VectorXd mean = ks.transpose() * Kinv * post.mode;
    const Eigen::MatrixXd cov = kqq - ks.transpose() * Kinv * ks + ks.transpose() * Kinv * post.covariance * Kinv * ks;

    CHECK((pred.mean - mean).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((pred.covariance - cov).lpNorm<Eigen::Infinity>() < 1e-6);
    // A visited point predicts its own mode and posterior variance.
    CHECK(pred.mean[5] == doctest::Approx(post.mode[2]).epsilon(1e-6));
    CHECK(pred.covariance(5, 5) == doctest::Approx(post.covariance(2, 2)).epsilon(1e-5));
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(predict_mean(post, Q.col(i)) == doctest::Approx(pred.mean[i]).epsilon(1e-12));
  }
}

TEST_CASE("posterior covariance is symmetric positive semidefinite") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = random_dataset(rng, 2, 10, 15);
    const auto post = fit_laplace(data, KernelConfig::defaults(KernelFamily::matern52, 2), LikelihoodConfig::logistic(0.2));
    CHECK((post.covariance - post.covariance.transpose()).norm() == 0.0);
    Eigen::MatrixXd c = post.covariance;
    c.diagonal().array() += 1e-8;
    CHECK(Eigen::LLT<Eigen::MatrixXd>(c).info() == Eigen::Success);
  }
}

TEST_CASE("far from the data the prior returns") {
  ComparisonDataset data;
  data.add({Configuration{0.0, 0.0}, Configuration{0.05, 0.0}, Winner::first});
  auto k = KernelConfig::defaults(KernelFamily::matern52, 2);
  k.lengthscales.setConstant(0.05);
  k.output_scale = 2.0;
  const auto post = fit_laplace(data, k, LikelihoodConfig::logistic(1.0));
  const auto pred = predict(post, std::vector<Configuration>{Configuration{1.0, 1.0}});
  CHECK(std::abs(pred.mean[0]) < 1e-8);
  CHECK(pred.covariance(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("predict mean gradient matches finite differences") {
  std::mt19937_64 rng(4);
  const auto data = random_dataset(rng, 3, 6, 8);
  const auto post = fit_laplace(data, KernelConfig::defaults(KernelFamily::matern52, 3), LikelihoodConfig::logistic(1.0));
  Eigen::VectorXd x(3);
  x << 0.3, 0.6, 0.2;
  const auto g = predict_mean_grad(post, x);
  for (Eigen::Index i = 0; i < 3; ++i) {
    Eigen::VectorXd p = x, m = x;
    p[i] += 1e-6;
    m[i] -= 1e-6;
    CHECK((predict_mean(post, p) - predict_mean(post, m)) / 2e-6 == doctest::Approx(g[i]).epsilon(1e-5));
  }
}

TEST_CASE("samples follow the predictive") {
  std::mt19937_64 rng(8);
  const auto data = random_dataset(rng, 2, 5, 6);
  const auto post = fit_laplace(data, KernelConfig::defaults(KernelFamily::matern52, 2), LikelihoodConfig::logistic(1.0));
  const std::vector<Configuration> q{Configuration{0.5, 0.5}, Configuration{0.1, 0.9}};
  const auto s = sample_utility(post, q, 20000, 3);
  const auto pred = predict(post, q);
  for (Eigen::Index i = 0; i < 2; ++i) {
    const double se = std::sqrt(pred.covariance(i, i) / 20000.0);
    CHECK(std::abs(s.col(i).mean() - pred.mean[i]) < 5 * se + 1e-12);
  }
  CHECK((sample_utility(post, q, 10, 3) - sample_utility(post, q, 10, 3)).norm() == 0.0);
}

TEST_CASE("bad inputs") {
  ComparisonDataset empty;
  CHECK_THROWS_AS(fit_laplace(empty, KernelConfig::defaults(KernelFamily::matern52, 2), LikelihoodConfig::logistic()), ContractViolation);
  ComparisonDataset data;
  data.add({Configuration{0.1, 0.2}, Configuration{0.3, 0.4}, Winner::first});
  CHECK_THROWS_AS(fit_laplace(data, KernelConfig::defaults(KernelFamily::matern52, 3), LikelihoodConfig::logistic()), ContractViolation);
  const auto post = fit_laplace(data, KernelConfig::defaults(KernelFamily::matern52, 2), LikelihoodConfig::logistic());
  CHECK_THROWS_AS(predict(post, std::vector<Configuration>{Configuration{0.5}}), ContractViolation);
}
