#include "prefopt/hyperparameters.hpp"

#include "prefopt/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace prefopt {

namespace {

struct Evaluation {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  Eigen::VectorXd alpha;
  bool ok = false;
};

// Laplace log marginal and its gradient for a fitted posterior.
//
// d logZ / d theta = a^T dK a / 2 - tr(R dK) / 2 + s2^T df,
// with R = W (I + K W)^-1, df = (I + K W)^-1 dK a the implicit change of the
// mode and s2 = d(-log|I + K W| / 2) / d mode through the third derivatives.
Eigen::VectorXd log_marginal_gradient(const LaplacePosterior& post) {
  const auto& data = post.dataset;
  const auto& idx = data.record_indices();
  const Eigen::Index m = post.points.cols();
  const auto n = static_cast<Eigen::Index>(idx.size());
  std::vector<Eigen::MatrixXd> dk = gram_matrix_grads(post.kernel, post.points);
  // Jitter scales with the output scale, so it belongs to that derivative.
  dk.back().diagonal().array() += post.jitter;

  Eigen::VectorXd weights(n), d3(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto [w, l] = idx[static_cast<std::size_t>(r)];
    const auto dv = log_pref_likelihood(post.likelihood, post.mode[static_cast<Eigen::Index>(w)] -
                                                             post.mode[static_cast<Eigen::Index>(l)]);
    weights[r] = -dv.d2;
    d3[r] = dv.d3;
  }

  Eigen::MatrixXd e(n, m);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto [w, l] = idx[static_cast<std::size_t>(r)];
    e.row(r) = post.prior_chol.row(static_cast<Eigen::Index>(w)) - post.prior_chol.row(static_cast<Eigen::Index>(l));
  }
  const auto rchol = post.c_chol.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd v = rchol.solve(e.transpose());  // m x n
  const Eigen::VectorXd pair_var = v.colwise().squaredNorm().transpose();  // c_r^T Sigma c_r
  Eigen::MatrixXd q = -(weights.asDiagonal() * (v.transpose() * v) * weights.asDiagonal());
  q.diagonal() += weights;

  Eigen::VectorXd s2 = Eigen::VectorXd::Zero(m);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto [w, l] = idx[static_cast<std::size_t>(r)];
    const double c = 0.5 * d3[r] * pair_var[r];
    s2[static_cast<Eigen::Index>(w)] += c;
    s2[static_cast<Eigen::Index>(l)] -= c;
  }

  const auto lchol = post.prior_chol.triangularView<Eigen::Lower>();
  Eigen::VectorXd grad(static_cast<Eigen::Index>(dk.size()));
  for (std::size_t j = 0; j < dk.size(); ++j) {
    const Eigen::MatrixXd& g = dk[j];
    const Eigen::VectorXd dka = g * post.alpha;
    const double explicit_fit = 0.5 * post.alpha.dot(dka);

    // tr(D^T Q D dK) = sum_rs Q_rs (D dK D^T)_sr
    double trace = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto wr = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)].first);
      const auto lr = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)].second);
      for (Eigen::Index s = 0; s < n; ++s) {
        const auto ws = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(s)].first);
        const auto ls = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(s)].second);
        const double dd = g(ws, wr) - g(ws, lr) - g(ls, wr) + g(ls, lr);
        trace += q(r, s) * dd;
      }
    }

    // df = dka - L C^-1 L^T W dka
    Eigen::VectorXd wv = Eigen::VectorXd::Zero(m);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto a = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)].first);
      const auto b = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)].second);
      const double c = weights[r] * (dka[a] - dka[b]);
      wv[a] += c;
      wv[b] -= c;
    }
    Eigen::VectorXd t = lchol.transpose() * wv;
    t = rchol.solve(t);
    t = rchol.transpose().solve(t);
    const Eigen::VectorXd df = dka - post.prior_chol * t;

    grad[static_cast<Eigen::Index>(j)] = explicit_fit - 0.5 * trace + s2.dot(df);
  }
  return grad;
}

Evaluation evaluate(const ComparisonDataset& data, const KernelConfig& base, const LikelihoodConfig& lik,
                    const Eigen::VectorXd& theta, const Eigen::VectorXd* warm) {
  Evaluation out;
  try {
    const KernelConfig k = base.with_log_params(theta);
    LaplaceOptions opts;
    if (warm) opts.warm_alpha = *warm;
    const LaplacePosterior post = fit_laplace(data, k, lik, opts);
    out.value = post.log_marginal + k.log_prior(theta);
    out.gradient = log_marginal_gradient(post) + k.d_log_prior(theta);
    out.alpha = post.alpha;
    out.ok = std::isfinite(out.value) && out.gradient.allFinite();
  } catch (const NumericalError&) {
    out.ok = false;
  }
  return out;
}

}  // namespace

MarginalLikelihood laplace_log_marginal(const ComparisonDataset& data, const KernelConfig& kernel,
                                        const LikelihoodConfig& likelihood) {
  const LaplacePosterior post = fit_laplace(data, kernel, likelihood);
  return {post.log_marginal, log_marginal_gradient(post)};
}

MarginalLikelihood hyperparameter_objective(const ComparisonDataset& data, const KernelConfig& kernel,
                                            const LikelihoodConfig& likelihood) {
  const Eigen::VectorXd theta = kernel.log_params();
  auto ml = laplace_log_marginal(data, kernel, likelihood);
  ml.value += kernel.log_prior(theta);
  ml.gradient += kernel.d_log_prior(theta);
  return ml;
}

HyperparameterFit fit_hyperparameters(const ComparisonDataset& data, const KernelConfig& kernel,
                                      const LikelihoodConfig& likelihood, const HyperparameterOptions& opts) {
  kernel.check();
  if (data.empty()) throw ContractViolation("fit_hyperparameters needs at least one comparison");

  const Eigen::Index p = static_cast<Eigen::Index>(kernel.dim()) + 1;
  Eigen::VectorXd lo(p), hi(p);
  lo.head(p - 1).setConstant(std::log(opts.min_lengthscale));
  hi.head(p - 1).setConstant(std::log(opts.max_lengthscale));
  lo[p - 1] = std::log(opts.min_output_scale);
  hi[p - 1] = std::log(opts.max_output_scale);
  auto project = [&](const Eigen::VectorXd& t) { return Eigen::VectorXd(t.cwiseMax(lo).cwiseMin(hi)); };

  const Eigen::VectorXd prior_mode = project(kernel.prior_mode_log_params());
  std::vector<Eigen::VectorXd> starts{prior_mode};
  const Eigen::VectorXd incoming = project(kernel.log_params());
  if ((incoming - prior_mode).lpNorm<Eigen::Infinity>() > 1e-12) starts.push_back(incoming);
  Eigen::VectorXd prior_scale(p);
  for (Eigen::Index j = 0; j < p - 1; ++j) prior_scale[j] = kernel.prior_lengthscale[static_cast<std::size_t>(j)].scale;
  prior_scale[p - 1] = kernel.prior_outputscale.scale;
  const auto need = static_cast<std::size_t>(std::max(opts.starts, 4)) - starts.size();
  for (const auto& u : sobol_unit(static_cast<std::size_t>(p), need, opts.seed)) {
    starts.push_back(project(prior_mode + 2.0 * prior_scale.cwiseProduct(2.0 * u.array().matrix() - Eigen::VectorXd::Ones(p))));
  }

  HyperparameterFit best;
  best.kernel = kernel.with_log_params(prior_mode);
  best.objective = -std::numeric_limits<double>::infinity();

  for (const auto& start : starts) {
    Eigen::VectorXd theta = start;
    Evaluation cur = evaluate(data, kernel, likelihood, theta, nullptr);
    if (!cur.ok) continue;
    double step = 0.1 / std::max(1.0, cur.gradient.lpNorm<Eigen::Infinity>());
    for (int it = 0; it < opts.max_steps; ++it) {
      const Eigen::VectorXd pg = project(theta + cur.gradient) - theta;
      if (pg.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) break;
      bool accepted = false;
      Eigen::VectorXd next;
      Evaluation trial;
      for (int h = 0; h < 30; ++h, step *= 0.5) {
        next = project(theta + step * cur.gradient);
        if ((next - theta).lpNorm<Eigen::Infinity>() < 1e-12) break;
        trial = evaluate(data, kernel, likelihood, next, &cur.alpha);
        if (trial.ok && trial.value >= cur.value + 1e-4 * cur.gradient.dot(next - theta)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      // Barzilai-Borwein step for the ascent direction.
      const Eigen::VectorXd s = next - theta;
      const Eigen::VectorXd y = trial.gradient - cur.gradient;
      const double sy = s.dot(y);
      step = sy < 0.0 ? s.squaredNorm() / -sy : 2.0 * step;
      step = std::clamp(step, 1e-6, 10.0);
      const double gain = trial.value - cur.value;
      theta = next;
      cur = std::move(trial);
      if (gain < 1e-10 * std::max(1.0, std::abs(cur.value))) break;
    }
    ++best.starts_converged;
    if (cur.value > best.objective) {
      best.objective = cur.value;
      best.kernel = kernel.with_log_params(theta);
    }
  }
  if (best.starts_converged == 0) best.fell_back_to_prior = true;
  return best;
}

}  // namespace prefopt
