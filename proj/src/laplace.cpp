#include "prefopt/laplace.hpp"

#include "prefopt/errors.hpp"
#include "prefopt/parallel_kernels.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>

namespace prefopt {

namespace {

constexpr double kJitterLadder[] = {1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

struct RecordTerms {
  Eigen::VectorXd gradient;  // d log L / du at the visited points
  Eigen::VectorXd weights;   // -d2 per record (W = D^T diag(weights) D)
  double log_lik = 0.0;
};

RecordTerms record_terms(const ComparisonDataset& data, const LikelihoodConfig& lik,
                         const Eigen::VectorXd& u) {
  const auto& idx = data.record_indices();
  RecordTerms t;
  t.gradient = Eigen::VectorXd::Zero(u.size());
  t.weights.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto [w, l] = idx[r];
    const auto dv = log_pref_likelihood(lik, u[static_cast<Eigen::Index>(w)] - u[static_cast<Eigen::Index>(l)]);
    t.log_lik += dv.value;
    t.gradient[static_cast<Eigen::Index>(w)] += dv.d1;
    t.gradient[static_cast<Eigen::Index>(l)] -= dv.d1;
    t.weights[static_cast<Eigen::Index>(r)] = -dv.d2;
  }
  return t;
}

// E = D L: one row per record, L[winner] - L[loser].
Eigen::MatrixXd incidence_times(const ComparisonDataset& data, const Eigen::MatrixXd& l) {
  const auto& idx = data.record_indices();
  Eigen::MatrixXd e(static_cast<Eigen::Index>(idx.size()), l.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    e.row(static_cast<Eigen::Index>(r)) =
        l.row(static_cast<Eigen::Index>(idx[r].first)) - l.row(static_cast<Eigen::Index>(idx[r].second));
  }
  return e;
}

// D^T v
Eigen::VectorXd incidence_transpose(const ComparisonDataset& data, const Eigen::VectorXd& v, Eigen::Index m) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
  const auto& idx = data.record_indices();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out[static_cast<Eigen::Index>(idx[r].first)] += v[static_cast<Eigen::Index>(r)];
    out[static_cast<Eigen::Index>(idx[r].second)] -= v[static_cast<Eigen::Index>(r)];
  }
  return out;
}

// D u
Eigen::VectorXd incidence(const ComparisonDataset& data, const Eigen::VectorXd& u) {
  const auto& idx = data.record_indices();
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out[static_cast<Eigen::Index>(r)] =
        u[static_cast<Eigen::Index>(idx[r].first)] - u[static_cast<Eigen::Index>(idx[r].second)];
  }
  return out;
}

Eigen::MatrixXd curvature_matrix(const ComparisonDataset& data, const Eigen::VectorXd& weights, Eigen::Index m) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
  const auto& idx = data.record_indices();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto a = static_cast<Eigen::Index>(idx[r].first);
    const auto b = static_cast<Eigen::Index>(idx[r].second);
    const double c = weights[static_cast<Eigen::Index>(r)];
    w(a, a) += c;
    w(b, b) += c;
    w(a, b) -= c;
    w(b, a) -= c;
  }
  return w;
}

}  // namespace

double log_likelihood(const ComparisonDataset& data, const LikelihoodConfig& lik, const Eigen::VectorXd& u) {
  double total = 0.0;
  for (const auto& [w, l] : data.record_indices()) {
    total += log_pref_likelihood(lik, u[static_cast<Eigen::Index>(w)] - u[static_cast<Eigen::Index>(l)]).value;
  }
  return total;
}

double log_unnormalized_posterior(const LaplacePosterior& post, const Eigen::VectorXd& u) {
  const Eigen::VectorXd half = post.prior_chol.triangularView<Eigen::Lower>().solve(u);
  return log_likelihood(post.dataset, post.likelihood, u) - 0.5 * half.squaredNorm();
}

LaplacePosterior fit_laplace(const ComparisonDataset& data, const KernelConfig& kernel,
                             const LikelihoodConfig& likelihood, const LaplaceOptions& opts) {
  kernel.check();
  likelihood.check();
  if (data.visited().empty()) throw ContractViolation("fit_laplace needs at least one visited point");
  if (data.dim() != kernel.dim()) throw ContractViolation("kernel and dataset dimensions differ");

  LaplacePosterior post;
  post.kernel = kernel;
  post.likelihood = likelihood;
  post.dataset = data;
  post.points = stack_points(data.visited());
  const Eigen::Index m = post.points.cols();

  const Eigen::MatrixXd k0 = gram_matrix(kernel, post.points);
  bool factored = false;
  for (double rel : kJitterLadder) {
    post.jitter = rel * kernel.output_scale;
    post.prior_gram = k0;
    post.prior_gram.diagonal().array() += post.jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(post.prior_gram);
    if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all()) {
      post.prior_chol = llt.matrixL();
      factored = true;
      break;
    }
  }
  if (!factored) throw NumericalError("prior Gram matrix is not positive definite after jitter escalation");

  const auto& lmat = post.prior_chol;
  const Eigen::MatrixXd e = incidence_times(data, lmat);

  Eigen::VectorXd a = Eigen::VectorXd::Zero(m);
  if (opts.warm_alpha && opts.warm_alpha->size() == m) a = *opts.warm_alpha;
  Eigen::VectorXd f = post.prior_gram * a;

  auto objective = [&](const Eigen::VectorXd& aa, const Eigen::VectorXd& ff) {
    return log_likelihood(data, likelihood, ff) - 0.5 * aa.dot(ff);
  };

  RecordTerms terms = record_terms(data, likelihood, f);
  double psi = terms.log_lik - 0.5 * a.dot(f);
  double grad_norm = (terms.gradient - a).lpNorm<Eigen::Infinity>();
  // a can be large when the gram matrix is ill-conditioned; the stopping test scales with it.
  auto tolerance = [&] { return opts.gradient_tolerance * std::max(1.0, a.lpNorm<Eigen::Infinity>()); };
  int it = 0;
  for (; it < opts.max_iterations && grad_norm >= tolerance(); ++it) {
    Eigen::MatrixXd c = e.transpose() * terms.weights.asDiagonal() * e;
    c.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> c_llt(c);
    const Eigen::VectorXd b = incidence_transpose(data, terms.weights.cwiseProduct(incidence(data, f)), m) + terms.gradient;
    const Eigen::VectorXd inner = c_llt.solve(lmat.transpose() * b);
    const Eigen::VectorXd a_newton = b - incidence_transpose(data, terms.weights.cwiseProduct(e * inner), m);

    const Eigen::VectorXd step = a_newton - a;
    double t = 1.0;
    Eigen::VectorXd a_best = a, f_best = f;
    double psi_best = psi;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd a_try = a + t * step;
      const Eigen::VectorXd f_try = post.prior_gram * a_try;
      const double psi_try = objective(a_try, f_try);
      if (std::isfinite(psi_try) && psi_try >= psi_best) {
        a_best = a_try;
        f_best = f_try;
        psi_best = psi_try;
        break;
      }
    }
    const bool stalled = (a_best - a).lpNorm<Eigen::Infinity>() == 0.0;
    a = std::move(a_best);
    f = std::move(f_best);
    psi = psi_best;
    terms = record_terms(data, likelihood, f);
    grad_norm = (terms.gradient - a).lpNorm<Eigen::Infinity>();
    if (stalled) break;
  }
  if (grad_norm >= tolerance()) {
    throw NumericalError("Laplace mode search did not converge (gradient max-norm " +
                             std::to_string(grad_norm) + ")",
                         grad_norm);
  }

  post.mode = f;
  post.alpha = a;
  post.newton_iterations = it;
  post.gradient_norm = grad_norm;
  post.curvature = curvature_matrix(data, terms.weights, m);

  Eigen::MatrixXd c = e.transpose() * terms.weights.asDiagonal() * e;
  c.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> c_llt(c);
  post.c_chol = c_llt.matrixL();
  // Sigma = L C^-1 L^T = B^T B with B = R^-1 L^T.
  const Eigen::MatrixXd bt = post.c_chol.triangularView<Eigen::Lower>().solve(lmat.transpose());
  Eigen::MatrixXd cov = bt.transpose() * bt;
  post.covariance = 0.5 * (cov + cov.transpose());
  post.log_marginal = terms.log_lik - 0.5 * a.dot(f) - post.c_chol.diagonal().array().log().sum();
  return post;
}

Predictive predict(const LaplacePosterior& post, const Eigen::MatrixXd& queries) {
  if (queries.rows() != post.points.rows()) throw ContractViolation("predict: dimension mismatch");
  const Eigen::MatrixXd ks = kernels::omp::cross_covariance(post.kernel, post.points, queries);
  Predictive out;
  out.mean = ks.transpose() * post.alpha;
  const Eigen::MatrixXd v = post.prior_chol.triangularView<Eigen::Lower>().solve(ks);
  const Eigen::MatrixXd w = post.c_chol.triangularView<Eigen::Lower>().solve(v);
  Eigen::MatrixXd cov = kernels::omp::cross_covariance(post.kernel, queries, queries);
  cov.noalias() -= v.transpose() * v;
  cov.noalias() += w.transpose() * w;
  out.covariance = 0.5 * (cov + cov.transpose());
  for (Eigen::Index i = 0; i < out.covariance.rows(); ++i) {
    out.covariance(i, i) = std::max(out.covariance(i, i), 0.0);
  }
  return out;
}

Predictive predict(const LaplacePosterior& post, const std::vector<Configuration>& queries) {
  for (const auto& q : queries) {
    if (static_cast<Eigen::Index>(q.dim()) != post.points.rows()) throw ContractViolation("predict: dimension mismatch");
  }
  return predict(post, stack_points(queries));
}

double predict_mean(const LaplacePosterior& post, const Eigen::Ref<const Eigen::VectorXd>& x) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < post.points.cols(); ++i) {
    acc += post.alpha[i] * kernel_eval(post.kernel, x, post.points.col(i));
  }
  return acc;
}

Eigen::VectorXd predict_mean_grad(const LaplacePosterior& post, const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index i = 0; i < post.points.cols(); ++i) {
    g += post.alpha[i] * kernel_grad_x(post.kernel, x, post.points.col(i));
  }
  return g;
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov) {
  const Eigen::Index n = cov.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  const double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale;
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = cov(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d <= tol) continue;  // numerically dependent direction: zero column
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = cov(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Eigen::MatrixXd sample_utility(const LaplacePosterior& post, const std::vector<Configuration>& queries,
                               std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw ContractViolation("sample_utility needs n_samples >= 1");
  const Predictive pred = predict(post, queries);
  const Eigen::MatrixXd factor = psd_factor(pred.covariance);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5a3bu};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  const auto n = static_cast<Eigen::Index>(queries.size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_samples), n);
  Eigen::VectorXd z(n);
  for (Eigen::Index s = 0; s < out.rows(); ++s) {
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
    out.row(s) = (pred.mean + factor * z).transpose();
  }
  return out;
}

}  // namespace prefopt
