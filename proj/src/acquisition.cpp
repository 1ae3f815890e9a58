#include "prefopt/acquisition.hpp"

#include "prefopt/errors.hpp"
#include "prefopt/parallel_kernels.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace prefopt {

namespace {

Eigen::MatrixXd sorted_columns(const Eigen::MatrixXd& batch) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(batch.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const auto ca = batch.col(a);
    const auto cb = batch.col(b);
    return std::lexicographical_compare(ca.begin(), ca.end(), cb.begin(), cb.end());
  });
  Eigen::MatrixXd out(batch.rows(), batch.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = batch.col(order[i]);
  return out;
}

// Order of a score vector: best first, lowest index among equals.
std::vector<std::size_t> ranking(const Eigen::VectorXd& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
  });
  return order;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& flat, Eigen::Index d) {
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), d, flat.size() / d);
}

// Projected ascent on the unit box. `grad` returns the gradient at x.
template <typename F, typename G>
Eigen::VectorXd box_ascent(Eigen::VectorXd x, double& fx, const F& f, const G& grad, int max_steps) {
  double scale = 0.1;
  for (int it = 0; it < max_steps; ++it) {
    const Eigen::VectorXd g = grad(x);
    const double gn = g.lpNorm<Eigen::Infinity>();
    if (!(gn > 1e-12)) break;
    bool improved = false;
    for (int h = 0; h < 12; ++h, scale *= 0.5) {
      const Eigen::VectorXd xn = (x + (scale / gn) * g).cwiseMax(0.0).cwiseMin(1.0);
      if ((xn - x).lpNorm<Eigen::Infinity>() < 1e-12) break;
      const double fn = f(xn);
      if (fn > fx) {
        x = xn;
        fx = fn;
        improved = true;
        break;
      }
    }
    if (!improved) break;
    scale = std::min(2.0 * scale, 0.25);
  }
  return x;
}

}  // namespace

void AcquisitionConfig::check() const {
  if (q < 1 || q > 3) throw ContractViolation("q must be 1, 2 or 3");
  if (mc_samples < 64) throw ContractViolation("mc_samples must be at least 64");
  if (restarts < 1 || raw_candidates < 1) throw ContractViolation("restarts and raw_candidates must be positive");
}

double expected_max_bivariate(double mean1, double mean2, double var1, double var2, double cov) {
  const double theta2 = var1 + var2 - 2.0 * cov;
  if (!(theta2 > 1e-24)) return std::max(mean1, mean2);
  const double theta = std::sqrt(theta2);
  const double alpha = (mean1 - mean2) / theta;
  return mean1 * normal_cdf(alpha) + mean2 * normal_cdf(-alpha) + theta * normal_pdf(alpha);
}

QeuboEvaluator::QeuboEvaluator(const LaplacePosterior& post, const AcquisitionConfig& cfg)
    : post_(post), cfg_(cfg) {
  cfg_.check();
  // Scrambled Sobol base samples pushed through the normal quantile.
  const boost::math::normal_distribution<double> normal;
  const auto base = sobol_unit(static_cast<std::size_t>(cfg.q), static_cast<std::size_t>(cfg.mc_samples),
                               cfg.seed ^ 0xe0b0u);
  constexpr double lo = 0x1p-54, hi = 1.0 - 0x1p-53;
  normals_.resize(cfg.mc_samples, cfg.q);
  for (Eigen::Index s = 0; s < normals_.rows(); ++s) {
    for (Eigen::Index i = 0; i < normals_.cols(); ++i) {
      normals_(s, i) = boost::math::quantile(normal, std::clamp(base[static_cast<std::size_t>(s)][i], lo, hi));
    }
  }
}

QeuboEstimate QeuboEvaluator::monte_carlo(const Eigen::MatrixXd& batch) const {
  if (batch.cols() != cfg_.q) throw ContractViolation("batch size differs from q");
  const Eigen::MatrixXd sorted = sorted_columns(batch);
  const Predictive pred = predict(post_, sorted);
  const Eigen::MatrixXd factor = psd_factor(pred.covariance);
  const Eigen::Index n = normals_.rows();
  double sum = 0.0, sum_sq = 0.0;
  for (Eigen::Index s = 0; s < n; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < cfg_.q; ++i) {
      double u = pred.mean[i];
      for (Eigen::Index k = 0; k <= i; ++k) u += factor(i, k) * normals_(s, k);
      best = std::max(best, u);
    }
    sum += best;
    sum_sq += best * best;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / static_cast<double>(n - 1));
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

QeuboEstimate QeuboEvaluator::estimate(const Eigen::MatrixXd& batch) const {
  if (batch.cols() != cfg_.q) throw ContractViolation("batch size differs from q");
  if (batch.rows() != post_.points.rows()) throw ContractViolation("batch has the wrong dimension");
  if (cfg_.analytic_fast_path && cfg_.q == 1) return {predict_mean(post_, batch.col(0)), 0.0};
  if (cfg_.analytic_fast_path && cfg_.q == 2) {
    const Predictive pred = predict(post_, sorted_columns(batch));
    return {expected_max_bivariate(pred.mean[0], pred.mean[1], pred.covariance(0, 0), pred.covariance(1, 1),
                                   pred.covariance(0, 1)),
            0.0};
  }
  return monte_carlo(batch);
}

QeuboEstimate qeubo_estimate(const LaplacePosterior& post, const std::vector<Configuration>& batch,
                             const AcquisitionConfig& cfg) {
  if (static_cast<int>(batch.size()) != cfg.q) throw ContractViolation("batch size differs from q");
  return QeuboEvaluator(post, cfg).estimate(stack_points(batch));
}

double qeubo_value(const LaplacePosterior& post, const std::vector<Configuration>& batch,
                   const AcquisitionConfig& cfg) {
  return qeubo_estimate(post, batch, cfg).value;
}

std::vector<Configuration> maximize_qeubo_continuous(const LaplacePosterior& post, const ParameterSpace& space,
                                                     const AcquisitionConfig& cfg) {
  if (space.is_grid()) throw ContractViolation("maximize_qeubo_continuous needs a continuous space");
  if (space.dim() != static_cast<std::size_t>(post.points.rows())) throw ContractViolation("space/posterior dimension mismatch");
  const QeuboEvaluator acq(post, cfg);
  const auto d = static_cast<Eigen::Index>(space.dim());
  const auto flat_dim = static_cast<std::size_t>(d * cfg.q);

  const auto raw = sobol_unit(flat_dim, static_cast<std::size_t>(cfg.raw_candidates), cfg.seed);
  auto value_of = [&](const Eigen::VectorXd& flat) { return acq(unflatten(flat, d)); };
  const Eigen::VectorXd raw_scores =
      kernels::omp::map_indexed(raw.size(), [&](std::size_t i) { return value_of(raw[i]); });
  const auto order = ranking(raw_scores);

  const std::size_t n_refine = std::min<std::size_t>(static_cast<std::size_t>(cfg.restarts), raw.size());
  std::vector<Eigen::VectorXd> refined(n_refine);
  Eigen::VectorXd refined_scores(static_cast<Eigen::Index>(n_refine));
  const double h = cfg.fd_step;
  auto fd_grad = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x, xm = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + h;
      xm[i] = x[i] - h;
      g[i] = (value_of(xp) - value_of(xm)) / (2.0 * h);
      xp[i] = xm[i] = x[i];
    }
    return g;
  };
  const auto n_ref = static_cast<long>(n_refine);
#pragma omp parallel for schedule(dynamic, 1)
  for (long r = 0; r < n_ref; ++r) {
    const std::size_t idx = order[static_cast<std::size_t>(r)];
    double fx = raw_scores[static_cast<Eigen::Index>(idx)];
    refined[static_cast<std::size_t>(r)] = box_ascent(raw[idx], fx, value_of, fd_grad, cfg.max_ascent_steps);
    refined_scores[r] = fx;
  }

  // Every refined start is at least as good as its raw batch, so the best
  // refined batch dominates every raw candidate.
  const std::size_t best = ranking(refined_scores).front();
  const Eigen::MatrixXd batch = unflatten(refined[best], d);
  std::vector<Configuration> out;
  for (Eigen::Index i = 0; i < batch.cols(); ++i) out.emplace_back(Eigen::VectorXd(batch.col(i)));
  return out;
}

Configuration maximize_qeubo_discrete(const LaplacePosterior& post, const std::vector<Configuration>& candidates,
                                      const AcquisitionConfig& cfg,
                                      const std::optional<Configuration>& fixed_first) {
  if (candidates.empty()) throw ContractViolation("maximize_qeubo_discrete needs candidates");
  AcquisitionConfig pair_cfg = cfg;
  pair_cfg.q = fixed_first ? 2 : 1;
  const QeuboEvaluator acq(post, pair_cfg);
  const auto d = post.points.rows();

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!fixed_first || !same_point(candidates[i], *fixed_first, ComparisonDataset::kDedupTolerance)) {
      eligible.push_back(i);
    }
  }
  if (eligible.empty()) throw ContractViolation("no candidate differs from the fixed first point");

  const Eigen::VectorXd scores = kernels::omp::map_indexed(eligible.size(), [&](std::size_t k) {
    const auto& c = candidates[eligible[k]];
    Eigen::MatrixXd batch(d, pair_cfg.q);
    if (fixed_first) {
      batch.col(0) = fixed_first->coords;
      batch.col(1) = c.coords;
    } else {
      batch.col(0) = c.coords;
    }
    return acq(batch);
  });
  return candidates[eligible[ranking(scores).front()]];
}

Recommendation recommend(const LaplacePosterior& post, const ParameterSpace& space, RecommendScope scope,
                         const RecommendOptions& opts, int iteration) {
  if (space.dim() != static_cast<std::size_t>(post.points.rows())) throw ContractViolation("space/posterior dimension mismatch");
  Recommendation rec;
  rec.iteration = iteration;
  switch (scope) {
    case RecommendScope::grid: {
      const auto grid = make_grid(space.is_grid() ? space : space.as_grid(51), opts.grid_cap);
      const Eigen::VectorXd means = kernels::omp::predictive_means(post, stack_points(grid));
      rec.point = grid[ranking(means).front()];
      break;
    }
    case RecommendScope::visited_only: {
      const auto& visited = post.dataset.visited();
      const Eigen::VectorXd means = kernels::omp::predictive_means(post, post.points);
      rec.point = visited[ranking(means).front()];
      break;
    }
    case RecommendScope::continuous: {
      std::vector<Eigen::VectorXd> seeds;
      for (Eigen::Index i = 0; i < post.points.cols(); ++i) seeds.emplace_back(post.points.col(i));
      for (auto& s : sobol_unit(space.dim(), static_cast<std::size_t>(opts.sobol_seeds), opts.seed)) seeds.push_back(std::move(s));
      Eigen::MatrixXd seed_mat(static_cast<Eigen::Index>(space.dim()), static_cast<Eigen::Index>(seeds.size()));
      for (std::size_t i = 0; i < seeds.size(); ++i) seed_mat.col(static_cast<Eigen::Index>(i)) = seeds[i];
      const Eigen::VectorXd means = kernels::omp::predictive_means(post, seed_mat);
      const auto order = ranking(means);

      auto f = [&](const Eigen::VectorXd& x) { return predict_mean(post, x); };
      auto g = [&](const Eigen::VectorXd& x) { return predict_mean_grad(post, x); };
      Eigen::VectorXd best_x = seeds[order.front()];
      double best_f = means[static_cast<Eigen::Index>(order.front())];
      const std::size_t n_refine = std::min<std::size_t>(static_cast<std::size_t>(opts.refine), seeds.size());
      for (std::size_t r = 0; r < n_refine; ++r) {
        double fx = means[static_cast<Eigen::Index>(order[r])];
        Eigen::VectorXd x = box_ascent(seeds[order[r]], fx, f, g, opts.max_ascent_steps);
        if (fx > best_f) {
          best_f = fx;
          best_x = std::move(x);
        }
      }
      rec.point = Configuration(std::move(best_x));
      break;
    }
  }
  rec.posterior_mean = predict_mean(post, rec.point.coords);
  return rec;
}

}  // namespace prefopt
