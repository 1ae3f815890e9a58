#include "prefopt/likelihood.hpp"

#include "prefopt/errors.hpp"

#include <cmath>
#include <numbers>

namespace prefopt {

namespace {

// log Phi(z) and the inverse Mills ratio phi(z)/Phi(z).
struct LogNormalCdf {
  double log_cdf;
  double mills;
};

LogNormalCdf log_normal_cdf(double z) {
  const double log_pdf = -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
  if (z < -35.0) {
    // Asymptotic series of Phi for large negative z; erfc underflows past here.
    const double r = 1.0 / (z * z);
    const double series = 1.0 - r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r * r * r * r;
    return {log_pdf - std::log(-z) + std::log(series), -z / series};
  }
  const double log_cdf = z > 0.0 ? std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2))
                                 : std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  return {log_cdf, std::exp(log_pdf - log_cdf)};
}

}  // namespace

double logistic_cdf(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double LikelihoodConfig::z_scale() const {
  return family == LikelihoodFamily::logistic ? scale : scale * std::numbers::sqrt2;
}

void LikelihoodConfig::check() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ContractViolation("likelihood scale must be positive");
}

double pref_likelihood(const LikelihoodConfig& cfg, double u_winner, double u_loser) {
  const double z = (u_winner - u_loser) / cfg.z_scale();
  return cfg.family == LikelihoodFamily::logistic ? logistic_cdf(z) : normal_cdf(z);
}

LogLikDerivs log_pref_likelihood(const LikelihoodConfig& cfg, double gap) {
  const double c = cfg.z_scale();
  const double z = gap / c;
  double v, d1, d2, d3;
  if (cfg.family == LikelihoodFamily::logistic) {
    v = z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
    const double p = logistic_cdf(z);
    const double q = logistic_cdf(-z);
    d1 = q;
    d2 = -p * q;
    d3 = p * q * (p - q);
  } else {
    const auto [log_cdf, h] = log_normal_cdf(z);
    v = log_cdf;
    const double zh = z + h;
    d1 = h;
    d2 = -h * zh;
    d3 = h * (zh * zh + h * zh - 1.0);
  }
  return {v, d1 / c, d2 / (c * c), d3 / (c * c * c)};
}

}  // namespace prefopt
