#pragma once

namespace prefopt {

enum class LikelihoodFamily { logistic, probit };

/// Preference noise model. `scale` is lambda for the logistic model and sigma
/// for the probit model (P = Phi(du / (sigma * sqrt 2))).
struct LikelihoodConfig {
  LikelihoodFamily family = LikelihoodFamily::logistic;
  double scale = 1.0;

  static LikelihoodConfig logistic(double lambda = 1.0) { return {LikelihoodFamily::logistic, lambda}; }
  static LikelihoodConfig probit(double sigma = 1.0) { return {LikelihoodFamily::probit, sigma}; }

  // Divisor turning a utility gap into the standardized argument z.
  double z_scale() const;
  void check() const;
};

/// Probability that the winner is preferred given both utilities.
double pref_likelihood(const LikelihoodConfig& cfg, double u_winner, double u_loser);

/// log P and its first three derivatives with respect to the utility gap
/// (u_winner - u_loser). Finite for any finite gap.
struct LogLikDerivs {
  double value;
  double d1;
  double d2;
  double d3;
};
LogLikDerivs log_pref_likelihood(const LikelihoodConfig& cfg, double gap);

double logistic_cdf(double z);
double normal_cdf(double z);
double normal_pdf(double z);

}  // namespace prefopt
