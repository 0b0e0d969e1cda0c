#include "fmsc/averaging.hpp"

#include <algorithm>
#include <cmath>

#include "fmsc/fmsc.hpp"

namespace fmsc {

double moment_average(const std::vector<double>& weights, const std::vector<double>& estimates) {
  if (weights.empty() || weights.size() != estimates.size())
    throw dimension_error("moment_average: weight/estimate length mismatch");
  double sum = 0.0, avg = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    sum += weights[i];
    avg += weights[i] * estimates[i];
  }
  if (std::abs(sum - 1.0) > kWeightSumTol)
    throw config_error("moment_average: weights do not sum to one");
  return avg;
}

std::vector<double> exponential_weights(const std::vector<double>& msc_values, double kappa) {
  if (msc_values.empty()) throw config_error("exponential_weights: empty criterion list");
  if (!(kappa >= 0.0)) throw config_error("exponential_weights: kappa must be nonnegative");
  const double lo = *std::min_element(msc_values.begin(), msc_values.end());
  std::vector<double> w(msc_values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(-0.5 * kappa * (msc_values[i] - lo));
    sum += w[i];
  }
  for (double& wi : w) wi /= sum;
  return w;
}

std::vector<double> indicator_weights(const std::vector<double>& criterion_values,
                                      const std::vector<arma::uword>& n_conditions) {
  std::size_t best = argmin_with_tie_rule(criterion_values, n_conditions);
  std::vector<double> w(criterion_values.size(), 0.0);
  w[best] = 1.0;
  return w;
}

double omega_star_plugin(const SigmaEstimates& sig, double tau_hat) {
  const double v = sig.sigma_eps_sq * sig.sigma_v_sq * sig.sigma_x_sq / sig.gamma_sq;
  if (!(v > 0.0)) throw degenerate_variance_error("omega_star_plugin: degenerate bias variance");
  return 1.0 / (1.0 + std::max(0.0, tau_hat * tau_hat - v) / v);
}

AvgOlsTsls avg_ols_tsls(const Dataset& d) {
  if (d.kind != ProblemKind::OlsVsTsls || d.r() != 1 || d.q() != 1)
    throw config_error("avg_ols_tsls: needs OLS-vs-TSLS wiring with scalar x");
  SigmaEstimates sig = sigma_estimates(d);
  AvgOlsTsls res;
  res.omega_star = omega_star_plugin(sig, arma::as_scalar(tau_hat_iv(d)));
  res.beta_ols = arma::as_scalar(fit_ols(d.y, d.X).beta);
  res.beta_tsls = arma::as_scalar(fit_tsls(d.y, d.X, d.Z1).beta);
  res.beta_avg = res.omega_star * res.beta_ols + (1.0 - res.omega_star) * res.beta_tsls;
  return res;
}

}  // namespace fmsc
