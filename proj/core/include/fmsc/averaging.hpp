#pragma once

// Moment-average estimators: weighted combinations of candidate estimates
// with indicator, exponential (softmin) or minimum-AMSE weights.

#include <armadillo>

#include <cstddef>
#include <vector>

#include "fmsc/estimators.hpp"
#include "fmsc/types.hpp"

namespace fmsc {

// Weights must sum to 1 within this tolerance.
inline constexpr double kWeightSumTol = 1e-12;

double moment_average(const std::vector<double>& weights, const std::vector<double>& estimates);

// softmin: w_S proportional to exp{-(kappa/2) msc_S}, max-subtracted for
// overflow safety. kappa = 0 gives uniform weights.
std::vector<double> exponential_weights(const std::vector<double>& msc_values, double kappa);

// 1 at the criterion minimizer, 0 elsewhere; ties prefer fewer moment
// conditions then lower index (pass n_conditions empty to fall back to pure
// index order).
std::vector<double> indicator_weights(const std::vector<double>& criterion_values,
                                      const std::vector<arma::uword>& n_conditions = {});

// Plug-in minimum-AMSE weight on OLS:
// omega* = [1 + max{0, (tau^2 - sigma_eps^2 sigma_x^2 (sigma_x^2/gamma^2 - 1)) / sigma_x^4}
//               / (sigma_eps^2 (1/gamma^2 - 1/sigma_x^2))]^{-1}.
double omega_star_plugin(const SigmaEstimates& sig, double tau_hat);

struct AvgOlsTsls {
  double beta_avg = 0.0;
  double omega_star = 0.0;
  double beta_ols = 0.0;
  double beta_tsls = 0.0;
};

// beta_avg = omega* beta_OLS + (1 - omega*) beta_TSLS.
AvgOlsTsls avg_ols_tsls(const Dataset& d);

}  // namespace fmsc
