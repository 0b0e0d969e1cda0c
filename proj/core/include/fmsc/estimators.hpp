#pragma once

// OLS, TSLS and subset-TSLS estimation plus the covariance estimators the
// selection criteria consume. All formulas divide by n (no degrees-of-freedom
// corrections) and add no intercept: variables are assumed demeaned or the
// caller includes a constant column explicitly.

#include <armadillo>

#include "fmsc/types.hpp"

namespace fmsc {

// First-stage variance decomposition for the scalar-regressor problem.
struct SigmaEstimates {
  double sigma_x_sq = 0.0;    // x'x / n
  double gamma_sq = 0.0;      // x'P_Z x / n over the baseline instruments
  double sigma_v_sq = 0.0;    // sigma_x_sq - gamma_sq
  double sigma_eps_sq = 0.0;  // TSLS residual variance
};

// beta = (X'X)^{-1} X'y; vcov = sigma2 (X'X)^{-1} with sigma2 = RSS/n.
EstimateResult fit_ols(const arma::vec& y, const arma::mat& X);

// beta = (X'P_Z X)^{-1} X'P_Z y; vcov = sigma2 (X'P_Z X)^{-1}; residuals use
// the original X, not the first-stage fit.
EstimateResult fit_tsls(const arma::vec& y, const arma::mat& X, const arma::mat& Z);

// Dispatches on the candidate kind: the OLS candidate of an OLS-vs-TSLS
// dataset goes through fit_ols, everything else is TSLS on the selected
// instrument columns Z * Xi_S'.
EstimateResult fit_candidate(const Dataset& d, const MomentSet& s);

// sigma_eps_sq uses TSLS residuals by default; the flag switches to OLS
// residuals for sensitivity runs.
SigmaEstimates sigma_estimates(const Dataset& d, bool ols_residuals = false);

// Centered heteroskedasticity-robust estimator for the moment conditions a
// candidate uses: n^{-1} sum u_i^2 z_iS z_iS' - (n^{-1} sum u_i z_iS)(...)'.
arma::mat omega_centered(const Dataset& d, const MomentSet& s, const arma::vec& residuals);

// Full (p+q) x (p+q) matrix: centered estimator with full-set residuals,
// upper-left p x p block overwritten by the uncentered estimator with
// valid-estimator residuals (imposes validity of the baseline block).
arma::mat omega_assembled(const Dataset& d);

}  // namespace fmsc
