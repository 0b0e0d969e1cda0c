#include "fmsc/estimators.hpp"

#include <cmath>

namespace fmsc {

namespace {

// solve A x = b for symmetric positive definite A, failing loudly
arma::mat solve_spd(const arma::mat& a, const arma::mat& b, const char* what) {
  arma::mat out;
  if (!arma::solve(out, a, b, arma::solve_opts::likely_sympd + arma::solve_opts::no_approx))
    throw rank_error(std::string("singular system in ") + what);
  return out;
}

arma::mat inv_spd(const arma::mat& a, const char* what) {
  arma::mat out;
  if (!arma::inv_sympd(out, a)) {
    // inv_sympd is strict about conditioning; fall back to a generic inverse
    // before declaring the matrix singular
    if (!arma::inv(out, a)) throw rank_error(std::string("singular matrix in ") + what);
  }
  return out;
}

}  // namespace

EstimateResult fit_ols(const arma::vec& y, const arma::mat& X) {
  if (y.n_elem != X.n_rows) throw dimension_error("fit_ols: y and X row counts disagree");
  const double n = static_cast<double>(y.n_elem);
  arma::mat xtx = X.t() * X;
  arma::mat xtx_inv = inv_spd(xtx, "fit_ols (X'X)");
  EstimateResult res;
  res.beta = xtx_inv * (X.t() * y);
  res.residuals = y - X * res.beta;
  res.sigma2 = arma::dot(res.residuals, res.residuals) / n;
  res.vcov = res.sigma2 * xtx_inv;
  res.se = arma::sqrt(res.vcov.diag());
  res.method = "ols";
  return res;
}

EstimateResult fit_tsls(const arma::vec& y, const arma::mat& X, const arma::mat& Z) {
  if (y.n_elem != X.n_rows || y.n_elem != Z.n_rows)
    throw dimension_error("fit_tsls: row counts disagree");
  if (Z.n_cols < X.n_cols) throw rank_error("fit_tsls: fewer instruments than regressors");
  const double n = static_cast<double>(y.n_elem);
  arma::mat ztz = Z.t() * Z;
  arma::mat zx = Z.t() * X;       // (p+q) x r
  arma::vec zy = Z.t() * y;
  arma::mat xpzx = zx.t() * solve_spd(ztz, zx, "fit_tsls (Z'Z)");
  arma::vec xpzy = zx.t() * solve_spd(ztz, zy, "fit_tsls (Z'Z)");
  arma::mat xpzx_inv = inv_spd(xpzx, "fit_tsls (X'PzX)");
  EstimateResult res;
  res.beta = xpzx_inv * xpzy;
  res.residuals = y - X * res.beta;  // original X, not the first-stage fit
  res.sigma2 = arma::dot(res.residuals, res.residuals) / n;
  res.vcov = res.sigma2 * xpzx_inv;
  res.se = arma::sqrt(res.vcov.diag());
  res.method = "tsls";
  return res;
}

EstimateResult fit_candidate(const Dataset& d, const MomentSet& s) {
  EstimateResult res;
  if (s.kind == CandidateKind::OlsCandidate) {
    if (d.kind != ProblemKind::OlsVsTsls)
      throw config_error("fit_candidate: OLS candidate on a non-OLS-vs-TSLS dataset");
    res = fit_ols(d.y, d.X);
  } else {
    arma::mat z = d.Z();
    SelectionMatrix xi = selection_matrix(s, d.p(), d.q());
    res = fit_tsls(d.y, d.X, z.cols(xi.idx));
  }
  res.moment_set = s.id;
  return res;
}

SigmaEstimates sigma_estimates(const Dataset& d, bool ols_residuals) {
  if (d.r() != 1) throw config_error("sigma_estimates: scalar regressor required");
  const double n = static_cast<double>(d.n());
  const arma::vec x = d.X.col(0);
  SigmaEstimates sig;
  sig.sigma_x_sq = arma::dot(x, x) / n;
  arma::vec zx = d.Z1.t() * x;
  arma::vec sol;
  if (!arma::solve(sol, d.Z1.t() * d.Z1, zx, arma::solve_opts::likely_sympd + arma::solve_opts::no_approx))
    throw rank_error("sigma_estimates: Z'Z singular");
  sig.gamma_sq = arma::dot(zx, sol) / n;
  if (!(sig.gamma_sq > 1e-12 * sig.sigma_x_sq))
    throw weak_instrument_error("sigma_estimates: first-stage fit is numerically zero");
  sig.sigma_v_sq = sig.sigma_x_sq - sig.gamma_sq;
  if (ols_residuals) {
    sig.sigma_eps_sq = fit_ols(d.y, d.X).sigma2;
  } else {
    sig.sigma_eps_sq = fit_tsls(d.y, d.X, d.Z1).sigma2;
  }
  return sig;
}

arma::mat omega_centered(const Dataset& d, const MomentSet& s, const arma::vec& residuals) {
  if (residuals.n_elem != d.n()) throw dimension_error("omega_centered: residual length");
  const double n = static_cast<double>(d.n());
  SelectionMatrix xi = selection_matrix(s, d.p(), d.q());
  arma::mat zs = d.Z().cols(xi.idx);           // n x |S|
  arma::mat g = zs.each_col() % residuals;     // rows are u_i z_iS'
  arma::rowvec gbar = arma::sum(g, 0) / n;
  return g.t() * g / n - gbar.t() * gbar;
}

arma::mat omega_assembled(const Dataset& d) {
  const arma::uword p = d.p(), q = d.q();
  const double n = static_cast<double>(d.n());

  arma::vec u_valid = fit_tsls(d.y, d.X, d.Z1).residuals;
  arma::mat z1u = d.Z1.each_col() % u_valid;
  arma::mat omega11 = z1u.t() * z1u / n;  // uncentered, baseline assumed valid

  if (q == 0) return omega11;

  MomentSet full;
  full.id = "full";
  full.kind = CandidateKind::IvSubset;
  for (arma::uword j = 0; j < p + q; ++j) full.included.push_back(j);
  arma::vec u_full = fit_candidate(d, full).residuals;
  arma::mat omega = omega_centered(d, full, u_full);
  omega.submat(0, 0, p - 1, p - 1) = omega11;
  return omega;
}

}  // namespace fmsc
