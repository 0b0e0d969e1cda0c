#pragma once

// The focused selection criterion: asymptotic-bias estimation (tau_hat, Psi_hat),
// the generic AMSE estimate per candidate, its positive-part variant, and the
// two linear specializations (OLS vs TSLS, instrument subset choice).

#include <armadillo>

#include <cstddef>
#include <string>
#include <vector>

#include "fmsc/estimators.hpp"
#include "fmsc/types.hpp"

namespace fmsc {

// Matrix bundle consumed by the generic criterion formula.
//
// Sign convention: k_hat = n (X'Z_S W_S Z_S'X)^{-1} X'Z_S W_S with
// W_S = (Z_S'Z_S/n)^{-1}, the map satisfying
//   sqrt(n) (theta_hat_S - theta_0) ~ k_hat * Xi_S * sqrt(n) f_n(theta_0).
// The criterion is quadratic in k_hat so the overall sign is immaterial
// there, but the limit simulation in the inference module relies on this
// orientation (it drops the textbook leading minus).
struct GmmComponents {
  arma::vec grad_mu;   // r
  arma::mat k_hat;     // r x |S|
  SelectionMatrix xi;  // |S| rows, p+q cols
  arma::mat omega;     // (p+q) x (p+q), symmetric
  arma::mat psi;       // q x (p+q), right q x q block = identity
  arma::vec tau;       // q
  arma::uword n = 0;
};

struct FmscValue {
  double bias_sq = 0.0;  // may be negative
  double variance = 0.0;
  double fmsc = 0.0;
  double fmsc_pp = 0.0;  // max(0, bias_sq) + variance
};

struct FmscCandidateRow {
  std::string id;
  arma::uword n_conditions = 0;
  double bias_sq = 0.0;
  double variance = 0.0;
  double fmsc = 0.0;
  double fmsc_pp = 0.0;
};

struct FmscReport {
  std::vector<FmscCandidateRow> rows;
  arma::vec tau;
  arma::mat tau_cov;  // Psi Omega Psi'
  std::size_t selected = 0;     // index into rows
  std::size_t selected_pp = 0;  // positive-part selection

  const FmscCandidateRow& selected_row() const { return rows[selected]; }
};

// tau_hat = Z2' (y - X beta_valid) / sqrt(n), beta_valid from TSLS on Z1.
arma::vec tau_hat_iv(const Dataset& d);

// Psi_hat = [ -(Z2'X/n) k_valid | I_q ] with k_valid the valid-estimator
// k_hat; tau_hat is asymptotically N(tau, Psi Omega Psi').
arma::mat psi_hat_iv(const Dataset& d);

// tau tau' - Psi Omega Psi': asymptotically unbiased for tau tau', possibly
// indefinite.
arma::mat bias_matrix(const arma::vec& tau, const arma::mat& psi, const arma::mat& omega);

// grad_mu' k Xi { blockdiag(0_p, bias_matrix) + Omega } Xi' k' grad_mu,
// split into its bias-squared and variance pieces.
FmscValue fmsc_value(const GmmComponents& c);

// Closed forms of the scalar problem. Selects OLS iff tau^2 / V < 2, ties to
// TSLS (this specialized tie rule overrides the generic fewest-conditions
// rule; the two disagree only on the measure-zero equality event).
FmscReport fmsc_ols_vs_tsls(const Dataset& d);

// Generic machinery over an instrument-subset lattice.
FmscReport fmsc_choose_iv(const Dataset& d, const std::vector<MomentSet>& candidates,
                          arma::uword target_coef);

// Everything the inference module and the experiment harness need about one
// analysis: shared bias components plus per-candidate fits and criterion
// values. Built once per dataset, immutable afterwards.
struct CandidateContext {
  MomentSet set;
  SelectionMatrix xi;
  arma::mat k_hat;  // r x |S|
  EstimateResult fit;
  FmscValue value;
  arma::vec a;       // Xi' k_hat' grad_mu, the p+q direction the target loads on
  arma::mat r_proj;  // (I - P_S) Omega_S^{-1/2} Xi_S, for simulated J statistics
};

struct ProblemContext {
  arma::uword n = 0;
  arma::uword p = 0;
  arma::uword q = 0;
  arma::uword target = 0;
  arma::vec grad_mu;
  arma::mat omega;    // (p+q) x (p+q)
  arma::mat psi;      // q x (p+q)
  arma::vec tau;      // q
  arma::mat tau_cov;  // Psi Omega Psi'
  std::vector<CandidateContext> candidates;
  std::size_t fmsc_selected = 0;
  std::size_t fmsc_pp_selected = 0;

  double mu_hat(std::size_t candidate) const {
    return arma::dot(grad_mu, candidates[candidate].fit.beta);
  }
  double mu_fmsc() const { return mu_hat(fmsc_selected); }
  FmscReport report() const;
};

// OLS-vs-TSLS wiring. Omega here is the homoskedastic estimator
// sigma_eps^2 [Z1|x]'[Z1|x]/n, under which the generic matrix formula
// reproduces the closed forms of fmsc_ols_vs_tsls exactly, so the selection
// simulated inside the confidence intervals mirrors the actual rule.
ProblemContext make_ols_tsls_context(const Dataset& d);

// Choose-IV wiring: assembled heteroskedasticity-robust Omega.
ProblemContext make_choose_iv_context(const Dataset& d,
                                      const std::vector<MomentSet>& candidates,
                                      arma::uword target_coef);

// Shared tie rule: smallest criterion value wins; ties prefer fewer moment
// conditions, then the lower index (rows are in lattice order, so index
// order is id order).
std::size_t argmin_with_tie_rule(const std::vector<double>& values,
                                 const std::vector<arma::uword>& n_conditions);

}  // namespace fmsc
