#pragma once

// Post-selection confidence intervals: the two-step simulation interval (worst
// case over a confidence region for tau), its one-step shortcut (tau fixed at
// tau_hat), and the naive textbook interval, plus the numeric primitives they
// need (chi-square quantiles, multivariate normal simulation, the tau region).

#include <armadillo>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fmsc/criteria.hpp"
#include "fmsc/fmsc.hpp"
#include "fmsc/rng.hpp"
#include "fmsc/types.hpp"

namespace fmsc {

// Regularized lower incomplete gamma P(a, x) (series / continued fraction).
double reg_lower_gamma(double a, double x);

double chi_sq_cdf(arma::uword df, double x);
double chi_sq_sf(arma::uword df, double x);

// Inverse CDF via Newton with bisection safeguard, |quantile error| <= 1e-10.
double chi_sq_quantile(arma::uword df, double prob);

// Two-sided standard normal critical value z_{1-alpha/2} = sqrt of the
// chi-square(1) quantile at 1-alpha (same numeric engine).
double z_two_sided(double alpha);

// J rows of N(0, omega) via the upper Cholesky factor; a failed factorization
// escalates a diagonal jitter up to 1e-8 * trace before giving up with
// not_psd_error. A zero matrix yields zero draws.
arma::mat mvn_draws(const arma::mat& omega, arma::uword J, Philox& rng);

// Confidence region for tau at level 1-delta:
//   q = 1  -> 100 equally spaced points spanning tau_hat +/- sqrt(chi2_1(delta) V)
//   q > 1  -> search seeds: tau_hat, the 2q ellipsoid axis endpoints, and
//             `budget` rng-generated points spread through the ellipsoid.
// Every point satisfies Delta_n(tau_hat, t) <= chi2_q(delta).
std::vector<arma::vec> tau_region(const arma::vec& tau_hat, const arma::mat& tau_cov,
                                  double delta, arma::uword budget, Philox& rng);

// Which selection/averaging rule the simulated limit draws mimic.
enum class WeightRule { FmscIndicator, MinAmseAverage, DownwardJ, GmmMsc };

struct LimitOptions {
  WeightRule rule = WeightRule::FmscIndicator;
  double j_alpha = 0.1;                  // DownwardJ level
  MscFlavor flavor = MscFlavor::Bic;     // GmmMsc flavor
};

// Simulates the limit experiment of the selected/averaged target estimate:
// for each draw M_j ~ N(0, Omega) and a hypothesized tau*,
//   Lambda_j = grad_mu' [ sum_S phi_S(tau*, M_j) k_S Xi_S ] (M_j + (0, tau*)),
// with the weights phi_S recomputed per draw from the pseudo bias estimate
// B(tau*, M_j) = (Psi M_j + tau*)(Psi M_j + tau*)' - Psi Omega Psi'.
//
// Everything that does not depend on tau* is precomputed, so evaluating a new
// region point costs O(J * #candidates) scalar work. The draws are shared
// across region points (common random numbers).
class LimitSimulator {
 public:
  LimitSimulator(const ProblemContext& ctx, const arma::mat& draws, LimitOptions opts);

  // Lambda draws at one region point; J-vector.
  arma::vec lambda(const arma::vec& tau_star) const;

  arma::uword draw_count() const { return J_; }

 private:
  const ProblemContext& ctx_;
  LimitOptions opts_;
  arma::uword J_ = 0;
  arma::uword q_ = 0;
  double kappa_ = 0.0;
  // per candidate, tau*-independent pieces
  std::vector<arma::vec> d_;        // a_S . M_j
  std::vector<arma::vec> g_;        // (Psi' a_Sh) . M_j
  std::vector<arma::vec> ah_;       // suspect part of a_S
  std::vector<double> var_term_;    // a_S' Omega a_S
  std::vector<double> pp_term_;     // a_Sh' Psi Omega Psi' a_Sh
  std::vector<arma::uword> sizes_;  // moment counts, for tie rules
  std::vector<arma::uword> df_;     // |S| - r
  std::vector<double> jcrit_;       // DownwardJ acceptance thresholds
  std::vector<std::size_t> order_;  // DownwardJ scan order: size descending
  std::vector<arma::mat> j_base_;   // r_proj * M' per candidate (|S| x J)
  std::vector<arma::mat> j_rproj_;  // r_proj suspect columns (|S| x q)
  arma::vec psi_m_;                 // q=1 MinAmse: (Psi M_j) scalars
  double v_hat_ = 0.0;              // Psi Omega Psi' (scalar case)
  std::size_t i_ols_ = 0, i_tsls_ = 0;
};

enum class CiMethod { Naive, OneStep, TwoStep };

struct CiResult {
  double lower = 0.0;
  double upper = 0.0;
  CiMethod method = CiMethod::TwoStep;
  double alpha = 0.0;
  double delta = 0.0;
  arma::uword draws_j = 0;
  arma::uword region_points = 0;
  double a_min = 0.0;  // worst-case lower quantile of Lambda
  double b_max = 0.0;  // worst-case upper quantile

  double width() const { return upper - lower; }
  bool contains(double x) const { return lower <= x && x <= upper; }
};

struct CiOptions {
  double alpha = 0.05;
  double delta = 0.05;
  arma::uword draws = 1000;
  arma::uword region_budget = 2000;
  // pattern-search objective evaluations per bound (vector tau only)
  arma::uword search_budget = 2000;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // base stream; draws/region use purpose bytes
  LimitOptions limit;
};

// mu_hat is the realized post-selection (or averaged) estimate the interval
// centers on; it must match the weight rule in opts.limit.
CiResult two_step_ci(const ProblemContext& ctx, double mu_hat, const CiOptions& opts);

// Two-step with the region collapsed to {tau_hat}: cheaper, not guaranteed
// valid. delta is ignored.
CiResult one_step_ci(const ProblemContext& ctx, double mu_hat, const CiOptions& opts);

// estimate +/- z_{1-alpha/2} se.
CiResult naive_ci(double estimate, double se, double alpha);

// Equal-tailed empirical quantile, linear interpolation on order statistics.
double empirical_quantile(const arma::vec& sorted_values, double prob);

}  // namespace fmsc
