#pragma once

// Competing moment-selection procedures: the J statistic and its penalized
// variants (GMM-BIC/HQ/AIC), the Durbin-Hausman-Wu pretest, the downward
// J-test, the canonical-correlations criterion, and the combined rule.

#include <armadillo>

#include <cstddef>
#include <string>
#include <vector>

#include "fmsc/types.hpp"

namespace fmsc {

enum class MscFlavor { Bic, HannanQuinn, Aic };

// kappa_n: log n (BIC), 2.01 log log n (HQ), 2 (AIC).
double msc_kappa(MscFlavor flavor, arma::uword n);

struct JStatistic {
  double stat = 0.0;
  arma::uword df = 0;     // |S| - r
  double p_value = 1.0;   // survival function; 1 when just-identified
  bool pinv_fallback = false;  // Omega_S was near singular
};

// J_n(S) = n fbar_S' Omega_S^{-1} fbar_S with the candidate's own TSLS
// residuals and the centered Omega_S. Near-singular Omega_S falls back to a
// Moore-Penrose inverse and flags it rather than aborting a simulation grid.
JStatistic j_statistic(const Dataset& d, const MomentSet& s);

struct CriterionValue {
  std::string candidate;
  double j_stat = 0.0;
  double penalty = 0.0;  // subtracted: value = j_stat - penalty
  double value = 0.0;
};

struct CriterionSelection {
  std::vector<CriterionValue> values;
  std::size_t selected = 0;
};

// MSC(S) = J_n(S) - (|S| - r) kappa_n, minimized. Ties prefer the larger set
// (the penalty acts as a bonus for more conditions), then the lower index.
CriterionSelection gmm_msc_select(const Dataset& d, const std::vector<MomentSet>& candidates,
                                  MscFlavor flavor);

struct DhwResult {
  double stat = 0.0;
  bool select_ols = false;
};

// T = n (beta_OLS - beta_TSLS)^2 / (sigma_eps^2 (1/gamma^2 - 1/sigma_x^2)).
// Identical to tau^2 / V, so critical value 2 reproduces the focused
// criterion's choice exactly.
DhwResult dhw_test(const Dataset& d, double critical_value);

// Keeps the largest candidate not rejected by its J test at level alpha;
// smallest candidate if everything is rejected. Candidates are scanned in
// order of decreasing size (ties by lattice order).
struct DownwardJResult {
  std::size_t selected = 0;
  std::vector<JStatistic> j_values;  // parallel to candidates
};
DownwardJResult downward_j_select(const Dataset& d, const std::vector<MomentSet>& candidates,
                                  double alpha);

// CCIC(S) = n log(1 - R^2(S)) + (|S| - r) kappa_n where R^2(S) is the
// (uncentered) first-stage fit of x on the candidate's instruments. Scalar
// regressor only. Minimized; ties prefer the smaller set.
struct CcicSelection {
  std::vector<CriterionValue> values;  // j_stat field holds n log(1 - R^2)
  std::size_t selected = 0;
  bool r2_clamped = false;  // some candidate had R^2 >= 1 numerically
};
CcicSelection ccic_select(const Dataset& d, const std::vector<MomentSet>& candidates,
                          MscFlavor flavor);

// Valid unless both the GMM criterion and the CCIC pick the full set.
// Defined for the two-candidate lattice {valid, full} only.
struct CombinedSelection {
  bool full = false;
  bool gmm_full = false;
  bool ccic_full = false;
};
CombinedSelection combined_select(const Dataset& d, MscFlavor flavor);

}  // namespace fmsc
