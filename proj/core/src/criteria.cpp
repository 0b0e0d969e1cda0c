#include "fmsc/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmsc/estimators.hpp"
#include "fmsc/inference.hpp"

namespace fmsc {

double msc_kappa(MscFlavor flavor, arma::uword n) {
  if (n < 3) throw config_error("msc_kappa: n too small for a log-scale penalty");
  switch (flavor) {
    case MscFlavor::Bic:
      return std::log(static_cast<double>(n));
    case MscFlavor::HannanQuinn:
      return 2.01 * std::log(std::log(static_cast<double>(n)));
    case MscFlavor::Aic:
      return 2.0;
  }
  throw config_error("msc_kappa: unknown flavor");
}

JStatistic j_statistic(const Dataset& d, const MomentSet& s) {
  EstimateResult fit = fit_candidate(d, s);
  SelectionMatrix xi = selection_matrix(s, d.p(), d.q());
  const double n = static_cast<double>(d.n());
  arma::vec fbar = d.Z().cols(xi.idx).t() * fit.residuals / n;
  arma::mat omega = omega_centered(d, s, fit.residuals);

  JStatistic js;
  js.df = s.size() - d.r();

  arma::vec eval;
  arma::mat evec;
  if (!arma::eig_sym(eval, evec, omega))
    throw rank_error("j_statistic: eigendecomposition failed for " + s.id);
  const double lmax = eval.max();
  js.pinv_fallback = !(lmax > 0.0) || eval.min() <= kRankTol * lmax;
  // dropping the sub-tolerance eigendirections is a no-op when omega is well
  // conditioned and a Moore-Penrose inverse when it is not
  arma::vec w = evec.t() * fbar;
  double quad = 0.0;
  for (arma::uword i = 0; i < eval.n_elem; ++i)
    if (eval(i) > kRankTol * lmax) quad += w(i) * w(i) / eval(i);
  js.stat = n * quad;
  js.p_value = js.df == 0 ? 1.0 : chi_sq_sf(js.df, js.stat);
  return js;
}

CriterionSelection gmm_msc_select(const Dataset& d, const std::vector<MomentSet>& candidates,
                                  MscFlavor flavor) {
  if (candidates.empty()) throw config_error("gmm_msc_select: no candidates");
  const double kappa = msc_kappa(flavor, d.n());
  CriterionSelection sel;
  sel.values.reserve(candidates.size());
  for (const MomentSet& s : candidates) {
    CriterionValue v;
    v.candidate = s.id;
    v.j_stat = j_statistic(d, s).stat;
    v.penalty = static_cast<double>(s.size() - d.r()) * kappa;
    v.value = v.j_stat - v.penalty;
    sel.values.push_back(v);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < sel.values.size(); ++i) {
    if (sel.values[i].value < sel.values[best].value) {
      best = i;
    } else if (sel.values[i].value == sel.values[best].value &&
               candidates[i].size() > candidates[best].size()) {
      best = i;
    }
  }
  sel.selected = best;
  return sel;
}

DhwResult dhw_test(const Dataset& d, double critical_value) {
  if (d.kind != ProblemKind::OlsVsTsls || d.r() != 1 || d.q() != 1)
    throw config_error("dhw_test: needs OLS-vs-TSLS wiring with scalar x");
  SigmaEstimates sig = sigma_estimates(d);
  const double denom = sig.sigma_eps_sq * (1.0 / sig.gamma_sq - 1.0 / sig.sigma_x_sq);
  if (!(denom > 0.0)) throw degenerate_variance_error("dhw_test: degenerate contrast variance");
  const double b_ols = arma::as_scalar(fit_ols(d.y, d.X).beta);
  const double b_tsls = arma::as_scalar(fit_tsls(d.y, d.X, d.Z1).beta);
  DhwResult res;
  res.stat = static_cast<double>(d.n()) * (b_ols - b_tsls) * (b_ols - b_tsls) / denom;
  res.select_ols = res.stat < critical_value;
  return res;
}

DownwardJResult downward_j_select(const Dataset& d, const std::vector<MomentSet>& candidates,
                                  double alpha) {
  if (candidates.empty()) throw config_error("downward_j_select: no candidates");
  DownwardJResult res;
  res.j_values.reserve(candidates.size());
  for (const MomentSet& s : candidates) res.j_values.push_back(j_statistic(d, s));

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].size() > candidates[b].size();
  });
  for (std::size_t idx : order) {
    if (res.j_values[idx].p_value > alpha) {
      res.selected = idx;
      return res;
    }
  }
  // everything rejected: fall back to the smallest candidate
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i].size() < candidates[best].size()) best = i;
  res.selected = best;
  return res;
}

CcicSelection ccic_select(const Dataset& d, const std::vector<MomentSet>& candidates,
                          MscFlavor flavor) {
  if (candidates.empty()) throw config_error("ccic_select: no candidates");
  if (d.r() != 1) throw config_error("ccic_select: scalar regressor required");
  const double n = static_cast<double>(d.n());
  const double kappa = msc_kappa(flavor, d.n());
  const arma::vec x = d.X.col(0);
  const double xx = arma::dot(x, x);
  if (!(xx > 0.0)) throw degenerate_variance_error("ccic_select: zero regressor");
  arma::mat z = d.Z();

  CcicSelection sel;
  sel.values.reserve(candidates.size());
  for (const MomentSet& s : candidates) {
    SelectionMatrix xi = selection_matrix(s, d.p(), d.q());
    arma::mat zs = z.cols(xi.idx);
    arma::vec zx = zs.t() * x;
    arma::vec sol;
    if (!arma::solve(sol, zs.t() * zs, zx, arma::solve_opts::likely_sympd + arma::solve_opts::no_approx))
      throw rank_error("ccic_select: singular instrument Gram matrix for " + s.id);
    double r2 = arma::dot(zx, sol) / xx;  // uncentered first-stage fit
    if (r2 >= 1.0) {
      r2 = 1.0 - 1e-12;
      sel.r2_clamped = true;
    }
    CriterionValue v;
    v.candidate = s.id;
    v.j_stat = n * std::log1p(-r2);
    v.penalty = -static_cast<double>(s.size() - d.r()) * kappa;  // added, not subtracted
    v.value = v.j_stat - v.penalty;
    sel.values.push_back(v);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < sel.values.size(); ++i) {
    if (sel.values[i].value < sel.values[best].value) {
      best = i;
    } else if (sel.values[i].value == sel.values[best].value &&
               candidates[i].size() < candidates[best].size()) {
      best = i;
    }
  }
  sel.selected = best;
  return sel;
}

CombinedSelection combined_select(const Dataset& d, MscFlavor flavor) {
  if (d.q() == 0) throw config_error("combined_select: no suspect conditions");
  MomentSet valid, full;
  valid.id = "valid";
  full.id = "full";
  for (arma::uword j = 0; j < d.p(); ++j) valid.included.push_back(j);
  for (arma::uword j = 0; j < d.p() + d.q(); ++j) full.included.push_back(j);
  std::vector<MomentSet> cands{valid, full};

  CombinedSelection cs;
  cs.gmm_full = gmm_msc_select(d, cands, flavor).selected == 1;
  cs.ccic_full = ccic_select(d, cands, flavor).selected == 1;
  cs.full = cs.gmm_full && cs.ccic_full;
  return cs;
}

}  // namespace fmsc
