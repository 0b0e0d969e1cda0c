#include "fmsc/fmsc.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace fmsc {

namespace {

arma::mat inv_spd(const arma::mat& a, const char* what) {
  arma::mat out;
  if (!arma::inv_sympd(out, a)) {
    if (!arma::inv(out, a)) throw rank_error(std::string("singular matrix in ") + what);
  }
  return out;
}

// k_hat = (X'Z_S/n W Z_S'X/n)^{-1} (X'Z_S/n) W with W = (Z_S'Z_S/n)^{-1};
// the n factors of the definition cancel at this scale
arma::mat k_hat_for(const arma::mat& X, const arma::mat& z, const SelectionMatrix& xi,
                    const std::string& id) {
  const double n = static_cast<double>(X.n_rows);
  arma::mat zs = z.cols(xi.idx);
  arma::mat w = inv_spd(zs.t() * zs / n, ("k_hat weighting, candidate " + id).c_str());
  arma::mat xzw = (X.t() * zs / n) * w;  // r x |S|
  return inv_spd(xzw * (zs.t() * X / n), ("k_hat normal matrix, candidate " + id).c_str()) * xzw;
}

// symmetric inverse square root, rejecting near-singular input
arma::mat inv_sqrt_spd(const arma::mat& a, const std::string& id) {
  arma::vec eval;
  arma::mat evec;
  if (!arma::eig_sym(eval, evec, a))
    throw rank_error("eigendecomposition failed, candidate " + id);
  const double lmax = eval.max();
  if (!(lmax > 0.0) || eval.min() <= kRankTol * lmax)
    throw degenerate_variance_error("moment covariance near singular, candidate " + id);
  return evec * arma::diagmat(1.0 / arma::sqrt(eval)) * evec.t();
}

}  // namespace

arma::vec tau_hat_iv(const Dataset& d) {
  // q = 0 falls through to an empty vector
  arma::vec u = fit_tsls(d.y, d.X, d.Z1).residuals;
  return d.Z2.t() * u / std::sqrt(static_cast<double>(d.n()));
}

arma::mat psi_hat_iv(const Dataset& d) {
  if (d.q() == 0) throw config_error("psi_hat_iv: dataset has no suspect conditions");
  const double n = static_cast<double>(d.n());
  const arma::uword p = d.p(), q = d.q();
  MomentSet valid;
  valid.id = "valid";
  for (arma::uword j = 0; j < p; ++j) valid.included.push_back(j);
  arma::mat kv = k_hat_for(d.X, d.Z(), selection_matrix(valid, p, q), valid.id);  // r x p
  arma::mat psi(q, p + q);
  psi.head_cols(p) = -(d.Z2.t() * d.X / n) * kv;
  psi.tail_cols(q) = arma::eye(q, q);
  return psi;
}

arma::mat bias_matrix(const arma::vec& tau, const arma::mat& psi, const arma::mat& omega) {
  if (psi.n_rows != tau.n_elem || psi.n_cols != omega.n_rows)
    throw dimension_error("bias_matrix: shape mismatch");
  return tau * tau.t() - psi * omega * psi.t();
}

FmscValue fmsc_value(const GmmComponents& c) {
  arma::vec a = c.xi.scatter(c.k_hat.t() * c.grad_mu);  // p+q
  const arma::uword q = c.tau.n_elem;
  FmscValue v;
  v.variance = arma::as_scalar(a.t() * c.omega * a);
  if (q > 0) {
    arma::vec ah = a.tail(q);
    v.bias_sq = arma::as_scalar(ah.t() * bias_matrix(c.tau, c.psi, c.omega) * ah);
  }
  v.fmsc = v.bias_sq + v.variance;
  v.fmsc_pp = std::max(0.0, v.bias_sq) + v.variance;
  return v;
}

FmscReport fmsc_ols_vs_tsls(const Dataset& d) {
  if (d.kind != ProblemKind::OlsVsTsls || d.r() != 1 || d.q() != 1)
    throw config_error("fmsc_ols_vs_tsls: needs OLS-vs-TSLS wiring with scalar x");
  SigmaEstimates sig = sigma_estimates(d);
  const double tau = arma::as_scalar(tau_hat_iv(d));
  const double v = sig.sigma_v_sq * sig.sigma_eps_sq * sig.sigma_x_sq / sig.gamma_sq;
  if (!(v > 0.0))
    throw degenerate_variance_error("fmsc_ols_vs_tsls: bias estimator variance is not positive");
  const double sx4 = sig.sigma_x_sq * sig.sigma_x_sq;

  FmscCandidateRow ols;
  ols.id = "OLS";
  ols.n_conditions = 1;
  ols.bias_sq = (tau * tau - v) / sx4;
  ols.variance = sig.sigma_eps_sq / sig.sigma_x_sq;
  ols.fmsc = ols.bias_sq + ols.variance;
  ols.fmsc_pp = std::max(0.0, ols.bias_sq) + ols.variance;

  FmscCandidateRow tsls;
  tsls.id = "TSLS";
  tsls.n_conditions = d.p();
  tsls.bias_sq = 0.0;
  tsls.variance = sig.sigma_eps_sq / sig.gamma_sq;
  tsls.fmsc = tsls.variance;
  tsls.fmsc_pp = tsls.variance;

  FmscReport rep;
  rep.rows = {ols, tsls};
  rep.tau = arma::vec{tau};
  rep.tau_cov = arma::mat{v};
  // OLS iff tau^2 / V < 2; equality goes to TSLS
  rep.selected = (tau * tau < 2.0 * v) ? 0 : 1;
  rep.selected_pp = (ols.fmsc_pp < tsls.fmsc_pp) ? 0 : 1;
  return rep;
}

FmscReport fmsc_choose_iv(const Dataset& d, const std::vector<MomentSet>& candidates,
                          arma::uword target_coef) {
  return make_choose_iv_context(d, candidates, target_coef).report();
}

FmscReport ProblemContext::report() const {
  FmscReport rep;
  rep.rows.reserve(candidates.size());
  for (const CandidateContext& c : candidates) {
    FmscCandidateRow row;
    row.id = c.set.id;
    row.n_conditions = c.set.size();
    row.bias_sq = c.value.bias_sq;
    row.variance = c.value.variance;
    row.fmsc = c.value.fmsc;
    row.fmsc_pp = c.value.fmsc_pp;
    rep.rows.push_back(std::move(row));
  }
  rep.tau = tau;
  rep.tau_cov = tau_cov;
  rep.selected = fmsc_selected;
  rep.selected_pp = fmsc_pp_selected;
  return rep;
}

namespace {

ProblemContext build_context(const Dataset& d, std::vector<MomentSet> candidates,
                             arma::uword target, arma::mat omega) {
  if (candidates.empty()) throw config_error("context: no candidates");
  if (target >= d.r()) throw config_error("context: target coefficient out of range");
  const double n = static_cast<double>(d.n());
  const arma::uword p = d.p(), q = d.q();

  ProblemContext ctx;
  ctx.n = d.n();
  ctx.p = p;
  ctx.q = q;
  ctx.target = target;
  ctx.grad_mu = arma::zeros(d.r());
  ctx.grad_mu(target) = 1.0;
  ctx.omega = std::move(omega);
  ctx.psi = psi_hat_iv(d);
  ctx.tau = tau_hat_iv(d);
  ctx.tau_cov = ctx.psi * ctx.omega * ctx.psi.t();

  arma::mat z = d.Z();
  arma::mat f_deriv = -(z.t() * d.X) / n;  // d/dtheta of the moment vector

  ctx.candidates.reserve(candidates.size());
  for (MomentSet& s : candidates) {
    CandidateContext c;
    c.xi = selection_matrix(s, p, q);
    c.k_hat = k_hat_for(d.X, z, c.xi, s.id);
    c.fit = fit_candidate(d, s);
    GmmComponents comp;
    comp.grad_mu = ctx.grad_mu;
    comp.k_hat = c.k_hat;
    comp.xi = c.xi;
    comp.omega = ctx.omega;
    comp.psi = ctx.psi;
    comp.tau = ctx.tau;
    comp.n = ctx.n;
    c.value = fmsc_value(comp);
    c.a = c.xi.scatter(c.k_hat.t() * ctx.grad_mu);

    const arma::uword m = c.xi.rows();
    arma::mat isqrt = inv_sqrt_spd(c.xi.select_sym(ctx.omega), s.id);
    arma::mat b = isqrt * f_deriv.rows(c.xi.idx);  // m x r
    arma::mat proj;
    if (!arma::solve(proj, b.t() * b, b.t(), arma::solve_opts::likely_sympd + arma::solve_opts::no_approx))
      throw rank_error("rank-deficient moment derivative, candidate " + s.id);
    arma::mat resid_map = (arma::eye(m, m) - b * proj) * isqrt;
    c.r_proj = arma::zeros(m, p + q);
    c.r_proj.cols(c.xi.idx) = resid_map;

    c.set = std::move(s);
    ctx.candidates.push_back(std::move(c));
  }

  std::vector<double> f, fpp;
  std::vector<arma::uword> ncond;
  for (const CandidateContext& c : ctx.candidates) {
    f.push_back(c.value.fmsc);
    fpp.push_back(c.value.fmsc_pp);
    ncond.push_back(c.set.size());
  }
  ctx.fmsc_selected = argmin_with_tie_rule(f, ncond);
  ctx.fmsc_pp_selected = argmin_with_tie_rule(fpp, ncond);
  return ctx;
}

}  // namespace

ProblemContext make_ols_tsls_context(const Dataset& d) {
  if (d.kind != ProblemKind::OlsVsTsls || d.r() != 1 || d.q() != 1)
    throw config_error("make_ols_tsls_context: needs OLS-vs-TSLS wiring with scalar x");
  const double n = static_cast<double>(d.n());
  const double sigma_eps_sq = fit_tsls(d.y, d.X, d.Z1).sigma2;
  arma::mat z = d.Z();
  arma::mat omega = sigma_eps_sq * (z.t() * z) / n;
  ProblemContext ctx = build_context(d, ols_tsls_candidates(d.p(), d.q()), 0, std::move(omega));
  // match the closed-form rule: equality goes to TSLS (row 1), not to the
  // fewer-conditions row
  ctx.fmsc_selected =
      ctx.candidates[0].value.fmsc < ctx.candidates[1].value.fmsc ? 0 : 1;
  ctx.fmsc_pp_selected =
      ctx.candidates[0].value.fmsc_pp < ctx.candidates[1].value.fmsc_pp ? 0 : 1;
  return ctx;
}

ProblemContext make_choose_iv_context(const Dataset& d, const std::vector<MomentSet>& candidates,
                                      arma::uword target_coef) {
  if (d.kind != ProblemKind::ChooseIv)
    throw config_error("make_choose_iv_context: dataset is not choose-IV wired");
  return build_context(d, candidates, target_coef, omega_assembled(d));
}

std::size_t argmin_with_tie_rule(const std::vector<double>& values,
                                 const std::vector<arma::uword>& n_conditions) {
  if (values.empty()) throw config_error("argmin: empty value list");
  if (!n_conditions.empty() && n_conditions.size() != values.size())
    throw dimension_error("argmin: condition counts do not match values");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) {
      best = i;
    } else if (values[i] == values[best] && !n_conditions.empty() &&
               n_conditions[i] < n_conditions[best]) {
      best = i;
    }
  }
  return best;
}

}  // namespace fmsc
