#include "fmsc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fmsc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// series expansion of P(a,x), valid and fast for x < a + 1
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int i = 1; i < 2000; ++i) {
    term *= x / (a + i);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a,x), valid for x >= a + 1
double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 2000; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double gamma_q(double a, double x) {
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi_sq_pdf(arma::uword df, double x) {
  const double a = 0.5 * df;
  return std::exp((a - 1.0) * std::log(x) - 0.5 * x - std::lgamma(a) - a * std::log(2.0));
}

}  // namespace

double reg_lower_gamma(double a, double x) {
  if (!(a > 0.0)) throw config_error("reg_lower_gamma: shape must be positive");
  if (!(x >= 0.0)) throw config_error("reg_lower_gamma: negative argument");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi_sq_cdf(arma::uword df, double x) {
  if (df == 0) throw config_error("chi_sq_cdf: zero degrees of freedom");
  if (x <= 0.0) return 0.0;
  return reg_lower_gamma(0.5 * df, 0.5 * x);
}

double chi_sq_sf(arma::uword df, double x) {
  if (df == 0) throw config_error("chi_sq_sf: zero degrees of freedom");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

double chi_sq_quantile(arma::uword df, double prob) {
  if (df == 0) throw config_error("chi_sq_quantile: zero degrees of freedom");
  if (!(prob >= 0.0 && prob < 1.0)) throw config_error("chi_sq_quantile: prob outside [0,1)");
  if (prob == 0.0) return 0.0;

  double lo = 0.0;
  double hi = static_cast<double>(df) + 10.0;
  while (chi_sq_cdf(df, hi) < prob) {
    hi *= 2.0;
    if (hi > 1e60) throw config_error("chi_sq_quantile: bracket expansion failed");
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200 && hi - lo > 1e-11; ++it) {
    double fx = chi_sq_cdf(df, x) - prob;
    if (fx > 0.0)
      hi = x;
    else
      lo = x;
    double step = fx / chi_sq_pdf(df, x);
    double next = x - step;
    // fall back to bisection whenever Newton leaves the bracket
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

double z_two_sided(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("z_two_sided: alpha outside (0,1)");
  return std::sqrt(chi_sq_quantile(1, 1.0 - alpha));
}

arma::mat mvn_draws(const arma::mat& omega, arma::uword J, Philox& rng) {
  if (omega.n_rows != omega.n_cols) throw dimension_error("mvn_draws: covariance not square");
  const arma::uword k = omega.n_rows;
  if (k == 0 || J == 0) throw dimension_error("mvn_draws: empty request");
  if (omega.is_zero()) return arma::zeros(J, k);

  arma::mat r;
  bool ok = arma::chol(r, omega);
  if (!ok) {
    const double tr = arma::trace(omega);
    if (tr > 0.0) {
      for (double f : {1e-14, 1e-12, 1e-10, 1e-8}) {
        if (arma::chol(r, omega + (f * tr) * arma::eye(k, k))) {
          ok = true;
          break;
        }
      }
    }
  }
  if (!ok) throw not_psd_error("mvn_draws: covariance is not positive semidefinite");
  return rng.normal_mat(J, k) * r;
}

std::vector<arma::vec> tau_region(const arma::vec& tau_hat, const arma::mat& tau_cov,
                                  double delta, arma::uword budget, Philox& rng) {
  const arma::uword q = tau_hat.n_elem;
  if (q == 0) throw dimension_error("tau_region: empty tau");
  if (tau_cov.n_rows != q || tau_cov.n_cols != q)
    throw dimension_error("tau_region: covariance shape");
  if (!(delta > 0.0 && delta < 1.0)) throw config_error("tau_region: delta outside (0,1)");
  const double crit = chi_sq_quantile(q, 1.0 - delta);

  std::vector<arma::vec> pts;
  if (q == 1) {
    const double v = tau_cov(0, 0);
    if (!(v > 0.0)) throw degenerate_variance_error("tau_region: zero bias variance");
    const double half = std::sqrt(crit * v);
    const double lo = tau_hat(0) - half;
    const double step = 2.0 * half / 99.0;
    pts.reserve(100);
    for (int i = 0; i < 100; ++i) pts.push_back(arma::vec{lo + i * step});
    return pts;
  }

  arma::vec eval;
  arma::mat evec;
  arma::mat sym = 0.5 * (tau_cov + tau_cov.t());
  if (!arma::eig_sym(eval, evec, sym)) throw rank_error("tau_region: eigendecomposition failed");
  if (!(eval.min() > 0.0)) throw degenerate_variance_error("tau_region: singular bias covariance");
  // stay a hair inside the boundary so the membership inequality survives
  // floating point roundoff
  const double shrink = 1.0 - 1e-10;
  arma::mat l = evec * arma::diagmat(arma::sqrt(eval));

  pts.reserve(1 + 2 * q + budget);
  pts.push_back(tau_hat);
  for (arma::uword i = 0; i < q; ++i) {
    arma::vec axis = std::sqrt(crit * eval(i)) * shrink * evec.col(i);
    pts.push_back(tau_hat + axis);
    pts.push_back(tau_hat - axis);
  }
  const double radius = std::sqrt(crit) * shrink;
  for (arma::uword b = 0; b < budget; ++b) {
    arma::vec w = rng.normal_vec(q);
    double u = rng.uniform();
    double nrm = arma::norm(w);
    if (!(nrm > 0.0)) {
      pts.push_back(tau_hat);
      continue;
    }
    double r = radius * std::pow(u, 1.0 / static_cast<double>(q));
    pts.push_back(tau_hat + l * ((r / nrm) * w));
  }
  return pts;
}

LimitSimulator::LimitSimulator(const ProblemContext& ctx, const arma::mat& draws,
                               LimitOptions opts)
    : ctx_(ctx), opts_(opts) {
  const std::size_t count = ctx.candidates.size();
  if (count == 0) throw config_error("limit simulator: no candidates");
  if (draws.n_rows == 0) throw config_error("limit simulator: no draws");
  if (draws.n_cols != ctx.p + ctx.q) throw dimension_error("limit simulator: draw width");
  J_ = draws.n_rows;
  q_ = ctx.q;
  const arma::uword r = ctx.grad_mu.n_elem;

  d_.reserve(count);
  g_.reserve(count);
  ah_.reserve(count);
  var_term_.reserve(count);
  pp_term_.reserve(count);
  sizes_.reserve(count);
  df_.reserve(count);
  j_base_.reserve(count);
  j_rproj_.reserve(count);
  for (const CandidateContext& c : ctx.candidates) {
    arma::vec ah = c.a.tail(q_);
    d_.push_back(draws * c.a);
    g_.push_back(draws * (ctx.psi.t() * ah));
    ah_.push_back(ah);
    var_term_.push_back(arma::as_scalar(c.a.t() * ctx.omega * c.a));
    pp_term_.push_back(arma::as_scalar(ah.t() * ctx.tau_cov * ah));
    sizes_.push_back(c.set.size());
    df_.push_back(c.set.size() - r);
    j_base_.push_back(c.r_proj * draws.t());
    j_rproj_.push_back(c.r_proj.tail_cols(q_));
  }

  switch (opts_.rule) {
    case WeightRule::FmscIndicator:
      break;
    case WeightRule::GmmMsc:
      kappa_ = msc_kappa(opts_.flavor, ctx.n);
      break;
    case WeightRule::DownwardJ: {
      if (!(opts_.j_alpha > 0.0 && opts_.j_alpha < 1.0))
        throw config_error("limit simulator: J-test level outside (0,1)");
      jcrit_.reserve(count);
      for (std::size_t i = 0; i < count; ++i)
        jcrit_.push_back(df_[i] == 0 ? kInf : chi_sq_quantile(df_[i], 1.0 - opts_.j_alpha));
      order_.resize(count);
      std::iota(order_.begin(), order_.end(), 0);
      std::stable_sort(order_.begin(), order_.end(),
                       [&](std::size_t a, std::size_t b) { return sizes_[a] > sizes_[b]; });
      break;
    }
    case WeightRule::MinAmseAverage: {
      if (q_ != 1)
        throw unsupported_config_error(
            "limit simulator: min-AMSE averaging needs a single suspect condition");
      bool have_ols = false, have_tsls = false;
      for (std::size_t i = 0; i < count; ++i) {
        if (ctx.candidates[i].set.kind == CandidateKind::OlsCandidate) {
          i_ols_ = i;
          have_ols = true;
        } else if (ctx.candidates[i].set.kind == CandidateKind::TslsCandidate) {
          i_tsls_ = i;
          have_tsls = true;
        }
      }
      if (!have_ols || !have_tsls)
        throw unsupported_config_error(
            "limit simulator: min-AMSE averaging needs the OLS/TSLS candidate pair");
      v_hat_ = ctx.tau_cov(0, 0);
      if (!(v_hat_ > 0.0))
        throw degenerate_variance_error("limit simulator: zero bias variance");
      psi_m_ = arma::vec(draws * ctx.psi.t());
      break;
    }
  }
}

arma::vec LimitSimulator::lambda(const arma::vec& tau_star) const {
  if (tau_star.n_elem != q_) throw dimension_error("limit simulator: tau_star length");
  const std::size_t count = d_.size();
  std::vector<double> shift(count);  // suspect loading times tau_star
  for (std::size_t i = 0; i < count; ++i) shift[i] = arma::dot(ah_[i], tau_star);

  arma::vec out(J_);
  switch (opts_.rule) {
    case WeightRule::FmscIndicator: {
      arma::mat crit(J_, count);
      for (std::size_t i = 0; i < count; ++i)
        crit.col(i) = (var_term_[i] - pp_term_[i]) + arma::square(g_[i] + shift[i]);
      for (arma::uword j = 0; j < J_; ++j) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < count; ++i) {
          if (crit(j, i) < crit(j, best) ||
              (crit(j, i) == crit(j, best) && sizes_[i] < sizes_[best]))
            best = i;
        }
        out(j) = d_[best](j) + shift[best];
      }
      return out;
    }
    case WeightRule::MinAmseAverage: {
      arma::vec t = psi_m_ + tau_star(0);
      arma::vec cand_ols = d_[i_ols_] + shift[i_ols_];
      arma::vec cand_tsls = d_[i_tsls_] + shift[i_tsls_];
      for (arma::uword j = 0; j < J_; ++j) {
        double w = 1.0 / (1.0 + std::max(0.0, t(j) * t(j) - v_hat_) / v_hat_);
        out(j) = w * cand_ols(j) + (1.0 - w) * cand_tsls(j);
      }
      return out;
    }
    case WeightRule::DownwardJ:
    case WeightRule::GmmMsc: {
      arma::mat jstat(J_, count);
      for (std::size_t i = 0; i < count; ++i) {
        arma::mat shifted = j_base_[i];
        shifted.each_col() += j_rproj_[i] * tau_star;
        jstat.col(i) = arma::sum(arma::square(shifted), 0).t();
      }
      if (opts_.rule == WeightRule::DownwardJ) {
        std::size_t fallback = 0;  // smallest set if everything rejects
        for (std::size_t i = 1; i < count; ++i)
          if (sizes_[i] < sizes_[fallback]) fallback = i;
        for (arma::uword j = 0; j < J_; ++j) {
          std::size_t sel = fallback;
          for (std::size_t idx : order_) {
            if (jstat(j, idx) < jcrit_[idx]) {
              sel = idx;
              break;
            }
          }
          out(j) = d_[sel](j) + shift[sel];
        }
      } else {
        for (arma::uword j = 0; j < J_; ++j) {
          std::size_t best = 0;
          double bv = jstat(j, 0) - static_cast<double>(df_[0]) * kappa_;
          for (std::size_t i = 1; i < count; ++i) {
            double v = jstat(j, i) - static_cast<double>(df_[i]) * kappa_;
            if (v < bv || (v == bv && sizes_[i] > sizes_[best])) {
              best = i;
              bv = v;
            }
          }
          out(j) = d_[best](j) + shift[best];
        }
      }
      return out;
    }
  }
  throw config_error("limit simulator: unknown weight rule");
}

namespace {

struct QuantilePair {
  double a = 0.0;
  double b = 0.0;
};

QuantilePair lambda_bounds(const LimitSimulator& sim, const arma::vec& t, double alpha) {
  arma::vec lam = arma::sort(sim.lambda(t));
  return {empirical_quantile(lam, 0.5 * alpha), empirical_quantile(lam, 1.0 - 0.5 * alpha)};
}

// compass search over the ellipsoid coordinates u (tau = tau_hat + L u,
// ||u|| <= radius); returns the refined bound
double pattern_refine(const LimitSimulator& sim, const arma::vec& tau_hat, const arma::mat& l,
                      double radius, arma::vec u, double alpha, bool upper, double start,
                      arma::uword budget) {
  const arma::uword q = u.n_elem;
  double best = start;
  double h = 0.25 * radius;
  arma::uword used = 0;
  while (used < budget && h > 1e-6 * radius) {
    bool improved = false;
    for (arma::uword i = 0; i < q && used < budget; ++i) {
      for (double sgn : {1.0, -1.0}) {
        if (used >= budget) break;
        arma::vec cand = u;
        cand(i) += sgn * h;
        if (arma::norm(cand) > radius) continue;
        QuantilePair bd = lambda_bounds(sim, tau_hat + l * cand, alpha);
        ++used;
        double v = upper ? bd.b : bd.a;
        if (upper ? (v > best) : (v < best)) {
          best = v;
          u = cand;
          improved = true;
        }
      }
    }
    if (!improved) h *= 0.5;
  }
  return best;
}

void check_ci_options(const CiOptions& opts, bool need_delta) {
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw config_error("ci: alpha outside (0,1)");
  if (need_delta && !(opts.delta > 0.0 && opts.delta < 1.0))
    throw config_error("ci: delta outside (0,1)");
  if (opts.draws < 2) throw config_error("ci: needs at least two simulation draws");
}

}  // namespace

CiResult two_step_ci(const ProblemContext& ctx, double mu_hat, const CiOptions& opts) {
  check_ci_options(opts, true);
  Philox draw_rng(opts.seed, opts.stream | kStreamCiDraws);
  Philox region_rng(opts.seed, opts.stream | kStreamRegion);
  arma::mat draws = mvn_draws(ctx.omega, opts.draws, draw_rng);
  LimitSimulator sim(ctx, draws, opts.limit);

  std::vector<arma::vec> region =
      tau_region(ctx.tau, ctx.tau_cov, opts.delta, opts.region_budget, region_rng);
  // evaluating at tau_hat itself makes the one-step interval a subset by
  // construction (the scalar grid spans but does not contain it)
  if (ctx.q == 1) region.push_back(ctx.tau);

  double a_min = kInf, b_max = -kInf;
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    QuantilePair bd = lambda_bounds(sim, region[i], opts.alpha);
    if (bd.a < a_min) {
      a_min = bd.a;
      ia = i;
    }
    if (bd.b > b_max) {
      b_max = bd.b;
      ib = i;
    }
  }

  if (ctx.q > 1 && opts.search_budget > 0) {
    const double crit = chi_sq_quantile(ctx.q, 1.0 - opts.delta);
    const double radius = std::sqrt(crit) * (1.0 - 1e-10);
    arma::vec eval;
    arma::mat evec;
    arma::mat sym = 0.5 * (ctx.tau_cov + ctx.tau_cov.t());
    if (!arma::eig_sym(eval, evec, sym))
      throw rank_error("two_step_ci: eigendecomposition failed");
    if (!(eval.min() > 0.0))
      throw degenerate_variance_error("two_step_ci: singular bias covariance");
    arma::mat l = evec * arma::diagmat(arma::sqrt(eval));
    arma::mat linv = arma::diagmat(1.0 / arma::sqrt(eval)) * evec.t();
    arma::vec ua = linv * (region[ia] - ctx.tau);
    arma::vec ub = linv * (region[ib] - ctx.tau);
    a_min = pattern_refine(sim, ctx.tau, l, radius, ua, opts.alpha, false, a_min,
                           opts.search_budget);
    b_max = pattern_refine(sim, ctx.tau, l, radius, ub, opts.alpha, true, b_max,
                           opts.search_budget);
  }

  const double root_n = std::sqrt(static_cast<double>(ctx.n));
  CiResult res;
  res.lower = mu_hat - b_max / root_n;
  res.upper = mu_hat - a_min / root_n;
  res.method = CiMethod::TwoStep;
  res.alpha = opts.alpha;
  res.delta = opts.delta;
  res.draws_j = opts.draws;
  res.region_points = static_cast<arma::uword>(region.size());
  res.a_min = a_min;
  res.b_max = b_max;
  return res;
}

CiResult one_step_ci(const ProblemContext& ctx, double mu_hat, const CiOptions& opts) {
  check_ci_options(opts, false);
  Philox draw_rng(opts.seed, opts.stream | kStreamCiDraws);
  arma::mat draws = mvn_draws(ctx.omega, opts.draws, draw_rng);
  LimitSimulator sim(ctx, draws, opts.limit);
  QuantilePair bd = lambda_bounds(sim, ctx.tau, opts.alpha);

  const double root_n = std::sqrt(static_cast<double>(ctx.n));
  CiResult res;
  res.lower = mu_hat - bd.b / root_n;
  res.upper = mu_hat - bd.a / root_n;
  res.method = CiMethod::OneStep;
  res.alpha = opts.alpha;
  res.delta = 0.0;
  res.draws_j = opts.draws;
  res.region_points = 1;
  res.a_min = bd.a;
  res.b_max = bd.b;
  return res;
}

CiResult naive_ci(double estimate, double se, double alpha) {
  if (!(se >= 0.0)) throw config_error("naive_ci: negative standard error");
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("naive_ci: alpha outside (0,1)");
  const double z = z_two_sided(alpha);
  CiResult res;
  res.lower = estimate - z * se;
  res.upper = estimate + z * se;
  res.method = CiMethod::Naive;
  res.alpha = alpha;
  return res;
}

double empirical_quantile(const arma::vec& sorted_values, double prob) {
  const arma::uword n = sorted_values.n_elem;
  if (n == 0) throw config_error("empirical_quantile: empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw config_error("empirical_quantile: prob outside [0,1]");
  if (n == 1) return sorted_values(0);
  const double h = static_cast<double>(n - 1) * prob;
  const arma::uword lo = static_cast<arma::uword>(std::floor(h));
  if (lo + 1 >= n) return sorted_values(n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted_values(lo) + frac * (sorted_values(lo + 1) - sorted_values(lo));
}

}  // namespace fmsc
