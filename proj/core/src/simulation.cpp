#include "fmsc/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "fmsc/averaging.hpp"
#include "fmsc/criteria.hpp"
#include "fmsc/parallel.hpp"

namespace fmsc {

Dataset gen_ols_tsls(const OlsTslsDesign& design, Philox& rng) {
  if (design.n < 10) throw config_error("gen_ols_tsls: n too small");
  const double resid = 1.0 - design.pi * design.pi - design.rho * design.rho;
  if (!(resid > 0.0))
    throw config_error("gen_ols_tsls: error covariance not positive definite");
  arma::mat raw = rng.normal_mat(design.n, 5);
  arma::vec eps = raw.col(0);
  arma::vec v = design.rho * raw.col(0) + std::sqrt(resid) * raw.col(1);
  arma::mat z = raw.cols(2, 4) / std::sqrt(3.0);
  arma::vec x = design.pi * arma::sum(z, 1) + v;
  arma::vec y = kTrueBeta * x + eps;
  return make_dataset(y, arma::mat(x), z, arma::mat(x), ProblemKind::OlsVsTsls);
}

Dataset gen_choose_iv(const ChooseIvDesign& design, Philox& rng) {
  if (design.n < 10) throw config_error("gen_choose_iv: n too small");
  const double g = design.gamma, rho = design.rho;
  arma::mat cov = {{1.0, 0.5 - g * rho, rho},
                   {0.5 - g * rho, 8.0 / 9.0 - g * g, 0.0},
                   {rho, 0.0, 1.0}};
  arma::mat r;
  if (!arma::chol(r, cov))
    throw config_error("gen_choose_iv: error covariance not positive definite");
  arma::mat raw = rng.normal_mat(design.n, 6);
  arma::mat evw = raw.cols(0, 2) * r;  // columns eps, v, w
  arma::mat z = raw.cols(3, 5) / std::sqrt(3.0);
  arma::vec x = arma::sum(z, 1) / 3.0 + g * evw.col(2) + evw.col(1);
  arma::vec y = kTrueBeta * x + evw.col(0);
  return make_dataset(y, arma::mat(x), z, arma::mat(evw.col(2)), ProblemKind::ChooseIv);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Ols: return "ols";
    case Method::Tsls: return "tsls";
    case Method::Valid: return "valid";
    case Method::Full: return "full";
    case Method::Fmsc: return "fmsc";
    case Method::MinAmseAvg: return "avg";
    case Method::Dhw90: return "dhw90";
    case Method::Dhw95: return "dhw95";
    case Method::GmmBic: return "gmm-bic";
    case Method::GmmHq: return "gmm-hq";
    case Method::GmmAic: return "gmm-aic";
    case Method::DownwardJ90: return "dj90";
    case Method::DownwardJ95: return "dj95";
    case Method::CcicBic: return "ccic-bic";
    case Method::CcicHq: return "ccic-hq";
    case Method::CcicAic: return "ccic-aic";
    case Method::CombinedBic: return "comb-bic";
    case Method::CombinedHq: return "comb-hq";
    case Method::CombinedAic: return "comb-aic";
  }
  throw config_error("method_name: unknown method");
}

std::string ci_procedure_name(CiProcedure p) {
  switch (p) {
    case CiProcedure::Naive: return "naive";
    case CiProcedure::OneStep: return "one-step";
    case CiProcedure::TwoStep: return "two-step";
    case CiProcedure::TwoStepAvg: return "two-step-avg";
    case CiProcedure::Benchmark: return "benchmark";
  }
  throw config_error("ci_procedure_name: unknown procedure");
}

namespace {

Dataset generate(const DesignCell& cell, Philox& rng) {
  if (cell.family == ProblemFamily::OlsVsTsls) {
    OlsTslsDesign d;
    d.pi = cell.pi;
    d.rho = cell.rho;
    d.n = cell.n;
    return gen_ols_tsls(d, rng);
  }
  ChooseIvDesign d;
  d.gamma = cell.pi;
  d.rho = cell.rho;
  d.n = cell.n;
  return gen_choose_iv(d, rng);
}

bool method_supported(ProblemFamily family, Method m) {
  if (family == ProblemFamily::OlsVsTsls) {
    switch (m) {
      case Method::Ols:
      case Method::Tsls:
      case Method::Valid:
      case Method::Fmsc:
      case Method::MinAmseAvg:
      case Method::Dhw90:
      case Method::Dhw95:
        return true;
      default:
        return false;
    }
  }
  switch (m) {
    case Method::Ols:
    case Method::Tsls:
    case Method::MinAmseAvg:
    case Method::Dhw90:
    case Method::Dhw95:
      return false;
    default:
      return true;
  }
}

struct MethodEval {
  double estimate = 0.0;
  int chose_full = -1;   // suspect-using candidate indicator; -1 for non-selectors
  int chose_valid = -1;  // exact-valid-set indicator
};

MethodEval eval_scalar(const Dataset& d, Method m) {
  auto ols = [&] { return fit_ols(d.y, d.X).beta(0); };
  auto tsls = [&] { return fit_tsls(d.y, d.X, d.Z1).beta(0); };
  switch (m) {
    case Method::Ols:
      return {ols(), -1, -1};
    case Method::Tsls:
    case Method::Valid:
      return {tsls(), -1, -1};
    case Method::Fmsc: {
      bool pick_ols = fmsc_ols_vs_tsls(d).selected == 0;
      return {pick_ols ? ols() : tsls(), pick_ols ? 1 : 0, pick_ols ? 0 : 1};
    }
    case Method::MinAmseAvg:
      return {avg_ols_tsls(d).beta_avg, -1, -1};
    case Method::Dhw90:
    case Method::Dhw95: {
      double level = m == Method::Dhw90 ? 0.90 : 0.95;
      DhwResult t = dhw_test(d, chi_sq_quantile(1, level));
      return {t.select_ols ? ols() : tsls(), t.select_ols ? 1 : 0, t.select_ols ? 0 : 1};
    }
    default:
      throw unsupported_config_error("method not defined for the OLS-vs-TSLS design");
  }
}

MethodEval eval_choose_iv(const Dataset& d, Method m) {
  std::vector<MomentSet> lattice = candidate_lattice(d.p(), d.q(), CandidateMode::AllSubsets);
  auto flags = [&](const MomentSet& s) {
    return std::pair<int, int>{s.size() == d.p() + d.q() ? 1 : 0, s.size() == d.p() ? 1 : 0};
  };
  auto from_set = [&](const MomentSet& s) {
    auto [f, v] = flags(s);
    return MethodEval{fit_candidate(d, s).beta(0), f, v};
  };
  switch (m) {
    case Method::Valid:
      return {fit_candidate(d, lattice.front()).beta(0), -1, -1};
    case Method::Full:
      return {fit_candidate(d, lattice.back()).beta(0), -1, -1};
    case Method::Fmsc: {
      ProblemContext ctx = make_choose_iv_context(d, lattice, 0);
      auto [f, v] = flags(ctx.candidates[ctx.fmsc_selected].set);
      return {ctx.mu_fmsc(), f, v};
    }
    case Method::GmmBic:
    case Method::GmmHq:
    case Method::GmmAic: {
      MscFlavor fl = m == Method::GmmBic    ? MscFlavor::Bic
                     : m == Method::GmmHq   ? MscFlavor::HannanQuinn
                                            : MscFlavor::Aic;
      return from_set(lattice[gmm_msc_select(d, lattice, fl).selected]);
    }
    case Method::DownwardJ90:
    case Method::DownwardJ95: {
      double alpha = m == Method::DownwardJ90 ? 0.10 : 0.05;
      return from_set(lattice[downward_j_select(d, lattice, alpha).selected]);
    }
    case Method::CcicBic:
    case Method::CcicHq:
    case Method::CcicAic: {
      MscFlavor fl = m == Method::CcicBic    ? MscFlavor::Bic
                     : m == Method::CcicHq   ? MscFlavor::HannanQuinn
                                             : MscFlavor::Aic;
      return from_set(lattice[ccic_select(d, lattice, fl).selected]);
    }
    case Method::CombinedBic:
    case Method::CombinedHq:
    case Method::CombinedAic: {
      MscFlavor fl = m == Method::CombinedBic    ? MscFlavor::Bic
                     : m == Method::CombinedHq   ? MscFlavor::HannanQuinn
                                                 : MscFlavor::Aic;
      CombinedSelection cs = combined_select(d, fl);
      return from_set(cs.full ? lattice.back() : lattice.front());
    }
    default:
      throw unsupported_config_error("method not defined for the choose-IV design");
  }
}

MethodEval eval_method(const Dataset& d, ProblemFamily family, Method m) {
  return family == ProblemFamily::OlsVsTsls ? eval_scalar(d, m) : eval_choose_iv(d, m);
}

// numerical per-replication failures are recorded, not fatal; configuration
// mistakes still propagate
template <typename Fn>
bool try_numeric(Fn&& fn) {
  try {
    fn();
    return true;
  } catch (const rank_error&) {
  } catch (const weak_instrument_error&) {
  } catch (const degenerate_variance_error&) {
  } catch (const not_psd_error&) {
  }
  return false;
}

double median_of(std::vector<double> v) {
  arma::vec s(v);
  s = arma::sort(s);
  return empirical_quantile(s, 0.5);
}

}  // namespace

std::vector<DesignCell> default_rmse_grid(ProblemFamily family) {
  std::vector<DesignCell> grid;
  for (arma::uword n : {50, 100, 500})
    for (double s : {0.2, 0.4, 0.6})
      for (int k = 0; k <= 5; ++k)
        grid.push_back({family, s, 0.1 * k, n});
  return grid;
}

std::vector<DesignCell> default_coverage_grid(ProblemFamily family) {
  std::vector<DesignCell> grid;
  if (family == ProblemFamily::OlsVsTsls) {
    for (arma::uword n : {100, 500})
      for (double pi : {0.2, 0.6})
        for (double rho : {0.0, 0.2, 0.4}) grid.push_back({family, pi, rho, n});
  } else {
    for (arma::uword n : {50, 500})
      for (double gamma : {0.2, 0.6})
        for (double rho : {0.0, 0.5}) grid.push_back({family, gamma, rho, n});
  }
  return grid;
}

RmseTable rmse_experiment(const std::vector<DesignCell>& grid, const std::vector<Method>& methods,
                          arma::uword reps, std::uint64_t seed, unsigned threads) {
  if (grid.empty() || methods.empty() || reps == 0)
    throw config_error("rmse_experiment: empty grid, method list or rep count");
  for (const DesignCell& cell : grid)
    for (Method m : methods)
      if (!method_supported(cell.family, m))
        throw unsupported_config_error("rmse_experiment: " + method_name(m) +
                                       " is not defined for this design family");

  const std::size_t n_methods = methods.size();
  const std::size_t tasks = grid.size() * reps;
  arma::mat est(tasks, n_methods);
  est.fill(arma::datum::nan);
  arma::mat chose(tasks, n_methods);
  chose.fill(-1.0);

  parallel_for(tasks, threads, [&](std::size_t t) {
    const std::size_t ci = t / reps;
    const std::uint64_t rep = static_cast<std::uint64_t>(t % reps);
    Philox rng(seed, stream_id(ci, rep, kStreamData));
    Dataset d;
    if (!try_numeric([&] { d = generate(grid[ci], rng); })) return;
    for (std::size_t j = 0; j < n_methods; ++j) {
      try_numeric([&] {
        MethodEval e = eval_method(d, grid[ci].family, methods[j]);
        est(t, j) = e.estimate;
        chose(t, j) = e.chose_full;
      });
    }
  });

  RmseTable table;
  for (std::size_t ci = 0; ci < grid.size(); ++ci) {
    bool flagged = false;
    for (std::size_t j = 0; j < n_methods; ++j) {
      double sum = 0.0, sq = 0.0, nsel = 0.0, selsum = 0.0;
      arma::uword ok = 0;
      for (arma::uword rep = 0; rep < reps; ++rep) {
        double e = est(ci * reps + rep, j);
        if (!std::isfinite(e)) continue;
        ++ok;
        sum += e;
        sq += (e - kTrueBeta) * (e - kTrueBeta);
        double c = chose(ci * reps + rep, j);
        if (c >= 0.0) {
          nsel += 1.0;
          selsum += c;
        }
      }
      RmseRow row;
      row.cell = grid[ci];
      row.method = methods[j];
      row.reps = reps;
      row.failures = reps - ok;
      if (ok > 0) {
        row.rmse = std::sqrt(sq / ok);
        row.mean_estimate = sum / ok;
      }
      row.select_freq = nsel > 0.0 ? selsum / nsel : -1.0;
      if (row.failures * 100 > reps) flagged = true;
      table.rows.push_back(row);
    }
    if (flagged) ++table.cells_flagged;
  }
  return table;
}

CoverageTable coverage_experiment(const std::vector<DesignCell>& grid, arma::uword reps,
                                  double alpha, double delta, arma::uword draws_j,
                                  std::uint64_t seed, unsigned threads, bool with_avg) {
  if (grid.empty() || reps == 0) throw config_error("coverage_experiment: empty grid or reps");
  if (!(alpha > 0.0 && delta > 0.0 && alpha + delta < 1.0))
    throw config_error("coverage_experiment: invalid alpha/delta split");
  if (with_avg)
    for (const DesignCell& cell : grid)
      if (cell.family != ProblemFamily::OlsVsTsls)
        throw unsupported_config_error(
            "coverage_experiment: averaging intervals need the OLS-vs-TSLS design");

  const std::vector<CiProcedure> procs =
      with_avg ? std::vector<CiProcedure>{CiProcedure::Naive, CiProcedure::OneStep,
                                          CiProcedure::TwoStep, CiProcedure::TwoStepAvg,
                                          CiProcedure::Benchmark}
               : std::vector<CiProcedure>{CiProcedure::Naive, CiProcedure::OneStep,
                                          CiProcedure::TwoStep, CiProcedure::Benchmark};
  const std::size_t n_procs = procs.size();
  const std::size_t tasks = grid.size() * reps;
  arma::mat width(tasks, n_procs);
  width.fill(arma::datum::nan);
  arma::mat cover(tasks, n_procs);
  cover.fill(-1.0);

  const double alpha_tot = alpha + delta;  // naive / one-step / benchmark level

  parallel_for(tasks, threads, [&](std::size_t t) {
    const std::size_t ci = t / reps;
    const std::uint64_t rep = static_cast<std::uint64_t>(t % reps);
    const DesignCell& cell = grid[ci];
    try_numeric([&] {
      Philox rng(seed, stream_id(ci, rep, kStreamData));
      Dataset d = generate(cell, rng);

      ProblemContext ctx =
          cell.family == ProblemFamily::OlsVsTsls
              ? make_ols_tsls_context(d)
              : make_choose_iv_context(
                    d, candidate_lattice(d.p(), d.q(), CandidateMode::AllSubsets), 0);
      const double mu = ctx.mu_fmsc();
      const CandidateContext& sel = ctx.candidates[ctx.fmsc_selected];
      // textbook interval around the always-valid estimator: TSLS in the
      // scalar problem, the valid subset otherwise (both sit at index 0 of
      // their lattice except the scalar pair, where TSLS is row 1)
      const CandidateContext& bench =
          cell.family == ProblemFamily::OlsVsTsls ? ctx.candidates[1] : ctx.candidates[0];

      CiOptions opts;
      opts.alpha = alpha;
      opts.delta = delta;
      opts.draws = draws_j;
      opts.seed = seed;
      opts.stream = stream_id(ci, rep, 0);

      auto record = [&](std::size_t slot, const CiResult& r) {
        width(t, slot) = r.width();
        cover(t, slot) = r.contains(kTrueBeta) ? 1.0 : 0.0;
      };

      record(0, naive_ci(mu, sel.fit.se(ctx.target), alpha_tot));
      CiOptions one = opts;
      one.alpha = alpha_tot;
      record(1, one_step_ci(ctx, mu, one));
      record(2, two_step_ci(ctx, mu, opts));
      if (with_avg) {
        CiOptions oa = opts;
        oa.limit.rule = WeightRule::MinAmseAverage;
        record(3, two_step_ci(ctx, avg_ols_tsls(d).beta_avg, oa));
      }
      record(n_procs - 1, naive_ci(bench.fit.beta(ctx.target), bench.fit.se(ctx.target),
                                   alpha_tot));
    });
  });

  CoverageTable table;
  for (std::size_t ci = 0; ci < grid.size(); ++ci) {
    std::vector<double> med(n_procs, 0.0);
    std::vector<arma::uword> fails(n_procs, 0);
    std::vector<double> cov(n_procs, 0.0);
    for (std::size_t s = 0; s < n_procs; ++s) {
      std::vector<double> ws;
      double hits = 0.0;
      for (arma::uword rep = 0; rep < reps; ++rep) {
        double w = width(ci * reps + rep, s);
        if (!std::isfinite(w)) continue;
        ws.push_back(w);
        hits += cover(ci * reps + rep, s);
      }
      fails[s] = reps - ws.size();
      if (!ws.empty()) {
        med[s] = median_of(std::move(ws));
        cov[s] = 100.0 * hits / static_cast<double>(reps - fails[s]);
      }
    }
    bool flagged = false;
    const double bench_med = med[n_procs - 1];
    for (std::size_t s = 0; s < n_procs; ++s) {
      CoverageRow row;
      row.cell = grid[ci];
      row.procedure = procs[s];
      row.coverage = cov[s];
      row.median_width = med[s];
      row.relative_width = bench_med > 0.0 ? 100.0 * (med[s] / bench_med - 1.0) : 0.0;
      row.reps = reps;
      row.failures = fails[s];
      if (row.failures * 100 > reps) flagged = true;
      table.rows.push_back(row);
    }
    if (flagged) ++table.cells_flagged;
  }
  return table;
}

SelectionFreqTable criteria_compare_experiment(const std::vector<DesignCell>& grid,
                                               arma::uword reps, std::uint64_t seed,
                                               unsigned threads) {
  if (grid.empty() || reps == 0)
    throw config_error("criteria_compare_experiment: empty grid or reps");
  for (const DesignCell& cell : grid)
    if (cell.family != ProblemFamily::ChooseIv)
      throw unsupported_config_error(
          "criteria_compare_experiment: defined for the choose-IV design only");

  const std::vector<Method> methods = {
      Method::Fmsc,        Method::GmmBic,      Method::GmmHq,   Method::GmmAic,
      Method::DownwardJ90, Method::DownwardJ95, Method::CcicBic, Method::CcicHq,
      Method::CcicAic,     Method::CombinedBic, Method::CombinedHq, Method::CombinedAic};
  const std::size_t n_methods = methods.size();
  const std::size_t tasks = grid.size() * reps;
  arma::mat chose(tasks, n_methods);
  chose.fill(arma::datum::nan);

  parallel_for(tasks, threads, [&](std::size_t t) {
    const std::size_t ci = t / reps;
    const std::uint64_t rep = static_cast<std::uint64_t>(t % reps);
    Philox rng(seed, stream_id(ci, rep, kStreamData));
    Dataset d;
    if (!try_numeric([&] { d = generate(grid[ci], rng); })) return;
    for (std::size_t j = 0; j < n_methods; ++j) {
      try_numeric([&] {
        chose(t, j) = eval_method(d, grid[ci].family, methods[j]).chose_valid;
      });
    }
  });

  SelectionFreqTable table;
  for (std::size_t ci = 0; ci < grid.size(); ++ci) {
    bool flagged = false;
    for (std::size_t j = 0; j < n_methods; ++j) {
      double hits = 0.0;
      arma::uword ok = 0;
      for (arma::uword rep = 0; rep < reps; ++rep) {
        double c = chose(ci * reps + rep, j);
        if (!std::isfinite(c)) continue;
        ++ok;
        hits += c;
      }
      SelectionFreqRow row;
      row.cell = grid[ci];
      row.method = methods[j];
      row.valid_freq = ok > 0 ? hits / ok : 0.0;
      row.reps = reps;
      row.failures = reps - ok;
      if (row.failures * 100 > reps) flagged = true;
      table.rows.push_back(row);
    }
    if (flagged) ++table.cells_flagged;
  }
  return table;
}

}  // namespace fmsc
