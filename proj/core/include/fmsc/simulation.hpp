#pragma once

// Seeded data-generating processes for the two simulation designs plus the
// RMSE / selection-frequency / coverage experiment harnesses. Every
// (cell, replication) pair draws from its own RNG substream, so results are
// byte-identical for a given (grid, reps, seed) regardless of thread count or
// which methods are evaluated.

#include <armadillo>

#include <cstdint>
#include <string>
#include <vector>

#include "fmsc/inference.hpp"
#include "fmsc/types.hpp"

namespace fmsc {

// y = 0.5 x + eps, x = pi (z1+z2+z3) + v, Var(x) = 1, Corr(x, eps) = rho,
// first-stage R^2 = pi^2.
struct OlsTslsDesign {
  double pi = 0.4;
  double rho = 0.0;
  arma::uword n = 100;
};

// y = 0.5 x + eps, x = (z1+z2+z3)/3 + gamma w + v, Var(x) = 1,
// Corr(x, eps) = 0.5, Corr(x, w) = gamma, Corr(w, eps) = rho,
// first-stage R^2 = 1/9 + gamma^2.
struct ChooseIvDesign {
  double gamma = 0.2;
  double rho = 0.0;
  arma::uword n = 100;
};

inline constexpr double kTrueBeta = 0.5;

Dataset gen_ols_tsls(const OlsTslsDesign& design, Philox& rng);
Dataset gen_choose_iv(const ChooseIvDesign& design, Philox& rng);

// Point estimators compared in the experiments.
enum class Method {
  Ols,
  Tsls,
  Valid,
  Full,
  Fmsc,
  MinAmseAvg,
  Dhw90,
  Dhw95,
  GmmBic,
  GmmHq,
  GmmAic,
  DownwardJ90,
  DownwardJ95,
  CcicBic,
  CcicHq,
  CcicAic,
  CombinedBic,
  CombinedHq,
  CombinedAic,
};

std::string method_name(Method m);

enum class ProblemFamily { OlsVsTsls, ChooseIv };

// One grid cell. pi carries the first-stage strength for the OLS-vs-TSLS
// family and the relevance gamma for the choose-IV family.
struct DesignCell {
  ProblemFamily family = ProblemFamily::OlsVsTsls;
  double pi = 0.0;  // or gamma
  double rho = 0.0;
  arma::uword n = 0;
};

struct RmseRow {
  DesignCell cell;
  Method method = Method::Ols;
  double rmse = 0.0;
  double mean_estimate = 0.0;
  // fraction of replications selecting the suspect-using candidate (OLS in
  // the scalar problem, the full set otherwise); -1 for non-selectors
  double select_freq = -1.0;
  arma::uword reps = 0;
  arma::uword failures = 0;
};

struct RmseTable {
  std::vector<RmseRow> rows;
  arma::uword cells_flagged = 0;  // cells with > 1% failed replications
};

// Default desk-scale grids: rho in {0,...,0.5}, pi/gamma in {0.2,0.4,0.6},
// n in {50,100,500}.
std::vector<DesignCell> default_rmse_grid(ProblemFamily family);

RmseTable rmse_experiment(const std::vector<DesignCell>& grid, const std::vector<Method>& methods,
                          arma::uword reps, std::uint64_t seed, unsigned threads = 0);

// Confidence-interval procedures compared in the coverage experiments. The
// textbook benchmark is TSLS for the scalar problem and the valid estimator
// for the choose-IV problem, at the same 1-(alpha+delta) level as the
// two-step guarantee; Naive and OneStep also use 1-(alpha+delta).
enum class CiProcedure { Naive, OneStep, TwoStep, TwoStepAvg, Benchmark };

std::string ci_procedure_name(CiProcedure p);

struct CoverageRow {
  DesignCell cell;
  CiProcedure procedure = CiProcedure::TwoStep;
  double coverage = 0.0;      // percent
  double median_width = 0.0;
  double relative_width = 0.0;  // percent above benchmark median width
  arma::uword reps = 0;
  arma::uword failures = 0;
};

struct CoverageTable {
  std::vector<CoverageRow> rows;
  arma::uword cells_flagged = 0;
};

std::vector<DesignCell> default_coverage_grid(ProblemFamily family);

CoverageTable coverage_experiment(const std::vector<DesignCell>& grid, arma::uword reps,
                                  double alpha, double delta, arma::uword draws_j,
                                  std::uint64_t seed, unsigned threads = 0,
                                  bool with_avg = false);

// Selection-frequency comparison across criteria on the choose-IV design:
// how often each procedure keeps the valid set.
struct SelectionFreqRow {
  DesignCell cell;
  Method method = Method::Fmsc;
  double valid_freq = 0.0;  // fraction selecting the valid set
  arma::uword reps = 0;
  arma::uword failures = 0;
};

struct SelectionFreqTable {
  std::vector<SelectionFreqRow> rows;
  arma::uword cells_flagged = 0;
};

SelectionFreqTable criteria_compare_experiment(const std::vector<DesignCell>& grid,
                                               arma::uword reps, std::uint64_t seed,
                                               unsigned threads = 0);

}  // namespace fmsc
