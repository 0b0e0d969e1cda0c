#pragma once

// CSV-driven analysis workflow and the simulation experiment runner backing
// the command line interface. Kept in the library so tests can drive the
// exact code paths the CLI uses.

#include <armadillo>

#include <cstdint>
#include <string>
#include <vector>

#include "fmsc/fmsc.hpp"
#include "fmsc/inference.hpp"
#include "fmsc/simulation.hpp"
#include "fmsc/types.hpp"

namespace fmsc {

enum class OutputFormat { Csv, Json };

struct BlockSpec {
  std::string name;
  std::vector<std::string> columns;

  bool operator==(const BlockSpec&) const = default;
};

struct AnalysisConfig {
  std::string input;
  std::string outcome;
  std::vector<std::string> regressors;
  std::vector<std::string> baseline;
  std::vector<std::string> suspect;      // all-subsets mode: one block per column
  std::vector<BlockSpec> suspect_blocks;  // blocks mode
  std::vector<std::string> targets;      // subset of regressors
  CandidateMode candidate_mode = CandidateMode::AllSubsets;
  bool add_intercept = false;
  double alpha = 0.05;
  double delta = 0.05;
  arma::uword draws_j = 10000;
  arma::uword region_budget = 2000;
  arma::uword search_budget = 2000;
  std::uint64_t seed = 1234;
  unsigned threads = 0;
  std::string out = "fmsc_out";
  OutputFormat format = OutputFormat::Json;

  bool operator==(const AnalysisConfig&) const = default;
};

// key = value lines, '#' comments; lists comma-separated; suspect blocks as
// repeated "suspect_block <name> = col, col" lines. parse/serialize round-trip
// to the identical struct.
AnalysisConfig parse_config_text(const std::string& text);
AnalysisConfig parse_config_file(const std::string& path);
std::string serialize_config(const AnalysisConfig& cfg);

// Per-candidate estimates with textbook intervals for every regressor.
struct CandidateEstimateRow {
  std::string candidate;
  std::string coefficient;
  double estimate = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

// The criterion table plus the three interval types for one target.
struct TargetReport {
  std::string target;
  FmscReport fmsc;
  std::vector<std::string> candidate_ids;  // row order of fmsc.rows
  double estimate_fmsc = 0.0;     // FMSC-selected estimate of the target
  double estimate_fmsc_pp = 0.0;  // positive-part selection
  CiResult naive;
  CiResult one_step;
  CiResult two_step;
};

struct AnalyzeReport {
  std::vector<CandidateEstimateRow> estimates;
  std::vector<TargetReport> targets;
  arma::uword n = 0;
  arma::uword n_candidates = 0;
};

AnalyzeReport run_analyze(const AnalysisConfig& cfg);

// Writes estimates.csv / fmsc.csv / intervals.csv, or report.json when the
// format is Json. Returns the list of files written.
std::vector<std::string> write_analyze_report(const AnalyzeReport& report,
                                              const AnalysisConfig& cfg);

// Synthetic dataset fixture: writes a CSV drawn from one of the simulation
// designs, with columns y, x, z1..z3 and w (choose-IV only).
struct FixtureSpec {
  ProblemFamily family = ProblemFamily::ChooseIv;
  double pi_or_gamma = 0.4;
  double rho = 0.0;
  arma::uword n = 500;
  std::uint64_t seed = 1;
  std::string out = "fixture.csv";
};
void write_fixture(const FixtureSpec& spec);

struct SimulateConfig {
  std::string experiment;  // rmse-ols-tsls, rmse-choose-iv, coverage-ols-tsls,
                           // coverage-choose-iv, criteria-compare
  arma::uword reps = 2000;
  double alpha = 0.05;
  double delta = 0.05;
  arma::uword draws_j = 1000;
  std::uint64_t seed = 1234;
  unsigned threads = 0;
  std::string out = "fmsc_out";
  // optional single-cell override like "N=50,gamma=0.6,rho=0.5"
  std::string cells;
};

// Runs the experiment and writes one long-format CSV; returns its path.
std::string run_simulate(const SimulateConfig& cfg);

}  // namespace fmsc
