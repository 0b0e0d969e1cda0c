#pragma once

// Core data containers shared by every other module: datasets, candidate
// moment sets, selection matrices, and estimation results.

#include <armadillo>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fmsc {

// Error taxonomy. Everything derives from std::runtime_error so callers can
// catch broadly; the distinct types let tests pin down failure modes.
struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct rank_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct weak_instrument_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct degenerate_variance_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct not_psd_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct unsupported_config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relative singular-value tolerance used by all rank checks.
inline constexpr double kRankTol = 1e-10;

// How a dataset's suspect block is wired.
//   ChooseIv:  Z2 holds extra instruments of doubtful validity.
//   OlsVsTsls: Z2 duplicates the (scalar) regressor x; the suspect moment is
//              E[x eps] = 0 and the "OLS candidate" uses it alone.
enum class ProblemKind { ChooseIv, OlsVsTsls };

enum class CandidateKind { OlsCandidate, TslsCandidate, IvSubset };

// A candidate specification: which of the p+q moment conditions it uses.
// Conditions are indexed 0..p+q-1, baseline block first.
struct MomentSet {
  std::string id;
  std::vector<arma::uword> included;  // strictly increasing
  CandidateKind kind = CandidateKind::IvSubset;

  arma::uword size() const { return static_cast<arma::uword>(included.size()); }
};

// Dataset for the linear IV model y = X beta + eps, X = Z Pi + V.
struct Dataset {
  arma::vec y;
  arma::mat X;   // n x r
  arma::mat Z1;  // n x p baseline (assumed valid) instruments
  arma::mat Z2;  // n x q suspect block
  ProblemKind kind = ProblemKind::ChooseIv;

  arma::uword n() const { return y.n_elem; }
  arma::uword r() const { return X.n_cols; }
  arma::uword p() const { return Z1.n_cols; }
  arma::uword q() const { return Z2.n_cols; }
  arma::mat Z() const { return arma::join_rows(Z1, Z2); }
};

// Validates finiteness, shape, identification counts and column ranks
// (relative SVD tolerance kRankTol). Throws dimension_error / rank_error.
Dataset make_dataset(arma::vec y, arma::mat X, arma::mat Z1, arma::mat Z2,
                     ProblemKind kind = ProblemKind::ChooseIv);

// The 0/1 matrix Xi_S selecting the rows of a full moment vector that a
// candidate uses. Stored as the index list; dense() materializes it.
struct SelectionMatrix {
  arma::uword cols = 0;  // p + q
  arma::uvec idx;        // ascending, one entry per row

  arma::uword rows() const { return idx.n_elem; }
  arma::mat dense() const;
  // Xi * v
  arma::vec select(const arma::vec& v) const { return v.elem(idx); }
  // Xi * A * Xi'
  arma::mat select_sym(const arma::mat& a) const { return a.submat(idx, idx); }
  // Xi' * w: embed a |S|-vector into p+q coordinates, zero elsewhere
  arma::vec scatter(const arma::vec& w) const;
};

SelectionMatrix selection_matrix(const MomentSet& s, arma::uword p, arma::uword q);

// A named group of suspect-instrument indices (into 0..q-1) that enters or
// leaves candidates as a unit.
struct SuspectBlock {
  std::string name;
  std::vector<arma::uword> indices;
};

enum class CandidateMode { AllSubsets, Blocks };

// Enumerates candidate moment sets over the suspect block structure: every
// candidate contains the full baseline; the valid set comes first and the
// full set last. AllSubsets treats each suspect index as its own block.
std::vector<MomentSet> candidate_lattice(arma::uword p, arma::uword q, CandidateMode mode,
                                         const std::vector<SuspectBlock>& blocks = {});

// The two candidates of the OLS-vs-TSLS problem: the OLS candidate holds the
// single suspect moment (the regressor-orthogonality condition), the TSLS
// candidate the baseline block. Not nested, hence not a lattice.
std::vector<MomentSet> ols_tsls_candidates(arma::uword p, arma::uword q);

struct EstimateResult {
  arma::vec beta;       // r
  arma::mat vcov;       // r x r, already divided by n
  arma::vec se;         // sqrt(diag(vcov))
  arma::vec residuals;  // y - X beta
  double sigma2 = 0.0;  // residual variance, RSS / n
  std::string method;   // "ols" or "tsls"
  std::string moment_set;
};

}  // namespace fmsc
