#include "fmsc/types.hpp"

#include <algorithm>
#include <utility>

namespace fmsc {

namespace {

// full column rank up to a relative singular-value tolerance
bool full_column_rank(const arma::mat& m) {
  if (m.n_cols == 0) return true;
  arma::vec s = arma::svd(m);
  return s.n_elem == m.n_cols && s.min() > kRankTol * s.max();
}

void check_moment_set(const MomentSet& s, arma::uword p, arma::uword q) {
  if (s.included.empty()) throw dimension_error("moment set '" + s.id + "' is empty");
  for (std::size_t i = 0; i < s.included.size(); ++i) {
    if (s.included[i] >= p + q)
      throw dimension_error("moment set '" + s.id + "': index out of range");
    if (i > 0 && s.included[i] <= s.included[i - 1])
      throw dimension_error("moment set '" + s.id + "': indices must be strictly increasing");
  }
  if (s.kind == CandidateKind::IvSubset) {
    // subset candidates keep the whole baseline block
    for (arma::uword j = 0; j < p; ++j) {
      if (std::find(s.included.begin(), s.included.end(), j) == s.included.end())
        throw dimension_error("moment set '" + s.id + "': baseline condition " +
                              std::to_string(j) + " missing");
    }
  }
}

}  // namespace

Dataset make_dataset(arma::vec y, arma::mat X, arma::mat Z1, arma::mat Z2, ProblemKind kind) {
  Dataset d;
  d.y = std::move(y);
  d.X = std::move(X);
  d.Z1 = std::move(Z1);
  d.Z2 = std::move(Z2);
  d.kind = kind;

  const arma::uword n = d.n(), r = d.r(), p = d.p(), q = d.q();
  if (d.X.n_rows != n || d.Z1.n_rows != n || (q > 0 && d.Z2.n_rows != n))
    throw dimension_error("dataset: row counts disagree");
  if (r == 0 || p == 0) throw dimension_error("dataset: X and Z1 must be non-empty");
  if (!(n > p + q)) throw dimension_error("dataset: need n > p + q");
  if (!(p + q >= r) || !(p >= r))
    throw dimension_error("dataset: identification requires p >= r");
  if (!d.y.is_finite() || !d.X.is_finite() || !d.Z1.is_finite() || !d.Z2.is_finite())
    throw dimension_error("dataset: non-finite values");
  if (!full_column_rank(d.X)) throw rank_error("dataset: X is column rank deficient");
  if (!full_column_rank(d.Z())) throw rank_error("dataset: [Z1|Z2] is column rank deficient");
  return d;
}

arma::mat SelectionMatrix::dense() const {
  arma::mat m(rows(), cols, arma::fill::zeros);
  for (arma::uword k = 0; k < rows(); ++k) m(k, idx(k)) = 1.0;
  return m;
}

arma::vec SelectionMatrix::scatter(const arma::vec& w) const {
  if (w.n_elem != rows()) throw dimension_error("scatter: length mismatch");
  arma::vec out(cols, arma::fill::zeros);
  out.elem(idx) = w;
  return out;
}

SelectionMatrix selection_matrix(const MomentSet& s, arma::uword p, arma::uword q) {
  check_moment_set(s, p, q);
  SelectionMatrix xi;
  xi.cols = p + q;
  xi.idx = arma::uvec(s.included);
  return xi;
}

std::vector<MomentSet> candidate_lattice(arma::uword p, arma::uword q, CandidateMode mode,
                                         const std::vector<SuspectBlock>& blocks) {
  if (q < 1) throw config_error("candidate_lattice: need at least one suspect condition");

  std::vector<SuspectBlock> use;
  if (mode == CandidateMode::AllSubsets) {
    for (arma::uword j = 0; j < q; ++j)
      use.push_back({"s" + std::to_string(j), {j}});
  } else {
    if (blocks.empty()) throw config_error("candidate_lattice: blocks mode needs blocks");
    std::vector<bool> seen(q, false);
    for (const auto& b : blocks) {
      if (b.indices.empty()) throw config_error("block '" + b.name + "' is empty");
      for (arma::uword j : b.indices) {
        if (j >= q) throw config_error("block '" + b.name + "': suspect index out of range");
        if (seen[j]) throw config_error("blocks do not partition the suspect indices");
        seen[j] = true;
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw config_error("blocks do not partition the suspect indices");
    use = blocks;
  }

  const std::size_t nb = use.size();
  std::vector<unsigned long> masks(1ul << nb);
  for (std::size_t m = 0; m < masks.size(); ++m) masks[m] = m;
  std::stable_sort(masks.begin(), masks.end(), [](unsigned long a, unsigned long b) {
    int ca = __builtin_popcountl(a), cb = __builtin_popcountl(b);
    return ca != cb ? ca < cb : a < b;
  });

  std::vector<MomentSet> out;
  out.reserve(masks.size());
  for (unsigned long mask : masks) {
    MomentSet s;
    s.kind = CandidateKind::IvSubset;
    for (arma::uword j = 0; j < p; ++j) s.included.push_back(j);
    std::vector<std::string> names;
    for (std::size_t b = 0; b < nb; ++b) {
      if (mask & (1ul << b)) {
        names.push_back(use[b].name);
        for (arma::uword j : use[b].indices) s.included.push_back(p + j);
      }
    }
    std::sort(s.included.begin(), s.included.end());
    if (mask == 0) {
      s.id = "valid";
    } else if (mask + 1 == (1ul << nb)) {
      s.id = "full";
    } else {
      s.id = names[0];
      for (std::size_t i = 1; i < names.size(); ++i) s.id += "+" + names[i];
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<MomentSet> ols_tsls_candidates(arma::uword p, arma::uword q) {
  if (q != 1) throw config_error("ols_tsls_candidates: expected a single suspect moment");
  MomentSet ols;
  ols.id = "OLS";
  ols.kind = CandidateKind::OlsCandidate;
  ols.included = {p};
  MomentSet tsls;
  tsls.id = "TSLS";
  tsls.kind = CandidateKind::TslsCandidate;
  for (arma::uword j = 0; j < p; ++j) tsls.included.push_back(j);
  return {ols, tsls};
}

}  // namespace fmsc
