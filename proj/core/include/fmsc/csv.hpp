#pragma once

// Strict CSV ingestion for analysis datasets (numeric, header row, no missing
// values) and deterministic numeric formatting for all emitted files.

#include <armadillo>

#include <string>
#include <vector>

#include "fmsc/types.hpp"

namespace fmsc {

struct NumericTable {
  std::vector<std::string> columns;
  arma::mat values;  // n rows, one column per header entry

  arma::uword col_index(const std::string& name) const;  // parse_error if absent
  arma::vec col(const std::string& name) const;
  arma::mat cols(const std::vector<std::string>& names) const;
};

// Rejects ragged rows, non-numeric fields, NaNs and empty cells, reporting
// 1-based row and column positions.
NumericTable read_numeric_csv(const std::string& path);

// Shortest decimal representation that round-trips the double exactly.
std::string fmt_num(double x);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace fmsc
