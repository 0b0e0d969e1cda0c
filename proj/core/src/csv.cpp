#include "fmsc/csv.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <unordered_set>

namespace fmsc {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string cell_pos(std::size_t row, std::size_t col) {
  return "row " + std::to_string(row) + ", column " + std::to_string(col);
}

}  // namespace

arma::uword NumericTable::col_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<arma::uword>(i);
  throw parse_error("column '" + name + "' not found");
}

arma::vec NumericTable::col(const std::string& name) const { return values.col(col_index(name)); }

arma::mat NumericTable::cols(const std::vector<std::string>& names) const {
  arma::mat out(values.n_rows, names.size());
  for (std::size_t i = 0; i < names.size(); ++i) out.col(i) = col(names[i]);
  return out;
}

NumericTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);

  NumericTable table;
  std::vector<double> data;
  std::size_t nrows = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields = split_fields(line);
    if (lineno == 1) {
      std::unordered_set<std::string> seen;
      for (std::size_t c = 0; c < fields.size(); ++c) {
        std::string name = trim(fields[c]);
        if (name.empty()) throw parse_error("empty header name at " + cell_pos(1, c + 1));
        if (!seen.insert(name).second)
          throw parse_error("duplicate column '" + name + "' in " + path);
        table.columns.push_back(name);
      }
      continue;
    }
    if (fields.size() != table.columns.size())
      throw parse_error("row " + std::to_string(lineno) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(table.columns.size()));
    for (std::size_t c = 0; c < fields.size(); ++c) {
      std::string f = trim(fields[c]);
      if (f.empty()) throw parse_error("empty cell at " + cell_pos(lineno, c + 1));
      char* end = nullptr;
      double v = std::strtod(f.c_str(), &end);
      if (end != f.c_str() + f.size() || !std::isfinite(v))
        throw parse_error("non-numeric value '" + f + "' at " + cell_pos(lineno, c + 1));
      data.push_back(v);
    }
    ++nrows;
  }
  if (table.columns.empty()) throw parse_error("empty file: " + path);
  if (nrows == 0) throw parse_error("no data rows in " + path);

  table.values.set_size(nrows, table.columns.size());
  std::size_t k = 0;
  for (std::size_t r = 0; r < nrows; ++r)
    for (std::size_t c = 0; c < table.columns.size(); ++c) table.values(r, c) = data[k++];
  return table;
}

std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  if (x == std::floor(x) && std::abs(x) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", x);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  for (const auto& row : rows)
    if (row.size() != header.size())
      throw dimension_error("write_csv: row width does not match header");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw config_error("cannot open " + path + " for writing");
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  out.flush();
  if (!out) throw config_error("write to " + path + " failed");
}

}  // namespace fmsc
