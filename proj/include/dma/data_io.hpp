#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dma/errors.hpp"

namespace dma {

// A parsed CSV: named numeric columns (missing entries are NaN) plus row
// labels taken from the time column when one exists, row numbers otherwise.
struct Dataset {
  std::vector<std::string> names;          // data columns only
  std::vector<Eigen::VectorXd> columns;    // parallel to names
  std::vector<std::string> time;           // length rows
  int rows = 0;

  const Eigen::VectorXd& column(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return columns[i];
    throw DataError("column '" + name + "' not found in the dataset");
  }
  bool has_column(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
  }
};

struct Term {
  std::string name;
  int lag = 0;
};

struct DesignSpec {
  std::string response;
  std::vector<Term> terms;
  bool intercept = true;
};

// Design ready for the engine: aligned, no missing entries. offset counts
// the leading dataset rows consumed by lag alignment, so design row t
// corresponds to dataset row t + offset.
struct Design {
  Eigen::VectorXd y;
  Eigen::MatrixXd F;
  std::vector<std::string> names;  // intercept first when present
  std::vector<std::string> time;   // labels for the design rows
  int offset = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool is_missing(const std::string& field) {
  return field.empty() || field == "NA";
}

inline bool looks_like_date(const std::string& field) {
  // YYYY-MM-DD
  if (field.size() != 10 || field[4] != '-' || field[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (!std::isdigit(static_cast<unsigned char>(field[i]))) return false;
  return true;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline double parse_number(const std::string& field, int row, const std::string& col) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0') {
    std::ostringstream msg;
    msg << "cannot parse '" << field << "' as a number (row " << row << ", column "
        << col << ")";
    throw DataError(msg.str());
  }
  return v;
}

}  // namespace detail

// Load a comma-separated file with a mandatory header row. Empty fields and
// NA are missing. The time column is either named explicitly, or detected:
// a column called time/date (case-insensitive), or a first column holding
// YYYY-MM-DD dates. Its values become row labels; otherwise rows are
// labeled 1..T.
inline Dataset load_csv(const std::string& path,
                        const std::optional<std::string>& time_column = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("data file '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = detail::split_csv_line(line);
  for (const std::string& h : header)
    if (h.empty()) throw DataError("data file has an empty column name in its header");
  for (std::size_t i = 0; i < header.size(); ++i)
    for (std::size_t j = i + 1; j < header.size(); ++j)
      if (header[i] == header[j])
        throw DataError("duplicate column name '" + header[i] + "' in the header");

  std::vector<std::vector<std::string>> cells(header.size());
  int rows = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "row at line " << lineno << " has " << fields.size() << " fields, expected "
          << header.size();
      throw DataError(msg.str());
    }
    for (std::size_t c = 0; c < fields.size(); ++c)
      cells[c].push_back(std::move(fields[c]));
    ++rows;
  }
  if (rows == 0) throw DataError("data file '" + path + "' has no data rows");

  // Pick the time column.
  std::ptrdiff_t time_idx = -1;
  if (time_column.has_value()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == *time_column) time_idx = static_cast<std::ptrdiff_t>(c);
    if (time_idx < 0)
      throw DataError("time column '" + *time_column + "' not found in the dataset");
  } else {
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string l = detail::lower(header[c]);
      if (l == "time" || l == "date") {
        time_idx = static_cast<std::ptrdiff_t>(c);
        break;
      }
    }
    if (time_idx < 0 && !header.empty()) {
      bool all_dates = true;
      for (const std::string& v : cells[0])
        if (!detail::looks_like_date(v)) {
          all_dates = false;
          break;
        }
      if (all_dates) time_idx = 0;
    }
  }

  Dataset ds;
  ds.rows = rows;
  if (time_idx >= 0) {
    ds.time = cells[static_cast<std::size_t>(time_idx)];
  } else {
    ds.time.reserve(static_cast<std::size_t>(rows));
    for (int r = 1; r <= rows; ++r) ds.time.push_back(std::to_string(r));
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (static_cast<std::ptrdiff_t>(c) == time_idx) continue;
    Eigen::VectorXd col(rows);
    for (int r = 0; r < rows; ++r) {
      const std::string& field = cells[c][static_cast<std::size_t>(r)];
      col[r] = detail::is_missing(field)
                   ? std::numeric_limits<double>::quiet_NaN()
                   : detail::parse_number(field, r + 2, header[c]);
    }
    ds.names.push_back(header[c]);
    ds.columns.push_back(std::move(col));
  }
  if (ds.names.empty()) throw DataError("data file has no numeric columns");
  return ds;
}

// Shift a series back by k places: out[t] = in[t-k], the first k entries
// undefined (NaN).
inline Eigen::VectorXd lag(const Eigen::VectorXd& series, int k) {
  if (k < 0) throw ConfigError("lag must be non-negative");
  const Eigen::Index T = series.size();
  Eigen::VectorXd out =
      Eigen::VectorXd::Constant(T, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = k; t < T; ++t) out[t] = series[t - k];
  return out;
}

// Assemble the response and design matrix. Row t of the design uses
// information dated t - lag for every term; the first max(lag) rows are
// dropped. Any missing value that survives alignment is an error, never
// imputed.
inline Design build_design(const Dataset& ds, const DesignSpec& spec) {
  if (spec.response.empty()) throw ConfigError("no response column given");
  if (!ds.has_column(spec.response))
    throw DataError("response column '" + spec.response + "' not found in the dataset");
  if (!spec.intercept && spec.terms.empty())
    throw ConfigError("design needs an intercept or at least one term");

  int max_lag = 0;
  for (const Term& term : spec.terms) {
    if (term.lag < 0) throw ConfigError("term lag must be non-negative");
    if (!ds.has_column(term.name))
      throw DataError("term column '" + term.name + "' not found in the dataset");
    max_lag = std::max(max_lag, term.lag);
  }

  const int T = ds.rows - max_lag;
  if (T < 1) throw DataError("no usable rows remain after lag alignment");

  Design design;
  design.offset = max_lag;
  const int n = (spec.intercept ? 1 : 0) + static_cast<int>(spec.terms.size());
  design.F.resize(T, n);
  design.y.resize(T);
  design.time.assign(ds.time.begin() + max_lag, ds.time.end());

  const Eigen::VectorXd& y_full = ds.column(spec.response);
  for (int t = 0; t < T; ++t) {
    const double v = y_full[t + max_lag];
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "missing value in response '" << spec.response << "' at row "
          << t + max_lag + 1;
      throw DataError(msg.str());
    }
    design.y[t] = v;
  }

  int col = 0;
  if (spec.intercept) {
    design.names.push_back("intercept");
    design.F.col(col++).setOnes();
  }
  for (const Term& term : spec.terms) {
    const Eigen::VectorXd lagged = lag(ds.column(term.name), term.lag);
    for (int t = 0; t < T; ++t) {
      const double v = lagged[t + max_lag];
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "missing value in term '" << term.name << "' (lag " << term.lag
            << ") at row " << t + max_lag + 1;
        throw DataError(msg.str());
      }
      design.F(t, col) = v;
    }
    design.names.push_back(term.lag > 0 ? term.name + ":" + std::to_string(term.lag)
                                        : term.name);
    ++col;
  }
  return design;
}

}  // namespace dma
