#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "matrix.hpp"
#include "probit.hpp"

// Plain CSV ingestion for the command line tool. Headered, comma separated,
// unquoted numeric fields. The response column must be exactly 0 or 1.
// Predictors are optionally centered and rescaled to standard deviation 0.5;
// the transform is kept so new rows can be mapped into the same design space.

namespace sunprobit {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

namespace detail {

inline std::string trim_cell(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(trim_cell(cur));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

} // namespace detail

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
    if (detail::trim_cell(line).empty()) continue;
    std::vector<std::string> cells = detail::split_line(line);
    if (table.header.empty()) {
      for (auto& c : cells)
        if (c.empty())
          throw ParseError(path + ": empty column name in header (line " +
                           std::to_string(lineno) + ")");
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size())
      throw ParseError(path + ": line " + std::to_string(lineno) + " has " +
                       std::to_string(cells.size()) + " fields, header has " +
                       std::to_string(table.header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      try {
        std::size_t used = 0;
        row[j] = std::stod(cells[j], &used);
        if (used != cells[j].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(lineno) + ", column '" +
                         table.header[j] + "': cannot parse '" + cells[j] + "' as a number");
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw ParseError(path + ": no header row");
  return table;
}

struct IngestOptions {
  std::string response = "y";
  bool intercept = true;
  bool standardize = true;
};

struct Design {
  BinaryDataset data;
  std::vector<std::string> names;  // design columns, "(intercept)" first when present
  std::string response_name;
  bool intercept = true;
  // per design column affine map x -> (x - center) * scale
  std::vector<double> center, scale;
  std::vector<std::string> constant_columns;  // could not be rescaled
};

inline Design ingest_csv(const std::string& path, const IngestOptions& opts = {}) {
  CsvTable table = read_csv_table(path);
  std::size_t yc = table.header.size();
  for (std::size_t j = 0; j < table.header.size(); ++j)
    if (table.header[j] == opts.response) { yc = j; break; }
  if (yc == table.header.size())
    throw ConfigError(path + ": no response column named '" + opts.response + "'");
  const std::size_t n = table.rows.size();
  if (n == 0) throw ParseError(path + ": no data rows");
  const std::size_t raw_p = table.header.size() - 1;
  if (raw_p == 0 && !opts.intercept)
    throw ConfigError(path + ": no predictor columns and no intercept requested");

  Design d;
  d.response_name = opts.response;
  d.intercept = opts.intercept;
  const std::size_t p = raw_p + (opts.intercept ? 1 : 0);
  d.data.X.resize(n, p);
  d.data.y.resize(n);
  d.names.reserve(p);
  d.center.assign(p, 0.0);
  d.scale.assign(p, 1.0);

  std::size_t col = 0;
  if (opts.intercept) {
    d.names.push_back("(intercept)");
    d.data.X.col(0).setOnes();
    col = 1;
  }
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j == yc) continue;
    d.names.push_back(table.header[j]);
    for (std::size_t i = 0; i < n; ++i) d.data.X(i, col) = table.rows[i][j];
    ++col;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double v = table.rows[i][yc];
    if (v != 0.0 && v != 1.0)
      throw NonBinaryResponse(path + ": response in data row " + std::to_string(i + 1) +
                              " is " + std::to_string(v) + ", expected 0 or 1");
    d.data.y[i] = static_cast<int>(v);
  }

  if (opts.standardize) {
    for (std::size_t j = (opts.intercept ? 1 : 0); j < p; ++j) {
      auto c = d.data.X.col(j);
      double mean = c.mean();
      double sd = n > 1 ? std::sqrt((c.array() - mean).square().sum() /
                                    static_cast<double>(n - 1))
                        : 0.0;
      d.center[j] = mean;
      if (sd > 0.0) {
        d.scale[j] = 0.5 / sd;
      } else {
        d.scale[j] = 1.0;
        d.constant_columns.push_back(d.names[j]);
      }
      c = (c.array() - d.center[j]) * d.scale[j];
    }
  }
  return d;
}

// Maps rows of a new table (matched by predictor name, response ignored if
// present) through the stored transform into design space.
inline Matrix design_rows(const Design& d, const CsvTable& table) {
  const std::size_t p = d.names.size();
  std::vector<std::size_t> src(p, 0);
  for (std::size_t j = (d.intercept ? 1 : 0); j < p; ++j) {
    std::size_t k = table.header.size();
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (table.header[c] == d.names[j]) { k = c; break; }
    if (k == table.header.size())
      throw ConfigError("new data: missing predictor column '" + d.names[j] + "'");
    src[j] = k;
  }
  Matrix out(table.rows.size(), p);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (d.intercept) out(i, 0) = 1.0;
    for (std::size_t j = (d.intercept ? 1 : 0); j < p; ++j)
      out(i, j) = (table.rows[i][src[j]] - d.center[j]) * d.scale[j];
  }
  return out;
}

inline void write_draws_csv(const std::string& path, const std::vector<std::string>& names,
                            const Matrix& draws) {
  if (static_cast<Eigen::Index>(names.size()) != draws.cols())
    throw DimensionMismatch("write_draws_csv: name count does not match draw columns");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (std::size_t j = 0; j < names.size(); ++j)
    out << (j ? "," : "") << names[j];
  out << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", draws(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
}

} // namespace sunprobit
